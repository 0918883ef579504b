#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace lukan {

// Dense row-major matrix of doubles. Small enough (L, N ~ 50) that plain
// loops with i-k-j ordering are all we need.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> flat() { return data_; }
    std::span<const double> flat() const { return data_; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    void fill(double v);
    Matrix transposed() const;
    bool all_finite() const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
// C = A^T * B
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// C = A * B^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);

// C += A^T * B, C += A * B^T (shape-checked)
void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& c);
void matmul_nt_acc(const Matrix& a, const Matrix& b, Matrix& c);

// y = A * x
std::vector<double> matvec(const Matrix& a, std::span<const double> x);
// y = A^T * x
std::vector<double> matvec_t(const Matrix& a, std::span<const double> x);

double max_abs_diff(const Matrix& a, const Matrix& b);

// Throws ShapeError with `what` and both shapes when they differ.
void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, const std::string& what);

}  // namespace lukan
