#include "lukan/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "lukan/error.hpp"

namespace lukan {

namespace {

std::string shape_str(std::size_t r, std::size_t c) {
    return std::to_string(r) + "x" + std::to_string(c);
}

void check(bool ok, const char* op, const Matrix& a, const Matrix& b) {
    if (!ok) {
        throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.rows(), a.cols()) + " and " +
                         shape_str(b.rows(), b.cols()));
    }
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    check(a.cols() == b.rows(), "matmul", a, b);
    Matrix c(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.data() + i * n;
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* bk = b.data() + k * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& c) {
    check(a.rows() == b.rows(), "matmul_tn", a, b);
    require_shape(c, a.cols(), b.cols(), "matmul_tn output");
    const std::size_t n = b.cols();
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* bk = b.data() + k * n;
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a(k, i);
            if (aki == 0.0) continue;
            double* ci = c.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aki * bk[j];
        }
    }
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    Matrix c(a.cols(), b.cols());
    matmul_tn_acc(a, b, c);
    return c;
}

void matmul_nt_acc(const Matrix& a, const Matrix& b, Matrix& c) {
    check(a.cols() == b.cols(), "matmul_nt", a, b);
    require_shape(c, a.rows(), b.rows(), "matmul_nt output");
    const std::size_t inner = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ai = a.data() + i * inner;
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* bj = b.data() + j * inner;
            double s = 0.0;
            for (std::size_t k = 0; k < inner; ++k) s += ai[k] * bj[k];
            c(i, j) += s;
        }
    }
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.rows());
    matmul_nt_acc(a, b, c);
    return c;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
    if (x.size() != a.cols()) {
        throw ShapeError("matvec: matrix is " + shape_str(a.rows(), a.cols()) + ", vector has length " +
                         std::to_string(x.size()));
    }
    std::vector<double> y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

std::vector<double> matvec_t(const Matrix& a, std::span<const double> x) {
    if (x.size() != a.rows()) {
        throw ShapeError("matvec_t: matrix is " + shape_str(a.rows(), a.cols()) + ", vector has length " +
                         std::to_string(x.size()));
    }
    std::vector<double> y(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) y[j] += a(i, j) * x[i];
    return y;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    check(a.rows() == b.rows() && a.cols() == b.cols(), "max_abs_diff", a, b);
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, const std::string& what) {
    if (m.rows() != rows || m.cols() != cols) {
        throw ShapeError(what + ": expected " + shape_str(rows, cols) + ", got " + shape_str(m.rows(), m.cols()));
    }
}

}  // namespace lukan
