#pragma once

#include <cstddef>
#include <vector>

#include "lukan/matrix.hpp"
#include "lukan/polybasis.hpp"

namespace lukan {

// Every backward function *accumulates* parameter cotangents into `grads`
// (so a batch can be reduced into one buffer) and returns the input
// cotangent. Gradient structs reuse the parameter types.

struct LinearParams {
    Matrix weight;              // in_dim x out_dim
    std::vector<double> bias;   // out_dim

    static LinearParams zeros(std::size_t in_dim, std::size_t out_dim);
    std::size_t in_dim() const { return weight.rows(); }
    std::size_t out_dim() const { return weight.cols(); }
};

Matrix linear_forward(const Matrix& x, const LinearParams& p);
Matrix linear_backward(const Matrix& x, const LinearParams& p, const Matrix& dy, LinearParams& grads);

// One KAN layer acting along the temporal axis: a matrix of N x N learnable
// univariate functions phi_{q,p}(u) = sum_r gamma[q,p,r] B_r(u), shared by
// all D channels.
struct KanLayerParams {
    // N x (N * (R+1)); entry (q, p*(R+1) + r) is gamma[q,p,r].
    Matrix gamma;
    int degree = 3;
    BasisKind basis = BasisKind::Lucas;
    bool squash_input = true;

    static KanLayerParams zeros(std::size_t n, int degree, BasisKind basis, bool squash_input);
    std::size_t size() const { return gamma.rows(); }
    std::size_t terms() const { return static_cast<std::size_t>(degree) + 1; }
    double& at(std::size_t q, std::size_t p, std::size_t r) { return gamma(q, p * terms() + r); }
    double at(std::size_t q, std::size_t p, std::size_t r) const { return gamma(q, p * terms() + r); }
};

struct KanCache {
    Matrix u;       // N x D, basis argument (tanh(z) or z)
    Matrix basis;   // N(R+1) x D, B_r(u[p,j]) at row p*(R+1)+r
    Matrix dbasis;  // N(R+1) x D, B_r'(u[p,j])
};

// Throws NumericError if any output is non-finite.
Matrix kan_forward(const Matrix& z, const KanLayerParams& p, KanCache* cache = nullptr);
Matrix kan_backward(const KanCache& cache, const KanLayerParams& p, const Matrix& dy, KanLayerParams& grads);

// Normalizes each channel (column) over the N temporal positions, then
// applies per-position gain and shift.
struct LayerNormParams {
    std::vector<double> gain;   // N
    std::vector<double> shift;  // N
    double epsilon = 1e-5;

    static LayerNormParams identity(std::size_t n, double epsilon = 1e-5);
    static LayerNormParams zeros(std::size_t n, double epsilon = 1e-5);
    std::size_t size() const { return gain.size(); }
};

struct LayerNormCache {
    Matrix xhat;                  // normalized input, N x D
    std::vector<double> inv_std;  // per column
};

Matrix layernorm_forward(const Matrix& z, const LayerNormParams& p, LayerNormCache* cache = nullptr);
Matrix layernorm_backward(const LayerNormCache& cache, const LayerNormParams& p, const Matrix& dy,
                          LayerNormParams& grads);

// LN(KAN(Z)) + Z
struct BlockCache {
    KanCache kan;
    LayerNormCache ln;
};

Matrix block_forward(const Matrix& z, const KanLayerParams& kan, const LayerNormParams& ln,
                     BlockCache* cache = nullptr);
Matrix block_backward(const BlockCache& cache, const KanLayerParams& kan, const LayerNormParams& ln,
                      const Matrix& dy, KanLayerParams& kan_grads, LayerNormParams& ln_grads);

}  // namespace lukan
