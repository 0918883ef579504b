#include "lukan/nn.hpp"

#include <cmath>
#include <string>

#include "lukan/error.hpp"

namespace lukan {

namespace {

void require_size(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw ShapeError(std::string(what) + ": expected length " + std::to_string(want) + ", got " +
                         std::to_string(got));
    }
}

}  // namespace

// ---------------------------------------------------------------- linear

LinearParams LinearParams::zeros(std::size_t in_dim, std::size_t out_dim) {
    return {Matrix(in_dim, out_dim), std::vector<double>(out_dim, 0.0)};
}

Matrix linear_forward(const Matrix& x, const LinearParams& p) {
    require_size(p.bias.size(), p.out_dim(), "linear bias");
    Matrix y = matmul(x, p.weight);
    for (std::size_t i = 0; i < y.rows(); ++i) {
        auto row = y.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += p.bias[j];
    }
    return y;
}

Matrix linear_backward(const Matrix& x, const LinearParams& p, const Matrix& dy, LinearParams& grads) {
    require_shape(dy, x.rows(), p.out_dim(), "linear_backward dy");
    matmul_tn_acc(x, dy, grads.weight);
    for (std::size_t i = 0; i < dy.rows(); ++i) {
        const auto row = dy.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) grads.bias[j] += row[j];
    }
    return matmul_nt(dy, p.weight);
}

// ---------------------------------------------------------------- KAN

KanLayerParams KanLayerParams::zeros(std::size_t n, int degree, BasisKind basis, bool squash_input) {
    if (degree < 0) throw ConfigError("KAN degree must be >= 0");
    KanLayerParams p;
    p.gamma = Matrix(n, n * (static_cast<std::size_t>(degree) + 1));
    p.degree = degree;
    p.basis = basis;
    p.squash_input = squash_input;
    return p;
}

Matrix kan_forward(const Matrix& z, const KanLayerParams& p, KanCache* cache) {
    const std::size_t n = p.size();
    const std::size_t terms = p.terms();
    require_shape(p.gamma, n, n * terms, "kan gamma");
    require_shape(z, n, z.cols(), "kan_forward input");
    const std::size_t d = z.cols();

    KanCache local;
    KanCache& c = cache ? *cache : local;
    c.u = Matrix(n, d);
    c.basis = Matrix(n * terms, d);
    c.dbasis = Matrix(n * terms, d);

    std::vector<double> vals(terms), ders(terms);
    for (std::size_t pi = 0; pi < n; ++pi) {
        for (std::size_t j = 0; j < d; ++j) {
            const double u = p.squash_input ? std::tanh(z(pi, j)) : z(pi, j);
            c.u(pi, j) = u;
            eval_basis_into(p.basis, u, vals, ders);
            for (std::size_t r = 0; r < terms; ++r) {
                c.basis(pi * terms + r, j) = vals[r];
                c.dbasis(pi * terms + r, j) = ders[r];
            }
        }
    }

    Matrix out = matmul(p.gamma, c.basis);
    if (!out.all_finite()) throw NumericError("kan_forward: non-finite activation");
    return out;
}

Matrix kan_backward(const KanCache& cache, const KanLayerParams& p, const Matrix& dy, KanLayerParams& grads) {
    const std::size_t n = p.size();
    const std::size_t terms = p.terms();
    require_shape(dy, n, cache.u.cols(), "kan_backward dy");
    matmul_nt_acc(dy, cache.basis, grads.gamma);

    const Matrix dbasis_out = matmul_tn(p.gamma, dy);  // N(R+1) x D
    Matrix dz(n, dy.cols());
    for (std::size_t pi = 0; pi < n; ++pi) {
        for (std::size_t j = 0; j < dy.cols(); ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < terms; ++r) s += dbasis_out(pi * terms + r, j) * cache.dbasis(pi * terms + r, j);
            if (p.squash_input) {
                const double u = cache.u(pi, j);
                s *= 1.0 - u * u;
            }
            dz(pi, j) = s;
        }
    }
    return dz;
}

// ---------------------------------------------------------------- LayerNorm

LayerNormParams LayerNormParams::identity(std::size_t n, double epsilon) {
    if (!(epsilon > 0.0)) throw ConfigError("LayerNorm epsilon must be > 0");
    return {std::vector<double>(n, 1.0), std::vector<double>(n, 0.0), epsilon};
}

LayerNormParams LayerNormParams::zeros(std::size_t n, double epsilon) {
    return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), epsilon};
}

Matrix layernorm_forward(const Matrix& z, const LayerNormParams& p, LayerNormCache* cache) {
    const std::size_t n = z.rows();
    const std::size_t d = z.cols();
    if (n < 2) throw ShapeError("layernorm_forward: need at least 2 temporal positions");
    require_size(p.gain.size(), n, "layernorm gain");
    require_size(p.shift.size(), n, "layernorm shift");

    LayerNormCache local;
    LayerNormCache& c = cache ? *cache : local;
    c.xhat = Matrix(n, d);
    c.inv_std.assign(d, 0.0);

    const double nd = static_cast<double>(n);
    Matrix out(n, d);
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += z(i, j);
        mean /= nd;
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dv = z(i, j) - mean;
            var += dv * dv;
        }
        var /= nd;
        const double inv_std = 1.0 / std::sqrt(var + p.epsilon);
        c.inv_std[j] = inv_std;
        for (std::size_t i = 0; i < n; ++i) {
            const double xh = (z(i, j) - mean) * inv_std;
            c.xhat(i, j) = xh;
            out(i, j) = p.gain[i] * xh + p.shift[i];
        }
    }
    return out;
}

Matrix layernorm_backward(const LayerNormCache& cache, const LayerNormParams& p, const Matrix& dy,
                          LayerNormParams& grads) {
    const std::size_t n = cache.xhat.rows();
    const std::size_t d = cache.xhat.cols();
    require_shape(dy, n, d, "layernorm_backward dy");
    const double nd = static_cast<double>(n);

    Matrix dz(n, d);
    std::vector<double> dxhat(n);
    for (std::size_t j = 0; j < d; ++j) {
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double g = dy(i, j);
            grads.gain[i] += g * cache.xhat(i, j);
            grads.shift[i] += g;
            dxhat[i] = g * p.gain[i];
            sum_dxhat += dxhat[i];
            sum_dxhat_xhat += dxhat[i] * cache.xhat(i, j);
        }
        const double scale = cache.inv_std[j] / nd;
        for (std::size_t i = 0; i < n; ++i)
            dz(i, j) = scale * (nd * dxhat[i] - sum_dxhat - cache.xhat(i, j) * sum_dxhat_xhat);
    }
    return dz;
}

// ---------------------------------------------------------------- block

Matrix block_forward(const Matrix& z, const KanLayerParams& kan, const LayerNormParams& ln, BlockCache* cache) {
    const Matrix k = kan_forward(z, kan, cache ? &cache->kan : nullptr);
    Matrix out = layernorm_forward(k, ln, cache ? &cache->ln : nullptr);
    require_shape(out, z.rows(), z.cols(), "block residual");
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += z.data()[i];
    return out;
}

Matrix block_backward(const BlockCache& cache, const KanLayerParams& kan, const LayerNormParams& ln,
                      const Matrix& dy, KanLayerParams& kan_grads, LayerNormParams& ln_grads) {
    const Matrix dk = layernorm_backward(cache.ln, ln, dy, ln_grads);
    Matrix dz = kan_backward(cache.kan, kan, dk, kan_grads);
    for (std::size_t i = 0; i < dz.size(); ++i) dz.data()[i] += dy.data()[i];
    return dz;
}

}  // namespace lukan
