#include <cmath>
#include <random>

#include "doctest.h"
#include "lukan/error.hpp"
#include "lukan/nn.hpp"
#include "test_support.hpp"

using namespace lukan;
using lukan::test::dot;
using lukan::test::finite_difference;
using lukan::test::max_rel_error;
using lukan::test::random_matrix;

namespace {

// Random linear functional of the output: f = <probe, op(x)>, so df/dy = probe.
double probe_value(const Matrix& out, const Matrix& probe) { return dot(out.flat(), probe.flat()); }

KanLayerParams random_kan(std::size_t n, int degree, BasisKind basis, bool squash, std::mt19937_64& rng) {
    auto p = KanLayerParams::zeros(n, degree, basis, squash);
    p.gamma = random_matrix(n, n * (degree + 1), rng, 0.3);
    return p;
}

LayerNormParams random_ln(std::size_t n, std::mt19937_64& rng) {
    auto p = LayerNormParams::identity(n);
    std::normal_distribution<double> g(0.0, 0.3);
    for (auto& v : p.gain) v += g(rng);
    for (auto& v : p.shift) v = g(rng);
    return p;
}

}  // namespace

TEST_CASE("linear forward examples") {
    LinearParams p = LinearParams::zeros(2, 2);
    p.weight(0, 0) = 1;
    p.weight(0, 1) = 2;
    p.weight(1, 0) = 3;
    p.weight(1, 1) = 4;
    const Matrix y = linear_forward(Matrix::identity(2), p);
    CHECK(y == p.weight);

    std::mt19937_64 rng(1);
    LinearParams q = LinearParams::zeros(3, 4);
    q.bias = {1.5, 1.5, 1.5, 1.5};
    const Matrix z = linear_forward(random_matrix(5, 3, rng), q);
    for (double v : z.flat()) CHECK(v == 1.5);
}

TEST_CASE("linear backward matches finite differences") {
    std::mt19937_64 rng(2);
    Matrix x = random_matrix(3, 4, rng);
    LinearParams p{random_matrix(4, 2, rng), {0.1, -0.2}};
    const Matrix probe = random_matrix(3, 2, rng);

    LinearParams grads = LinearParams::zeros(4, 2);
    const Matrix dx = linear_backward(x, p, probe, grads);
    // cotangent of W is X^T dY
    CHECK(max_abs_diff(grads.weight, matmul_tn(x, probe)) == 0.0);

    auto f = [&] { return probe_value(linear_forward(x, p), probe); };
    CHECK(max_rel_error(grads.weight.flat(), finite_difference(p.weight.flat(), f)) < 1e-6);
    CHECK(max_rel_error(grads.bias, finite_difference(p.bias, f)) < 1e-6);
    CHECK(max_rel_error(dx.flat(), finite_difference(x.flat(), f)) < 1e-6);
}

TEST_CASE("linear shape errors") {
    LinearParams p = LinearParams::zeros(3, 2);
    CHECK_THROWS_AS(linear_forward(Matrix(2, 4), p), ShapeError);
}

TEST_CASE("kan forward examples") {
    std::mt19937_64 rng(3);
    SUBCASE("zero coefficients give zero output") {
        const auto p = KanLayerParams::zeros(5, 3, BasisKind::Lucas, true);
        const Matrix out = kan_forward(random_matrix(5, 4, rng, 10.0), p);
        for (double v : out.flat()) CHECK(v == 0.0);
    }
    SUBCASE("P1 selects the input") {
        auto p = KanLayerParams::zeros(1, 1, BasisKind::Lucas, false);
        p.at(0, 0, 1) = 1.0;
        Matrix z(1, 1);
        z(0, 0) = 0.3;
        CHECK(kan_forward(z, p)(0, 0) == doctest::Approx(0.3).epsilon(1e-15));
    }
    SUBCASE("hand-evaluated P0 + P2") {
        auto p = KanLayerParams::zeros(2, 2, BasisKind::Lucas, false);
        p.at(0, 0, 0) = 1.0;
        p.at(0, 1, 2) = 1.0;
        Matrix z(2, 1, 0.5);
        const Matrix out = kan_forward(z, p);
        CHECK(out(0, 0) == doctest::Approx(4.25).epsilon(1e-15));
        CHECK(out(1, 0) == 0.0);
    }
}

TEST_CASE("kan output is linear in gamma") {
    std::mt19937_64 rng(4);
    const Matrix z = random_matrix(6, 3, rng);
    auto p1 = random_kan(6, 3, BasisKind::Lucas, true, rng);
    auto p2 = random_kan(6, 3, BasisKind::Lucas, true, rng);
    const double a = 0.7, b = -1.9;
    auto mix = p1;
    for (std::size_t i = 0; i < mix.gamma.size(); ++i) mix.gamma.data()[i] = a * p1.gamma.data()[i] + b * p2.gamma.data()[i];
    const Matrix o1 = kan_forward(z, p1), o2 = kan_forward(z, p2), om = kan_forward(z, mix);
    for (std::size_t i = 0; i < om.size(); ++i) CHECK(std::abs(om.data()[i] - (a * o1.data()[i] + b * o2.data()[i])) <= 1e-10);
}

TEST_CASE("squashed kan stays bounded for huge inputs") {
    std::mt19937_64 rng(5);
    for (BasisKind basis : {BasisKind::Lucas, BasisKind::Hermite}) {
        auto p = random_kan(4, 6, basis, true, rng);
        KanCache cache;
        const Matrix out = kan_forward(random_matrix(4, 3, rng, 1e6), p, &cache);
        CHECK(out.all_finite());
        const auto at_one = eval_basis(basis, 6, 1.0);
        for (std::size_t row = 0; row < cache.basis.rows(); ++row) {
            const std::size_t r = row % 7;
            for (std::size_t j = 0; j < cache.basis.cols(); ++j) {
                CHECK(std::abs(cache.u(row / 7, j)) <= 1.0);
                CHECK(std::abs(cache.basis(row, j)) <= std::abs(at_one.values[r]) + 1e-12);
            }
        }
    }
}

TEST_CASE("unsquashed kan reports non-finite activations") {
    auto p = KanLayerParams::zeros(2, 8, BasisKind::Lucas, false);
    p.gamma.fill(1.0);
    Matrix z(2, 1, 1e300);
    CHECK_THROWS_AS(kan_forward(z, p), NumericError);
}

TEST_CASE("kan backward matches finite differences") {
    for (BasisKind basis : {BasisKind::Lucas, BasisKind::Chebyshev, BasisKind::Legendre, BasisKind::Hermite}) {
        for (bool squash : {true, false}) {
            for (std::uint64_t seed = 1; seed <= 5; ++seed) {
                CAPTURE(to_string(basis));
                CAPTURE(squash);
                CAPTURE(seed);
                std::mt19937_64 rng(seed);
                Matrix z = random_matrix(4, 3, rng, 0.8);
                auto p = random_kan(4, 3, basis, squash, rng);
                const Matrix probe = random_matrix(4, 3, rng);

                KanCache cache;
                kan_forward(z, p, &cache);
                auto grads = KanLayerParams::zeros(4, 3, basis, squash);
                const Matrix dz = kan_backward(cache, p, probe, grads);

                auto f = [&] { return probe_value(kan_forward(z, p), probe); };
                CHECK(max_rel_error(grads.gamma.flat(), finite_difference(p.gamma.flat(), f)) < 1e-5);
                CHECK(max_rel_error(dz.flat(), finite_difference(z.flat(), f)) < 1e-5);
            }
        }
    }
}

TEST_CASE("layernorm forward examples") {
    SUBCASE("constant column maps to the shift") {
        auto p = LayerNormParams::identity(3);
        p.shift = {0.5, -1.0, 2.0};
        Matrix z(3, 1, 4.2);
        const Matrix out = layernorm_forward(z, p);
        CHECK(out(0, 0) == 0.5);
        CHECK(out(1, 0) == -1.0);
        CHECK(out(2, 0) == 2.0);
    }
    SUBCASE("standardized column is preserved") {
        const auto p = LayerNormParams::identity(2);
        Matrix z(2, 1);
        z(0, 0) = 1.0;
        z(1, 0) = -1.0;
        const Matrix out = layernorm_forward(z, p);
        CHECK(out(0, 0) == doctest::Approx(1.0).epsilon(1e-5));
        CHECK(out(1, 0) == doctest::Approx(-1.0).epsilon(1e-5));
    }
    SUBCASE("statistics are per channel over time") {
        std::mt19937_64 rng(6);
        const Matrix out = layernorm_forward(random_matrix(9, 4, rng, 5.0), LayerNormParams::identity(9));
        for (std::size_t j = 0; j < 4; ++j) {
            double mean = 0.0, sq = 0.0;
            for (std::size_t i = 0; i < 9; ++i) mean += out(i, j);
            mean /= 9.0;
            for (std::size_t i = 0; i < 9; ++i) sq += (out(i, j) - mean) * (out(i, j) - mean);
            CHECK(std::abs(mean) < 1e-12);
            CHECK(sq / 9.0 == doctest::Approx(1.0).epsilon(1e-5));
        }
    }
    CHECK_THROWS_AS(layernorm_forward(Matrix(1, 3), LayerNormParams::identity(1)), ShapeError);
    CHECK_THROWS_AS(layernorm_forward(Matrix(4, 3), LayerNormParams::identity(5)), ShapeError);
}

TEST_CASE("layernorm backward matches finite differences") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        CAPTURE(seed);
        std::mt19937_64 rng(seed + 100);
        Matrix z = random_matrix(6, 2, rng, 2.0);
        auto p = random_ln(6, rng);
        const Matrix probe = random_matrix(6, 2, rng);

        LayerNormCache cache;
        layernorm_forward(z, p, &cache);
        auto grads = LayerNormParams::zeros(6);
        const Matrix dz = layernorm_backward(cache, p, probe, grads);

        auto f = [&] { return probe_value(layernorm_forward(z, p), probe); };
        CHECK(max_rel_error(grads.gain, finite_difference(p.gain, f)) < 1e-5);
        CHECK(max_rel_error(grads.shift, finite_difference(p.shift, f)) < 1e-5);
        CHECK(max_rel_error(dz.flat(), finite_difference(z.flat(), f)) < 1e-5);
    }
}

TEST_CASE("block forward examples") {
    std::mt19937_64 rng(7);
    const Matrix z = random_matrix(8, 4, rng, 3.0);
    const auto kan = KanLayerParams::zeros(8, 3, BasisKind::Lucas, true);

    const Matrix same = block_forward(z, kan, LayerNormParams::identity(8));
    CHECK(same == z);

    auto ln = LayerNormParams::identity(8);
    for (auto& s : ln.shift) s = 0.25;
    const Matrix shifted = block_forward(z, kan, ln);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(shifted.data()[i] == z.data()[i] + 0.25);
}

TEST_CASE("block backward matches finite differences") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        CAPTURE(seed);
        std::mt19937_64 rng(seed + 200);
        Matrix z = random_matrix(8, 4, rng);
        auto kan = random_kan(8, 3, BasisKind::Lucas, true, rng);
        auto ln = random_ln(8, rng);
        const Matrix probe = random_matrix(8, 4, rng);

        BlockCache cache;
        block_forward(z, kan, ln, &cache);
        auto kan_grads = KanLayerParams::zeros(8, 3, BasisKind::Lucas, true);
        auto ln_grads = LayerNormParams::zeros(8);
        const Matrix dz = block_backward(cache, kan, ln, probe, kan_grads, ln_grads);

        auto f = [&] { return probe_value(block_forward(z, kan, ln), probe); };
        CHECK(max_rel_error(kan_grads.gamma.flat(), finite_difference(kan.gamma.flat(), f)) < 1e-5);
        CHECK(max_rel_error(ln_grads.gain, finite_difference(ln.gain, f)) < 1e-5);
        CHECK(max_rel_error(ln_grads.shift, finite_difference(ln.shift, f)) < 1e-5);
        CHECK(max_rel_error(dz.flat(), finite_difference(z.flat(), f)) < 1e-5);
    }
}
