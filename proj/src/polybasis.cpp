#include "lukan/polybasis.hpp"

#include <cmath>

#include "lukan/error.hpp"

namespace lukan {

std::string_view to_string(BasisKind kind) {
    switch (kind) {
        case BasisKind::Lucas: return "lucas";
        case BasisKind::Chebyshev: return "chebyshev";
        case BasisKind::Legendre: return "legendre";
        case BasisKind::Hermite: return "hermite";
    }
    return "unknown";
}

BasisKind basis_from_string(std::string_view name) {
    if (name == "lucas") return BasisKind::Lucas;
    if (name == "chebyshev") return BasisKind::Chebyshev;
    if (name == "legendre") return BasisKind::Legendre;
    if (name == "hermite") return BasisKind::Hermite;
    throw ConfigError("unknown basis '" + std::string(name) + "' (expected lucas|chebyshev|legendre|hermite)");
}

void eval_basis_into(BasisKind kind, double x, std::span<double> values, std::span<double> derivs) {
    const std::size_t n = values.size();
    if (n == 0) return;

    double p0 = 1.0;   // P_0
    double p1 = x;     // P_1
    double d1 = 1.0;   // P_1'
    switch (kind) {
        case BasisKind::Lucas: p0 = 2.0; break;
        case BasisKind::Hermite: p1 = 2.0 * x; d1 = 2.0; break;
        default: break;
    }
    values[0] = p0;
    derivs[0] = 0.0;
    if (n == 1) return;
    values[1] = p1;
    derivs[1] = d1;

    for (std::size_t r = 2; r < n; ++r) {
        const double pm1 = values[r - 1], pm2 = values[r - 2];
        const double dm1 = derivs[r - 1], dm2 = derivs[r - 2];
        switch (kind) {
            case BasisKind::Lucas:
                // P_r = x P_{r-1} + P_{r-2}
                values[r] = x * pm1 + pm2;
                derivs[r] = pm1 + x * dm1 + dm2;
                break;
            case BasisKind::Chebyshev:
                // T_r = 2x T_{r-1} - T_{r-2}
                values[r] = 2.0 * x * pm1 - pm2;
                derivs[r] = 2.0 * pm1 + 2.0 * x * dm1 - dm2;
                break;
            case BasisKind::Legendre: {
                // r P_r = (2r-1) x P_{r-1} - (r-1) P_{r-2}
                const double rd = static_cast<double>(r);
                values[r] = ((2.0 * rd - 1.0) * x * pm1 - (rd - 1.0) * pm2) / rd;
                derivs[r] = ((2.0 * rd - 1.0) * (pm1 + x * dm1) - (rd - 1.0) * dm2) / rd;
                break;
            }
            case BasisKind::Hermite: {
                // H_r = 2x H_{r-1} - 2(r-1) H_{r-2}
                const double c = 2.0 * static_cast<double>(r - 1);
                values[r] = 2.0 * x * pm1 - c * pm2;
                derivs[r] = 2.0 * pm1 + 2.0 * x * dm1 - c * dm2;
                break;
            }
        }
    }
}

BasisValues eval_basis(BasisKind kind, int max_degree, double x) {
    if (max_degree < 0) throw ConfigError("eval_basis: max_degree must be >= 0, got " + std::to_string(max_degree));
    if (!std::isfinite(x)) throw ConfigError("eval_basis: x must be finite");
    BasisValues out;
    out.values.resize(static_cast<std::size_t>(max_degree) + 1);
    out.derivs.resize(out.values.size());
    eval_basis_into(kind, x, out.values, out.derivs);
    return out;
}

}  // namespace lukan
