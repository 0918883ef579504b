#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lukan {

enum class BasisKind { Lucas, Chebyshev, Legendre, Hermite };

// "lucas" | "chebyshev" | "legendre" | "hermite"
std::string_view to_string(BasisKind kind);
BasisKind basis_from_string(std::string_view name);

struct BasisValues {
    std::vector<double> values;  // P_r(x), r = 0..R
    std::vector<double> derivs;  // dP_r/dx
};

// Evaluates P_0..P_R and their derivatives in a single O(R) pass of the
// three-term recurrence and its formal derivative. Hermite is the
// physicists' family H_r.
BasisValues eval_basis(BasisKind kind, int max_degree, double x);

// Allocation-free form used by the KAN layer. Both spans must hold R+1
// entries; no argument validation beyond that.
void eval_basis_into(BasisKind kind, double x, std::span<double> values, std::span<double> derivs);

}  // namespace lukan
