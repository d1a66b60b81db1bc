#pragma once

#include "dyntx/model.hpp"

#include <optional>
#include <random>

namespace dyntx {

// Reference design: T=2, five grid points per period, and thresholds that
// move by half a grid step per unit of treatment, so that treatment at x_k
// matches no treatment at x_{k+1}. rho_uv is corr(U_t, V_t), rho_t the
// correlation across periods.
StructuralModel dgp_a(double rho_uv = 0.5, double rho_t = 0.3);

// dgp_a with the second-period grid point x_2 = 0.5 removed, which leaves
// two cells without an on-grid partner.
StructuralModel dgp_b(const StructuralModel& a);
StructuralModel dgp_b();

// Random draw from the dgp_a family: shift slopes, intercepts, propensity
// levels and latent correlations vary; thresholds stay monotone in y_1.
StructuralModel random_shift_model(std::mt19937_64& rng);

// Fully random thresholds (no matching structure) with strong instruments and
// a random positive definite correlation, T=2.
StructuralModel random_table_model(std::mt19937_64& rng, int K = 3);

// mu_t(y, d^{t-1}, 1, x_k) - mu_t(y, d^{t-1}, 0, x_j) read from the table.
double true_mu_gap(const StructuralModel& m, int t, std::uint32_t y, std::uint32_t d_prev, int k, int j);

// Grid index j with mu_t(y, d^{t-1}, arm, x_k) = mu_t(y, d^{t-1}, 1-arm, x_j)
// by direct table inversion, if one exists within tol.
std::optional<int> mu_partner(const StructuralModel& m, int t, std::uint32_t y, std::uint32_t d_prev, int arm, int k,
                              double tol = 1e-12);

}  // namespace dyntx
