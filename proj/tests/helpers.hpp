#pragma once

#include "dyntx/model.hpp"

#include <vector>

namespace dyntx::testutil {

// Model with every threshold set to a constant and identity latent law.
inline StructuralModel constant_model(int T, int K, double mu, double pi) {
  std::vector<std::vector<double>> grid(T);
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < K; ++k) grid[t].push_back(static_cast<double>(k));
  StructuralModel m = StructuralModel::shaped(grid);
  for (auto& tab : m.mu)
    for (double& v : tab) v = mu;
  for (auto& tab : m.pi)
    for (double& v : tab) v = pi;
  return m;
}

// Strong instrument at every period: pi = +-g.
inline void set_instrument(StructuralModel& m, double g) {
  for (int t = 1; t <= m.T; ++t)
    for (std::size_t i = 0; i < m.pi[t - 1].size(); ++i) m.pi[t - 1][i] = (i & 1u) ? g : -g;
}

// Correlation (U_1..U_T, V_1..V_T) with corr(U_t, V_t) = rho, zero elsewhere.
inline Eigen::MatrixXd uv_corr(int T, double rho) {
  Eigen::MatrixXd R = Eigen::MatrixXd::Identity(2 * T, 2 * T);
  for (int t = 0; t < T; ++t) R(t, T + t) = R(T + t, t) = rho;
  return R;
}

}  // namespace dyntx::testutil
