#include "dyntx/designs.hpp"

#include <cmath>

namespace dyntx {

namespace {

Eigen::MatrixXd kron_corr(int T, double rho_uv, double rho_t) {
  Eigen::Matrix2d uv;
  uv << 1.0, rho_uv, rho_uv, 1.0;
  Eigen::MatrixXd time = Eigen::MatrixXd::Constant(T, T, rho_t);
  time.diagonal().setOnes();
  Eigen::MatrixXd R(2 * T, 2 * T);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) R.block(a * T, b * T, T, T) = uv(a, b) * time;
  return R;
}

std::vector<double> five_points() { return {-1.0, -0.5, 0.0, 0.5, 1.0}; }

// mu_1(d, k) = b1 + c1 (k + d); mu_2(y1, d1, d2, k) = a[y1] + c2 (k + d2).
// mu_2 ignores d1: a later threshold that moved with an earlier treatment
// would break the one-period substitution argument.
struct ShiftParams {
  double b1, c1, c2;
  double a[2];
  double p1, g1, p2, g2, ycoef, dcoef;
  double rho_uv, rho_t;
  std::vector<double> law1, law2;
};

StructuralModel build_shift(const ShiftParams& s) {
  StructuralModel m = StructuralModel::shaped({five_points(), five_points()});
  for (int d = 0; d < 2; ++d)
    for (int k = 0; k < 5; ++k) m.mu[0][m.mu_index(1, 0, d, k)] = s.b1 + s.c1 * (k + d);
  for (std::uint32_t y1 = 0; y1 < 2; ++y1)
    for (std::uint32_t dc = 0; dc < 4; ++dc) {
      int d2 = (dc >> 1) & 1u;
      for (int k = 0; k < 5; ++k) m.mu[1][m.mu_index(2, y1, dc, k)] = s.a[y1] + s.c2 * (k + d2);
    }
  for (int z = 0; z < 2; ++z) m.pi[0][m.pi_index(1, 0, 0, z)] = z ? s.p1 : s.p1 - s.g1;
  for (std::uint32_t y1 = 0; y1 < 2; ++y1)
    for (std::uint32_t d1 = 0; d1 < 2; ++d1)
      for (int z = 0; z < 2; ++z)
        m.pi[1][m.pi_index(2, y1, d1, z)] = (z ? s.p2 : s.p2 - s.g2) + s.ycoef * y1 + s.dcoef * d1;
  m.latent.corr = kron_corr(2, s.rho_uv, s.rho_t);
  m.z_law = {0.5, 0.5};
  m.x_law = {s.law1, s.law2};
  return m;
}

double unif(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::vector<double> random_law(std::mt19937_64& rng, int K) {
  std::vector<double> w(K);
  double s = 0.0;
  for (double& q : w) s += (q = unif(rng, 0.5, 1.5));
  for (double& q : w) q /= s;
  return w;
}

}  // namespace

StructuralModel dgp_a(double rho_uv, double rho_t) {
  // Slope 0.6 puts the top index on 1.5, so the outcome threshold cannot
  // also move with y1; the lagged outcome acts through selection instead.
  ShiftParams s;
  s.b1 = -1.5;
  s.c1 = 0.6;
  s.c2 = 0.6;
  s.a[0] = -1.5;
  s.a[1] = -1.5;
  s.p1 = 0.85;
  s.g1 = 1.5;
  s.p2 = 0.75;
  s.g2 = 1.5;
  s.ycoef = 0.3;
  s.dcoef = 0.0;
  s.rho_uv = rho_uv;
  s.rho_t = rho_t;
  s.law1 = s.law2 = {0.15, 0.2, 0.3, 0.2, 0.15};
  return build_shift(s);
}

StructuralModel dgp_b(const StructuralModel& a) { return drop_grid_point(a, 2, 3); }

StructuralModel dgp_b() { return dgp_b(dgp_a()); }

StructuralModel random_shift_model(std::mt19937_64& rng) {
  ShiftParams s;
  s.c1 = unif(rng, 0.3, 0.6);
  s.c2 = unif(rng, 0.3, 0.6);
  s.b1 = unif(rng, -1.5, 1.5 - 5.0 * s.c1);
  double top = 1.5 - 5.0 * s.c2;
  s.a[0] = unif(rng, -1.5, top);
  s.a[1] = unif(rng, s.a[0], top);
  s.p1 = unif(rng, 0.2, 0.8);
  s.g1 = unif(rng, 0.8, 1.2);
  s.p2 = unif(rng, 0.2, 0.8);
  s.g2 = unif(rng, 0.8, 1.2);
  s.ycoef = unif(rng, -0.3, 0.3);
  s.dcoef = unif(rng, -0.3, 0.3);
  s.rho_uv = unif(rng, -0.7, 0.7);
  s.rho_t = unif(rng, 0.0, 0.5);
  s.law1 = random_law(rng, 5);
  s.law2 = random_law(rng, 5);
  return build_shift(s);
}

StructuralModel random_table_model(std::mt19937_64& rng, int K) {
  std::vector<double> grid(K);
  for (int k = 0; k < K; ++k) grid[k] = K == 1 ? 0.0 : -1.0 + 2.0 * k / (K - 1);
  StructuralModel m = StructuralModel::shaped({grid, grid});
  for (auto& tab : m.mu)
    for (double& v : tab) v = unif(rng, -1.5, 1.5);
  for (int t = 1; t <= 2; ++t)
    for (std::uint32_t y = 0; y < (1u << (t - 1)); ++y)
      for (std::uint32_t d = 0; d < (1u << (t - 1)); ++d) {
        double base = unif(rng, -0.5, 0.5), g = unif(rng, 0.8, 1.2);
        m.pi[t - 1][m.pi_index(t, y, d, 1)] = base + g / 2.0;
        m.pi[t - 1][m.pi_index(t, y, d, 0)] = base - g / 2.0;
      }
  std::normal_distribution<double> N(0.0, 1.0);
  Eigen::MatrixXd A(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) A(i, j) = N(rng);
  Eigen::MatrixXd S = A * A.transpose() + 2.0 * Eigen::MatrixXd::Identity(4, 4);
  Eigen::VectorXd sd = S.diagonal().cwiseSqrt();
  m.latent.corr = sd.cwiseInverse().asDiagonal() * S * sd.cwiseInverse().asDiagonal();
  m.latent.corr.diagonal().setOnes();
  m.x_law = {random_law(rng, K), random_law(rng, K)};
  return m;
}

double true_mu_gap(const StructuralModel& m, int t, std::uint32_t y, std::uint32_t d_prev, int k, int j) {
  std::uint32_t on = d_prev | (1u << (t - 1));
  return m.mu_at(t, y, on, k) - m.mu_at(t, y, d_prev, j);
}

std::optional<int> mu_partner(const StructuralModel& m, int t, std::uint32_t y, std::uint32_t d_prev, int arm, int k,
                              double tol) {
  for (int j = 0; j < m.K(t); ++j) {
    double gap = arm ? true_mu_gap(m, t, y, d_prev, k, j) : true_mu_gap(m, t, y, d_prev, j, k);
    if (std::fabs(gap) <= tol) return j;
  }
  return std::nullopt;
}

}  // namespace dyntx
