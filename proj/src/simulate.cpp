#include "dyntx/simulate.hpp"

#include "dyntx/errors.hpp"
#include "dyntx/parallel.hpp"

#include <cmath>
#include <functional>

namespace dyntx {

namespace {

constexpr std::size_t kBlock = 4096;

std::size_t block_count(std::size_t n) { return (n + kBlock - 1) / kBlock; }

void check_regime(const StructuralModel& m, const Regime& r) {
  if (r.size() != m.T) throw ConfigError("regime length mismatch: regime " + r.str() + " vs T=" + std::to_string(m.T));
}

}  // namespace

PanelData simulate_panel(const StructuralModel& m, std::size_t n, std::uint64_t seed, int w0) {
  const int T = m.T;
  PanelData p;
  p.T = T;
  p.n = n;
  p.y.assign(n * T, 0);
  p.d.assign(n * T, 0);
  p.x.assign(n * T, 0);
  p.z.assign(n * T, 0);
  p.w0.assign(n, w0);
  LatentSampler sampler(m);
  parallel_for(block_count(n), [&](std::size_t b) {
    auto rng = block_engine(seed, 2, b);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::discrete_distribution<int>> xdist;
    for (int t = 1; t <= T; ++t) xdist.emplace_back(m.x_law[t - 1].begin(), m.x_law[t - 1].end());
    std::size_t end = std::min(n, (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) {
      LatentDraw w = sampler.draw(rng);
      std::uint32_t yc = 0, dc = 0;
      for (int t = 1; t <= T; ++t) {
        std::size_t j = i * T + (t - 1);
        int z = unif(rng) < m.z_law[t - 1];
        int x = xdist[t - 1](rng);
        int d = m.pi_at(t, yc, dc, z) >= w.v[t - 1];
        dc |= static_cast<std::uint32_t>(d) << (t - 1);
        int y = m.mu_at(t, yc, dc, x) >= (d ? w.u1[t - 1] : w.u0[t - 1]);
        yc |= static_cast<std::uint32_t>(y) << (t - 1);
        p.z[j] = z;
        p.x[j] = x;
        p.d[j] = d;
        p.y[j] = y;
      }
    }
  });
  return p;
}

namespace {

// Runs the forced-regime recursion once per draw and hands the outcome path
// to `visit`. Latent draws come first in each block so every regime sees the
// same latent vector for the same unit.
template <class Visit>
void forced_paths(const StructuralModel& m, const Regime& r, const Bits& x, std::size_t draws, std::uint64_t seed,
                  std::size_t blocks, Visit&& visit) {
  LatentSampler sampler(m);
  parallel_for(blocks, [&](std::size_t b) {
    auto rng = block_engine(seed, 3, b);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::size_t end = std::min(draws, (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) {
      LatentDraw w = sampler.draw(rng);
      std::uint32_t yc = 0, dc = 0;
      for (int t = 1; t <= m.T; ++t) {
        int z = unif(rng) < m.z_law[t - 1];
        int d = r.active[t - 1] ? r.d[t - 1] : (m.pi_at(t, yc, dc, z) >= w.v[t - 1]);
        dc |= static_cast<std::uint32_t>(d) << (t - 1);
        int y = m.mu_at(t, yc, dc, x[t - 1]) >= (d ? w.u1[t - 1] : w.u0[t - 1]);
        yc |= static_cast<std::uint32_t>(y) << (t - 1);
      }
      visit(b, yc);
    }
  });
}

}  // namespace

OracleResult oracle_arsf(const StructuralModel& m, const Regime& r, const Bits& x, std::size_t draws,
                         std::uint64_t seed) {
  check_regime(m, r);
  if (draws == 0) throw ConfigError("oracle needs at least one draw");
  std::size_t blocks = block_count(draws);
  std::vector<std::vector<double>> hits(blocks, std::vector<double>(m.T, 0.0));
  forced_paths(m, r, x, draws, seed, blocks, [&](std::size_t b, std::uint32_t yc) {
    for (int t = 0; t < m.T; ++t) hits[b][t] += (yc >> t) & 1u;
  });
  OracleResult out;
  out.regime = r;
  out.x = x;
  out.draws = draws;
  out.seed = seed;
  for (int t = 0; t < m.T; ++t) {
    double s = 0.0;
    for (const auto& h : hits) s += h[t];
    double q = s / static_cast<double>(draws);
    out.value.push_back(q);
    out.std_error.push_back(std::sqrt(q * (1.0 - q) / static_cast<double>(draws)));
  }
  return out;
}

TransitionOracle oracle_transition(const StructuralModel& m, const Regime& r, const Bits& y_minus, const Bits& x,
                                   std::size_t draws, std::uint64_t seed) {
  check_regime(m, r);
  if (static_cast<int>(y_minus.size()) != m.T - 1) throw ConfigError("y_minus must have length T-1");
  std::size_t blocks = block_count(draws);
  std::vector<std::array<double, 2>> acc(blocks, {0.0, 0.0});
  forced_paths(m, r, x, draws, seed, blocks, [&](std::size_t b, std::uint32_t yc) {
    for (int s = 0; s + 1 < m.T; ++s)
      if (y_minus[s] >= 0 && static_cast<int>((yc >> s) & 1u) != y_minus[s]) return;
    acc[b][1] += 1.0;
    acc[b][0] += (yc >> (m.T - 1)) & 1u;
  });
  double num = 0.0, den = 0.0;
  for (const auto& a : acc) {
    num += a[0];
    den += a[1];
  }
  if (den < 10.0) throw DegenerateConditioning("oracle conditioning set has fewer than 10 draws");
  TransitionOracle out;
  out.draws = draws;
  out.numerator = num / static_cast<double>(draws);
  out.denominator = den / static_cast<double>(draws);
  out.ratio = num / den;
  out.std_error = std::sqrt(out.ratio * (1.0 - out.ratio) / den);
  return out;
}

namespace {

Eigen::MatrixXd oracle_corr(const StructuralModel& m) {
  if (m.latent.mode != LatentMode::RankInvariant)
    throw UnsupportedLatent("the quadrature oracle needs the rank-invariant mode");
  if (m.T > 3) throw UnsupportedLatent("the quadrature oracle supports T <= 3");
  return m.latent.corr;
}

}  // namespace

ExactOracle::ExactOracle(const StructuralModel& m, int quad_order) : m_(m), rect_(oracle_corr(m), quad_order) {}

double ExactOracle::prob(const Regime& r, const Bits& x, const Bits& target, int horizon) const {
  check_regime(m_, r);
  const int T = m_.T;
  std::vector<gauss::Side> sides(2 * T, gauss::Side::free());
  std::function<double(int, std::uint32_t, std::uint32_t)> rec = [&](int s, std::uint32_t yc,
                                                                     std::uint32_t dc) -> double {
    if (s > horizon) return rect_(sides);
    double total = 0.0;
    auto outcome = [&](int d) {
      std::uint32_t dn = dc | (static_cast<std::uint32_t>(d) << (s - 1));
      double u = m_.mu_at(s, yc, dn, x[s - 1]);
      double acc = 0.0;
      for (int y = 0; y < 2; ++y) {
        if (target[s - 1] >= 0 && target[s - 1] != y) continue;
        sides[s - 1] = y ? gauss::Side::le(u) : gauss::Side::gt(u);
        acc += rec(s + 1, yc | (static_cast<std::uint32_t>(y) << (s - 1)), dn);
      }
      sides[s - 1] = gauss::Side::free();
      return acc;
    };
    if (r.active[s - 1]) return outcome(r.d[s - 1]);
    for (int z = 0; z < 2; ++z) {
      double wz = z ? m_.z_law[s - 1] : 1.0 - m_.z_law[s - 1];
      double p = m_.pi_at(s, yc, dc, z);
      for (int d = 0; d < 2; ++d) {
        sides[T + s - 1] = d ? gauss::Side::le(p) : gauss::Side::gt(p);
        total += wz * outcome(d);
      }
    }
    sides[T + s - 1] = gauss::Side::free();
    return total;
  };
  return std::clamp(rec(1, 0, 0), 0.0, 1.0);
}

double ExactOracle::arsf(const Regime& r, const Bits& x, int horizon) const {
  if (horizon < 0) horizon = m_.T;
  Bits target(m_.T, -1);
  target[horizon - 1] = 1;
  return prob(r, x, target, horizon);
}

TransitionOracle ExactOracle::transition(const Regime& r, const Bits& y_minus, const Bits& x) const {
  if (static_cast<int>(y_minus.size()) != m_.T - 1) throw ConfigError("y_minus must have length T-1");
  Bits target(y_minus);
  target.push_back(-1);
  TransitionOracle out;
  out.denominator = prob(r, x, target, m_.T);
  target.back() = 1;
  out.numerator = prob(r, x, target, m_.T);
  if (out.denominator < 1e-12) throw DegenerateConditioning("oracle conditioning probability is zero");
  out.ratio = out.numerator / out.denominator;
  return out;
}

double ExactOracle::period_arsf(int y_prev, int d_T, const Bits& x) const {
  const int T = m_.T;
  Regime r;
  r.d.assign(T, 0);
  r.active.assign(T, 0);
  r.d[T - 1] = d_T;
  r.active[T - 1] = 1;
  if (T == 1) return arsf(r, x);
  Bits target(T, -1);
  target[T - 2] = y_prev;
  double den = prob(r, x, target, T - 1);
  if (den < 1e-12) throw DegenerateConditioning("Pr[Y_{T-1}=y] is zero");
  target[T - 1] = 1;
  return prob(r, x, target, T) / den;
}

}  // namespace dyntx
