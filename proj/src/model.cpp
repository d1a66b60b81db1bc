#include "dyntx/model.hpp"

#include "dyntx/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dyntx {

Bits unpack(std::uint32_t code, int len) {
  Bits b(len);
  for (int i = 0; i < len; ++i) b[i] = (code >> i) & 1u;
  return b;
}

std::string bits_to_string(const Bits& b) {
  std::string s;
  for (int v : b) s.push_back(v ? '1' : '0');
  return s;
}

Bits bits_from_string(const std::string& s) {
  Bits b;
  for (char c : s) {
    if (c != '0' && c != '1') throw ConfigError("bit-vector must contain only 0/1: '" + s + "'");
    b.push_back(c - '0');
  }
  return b;
}

Regime Regime::full(const Bits& d) {
  Regime r;
  r.d = d;
  r.active.assign(d.size(), 1);
  return r;
}

Regime Regime::parse(const std::string& d, const std::string& mask) {
  Regime r;
  r.d = bits_from_string(d);
  if (mask.empty()) {
    r.active.assign(r.d.size(), 1);
  } else {
    r.active = bits_from_string(mask);
    if (r.active.size() != r.d.size()) throw ConfigError("regime length mismatch between d and mask");
  }
  for (std::size_t i = 0; i < r.d.size(); ++i)
    if (!r.active[i] && r.d[i]) throw ConfigError("inactive regime positions must be stored as 0");
  return r;
}

bool Regime::is_full() const {
  for (int a : active)
    if (!a) return false;
  return true;
}

std::string Regime::str() const {
  if (is_full()) return bits_to_string(d);
  std::string s;
  for (std::size_t i = 0; i < d.size(); ++i) s.push_back(active[i] ? (d[i] ? '1' : '0') : '.');
  return s;
}

bool Regime::operator<(const Regime& o) const {
  if (active != o.active) return active < o.active;
  return d < o.d;
}

StructuralModel StructuralModel::shaped(const std::vector<std::vector<double>>& grid) {
  StructuralModel m;
  m.T = static_cast<int>(grid.size());
  m.x_grid = grid;
  m.mu.resize(m.T);
  m.pi.resize(m.T);
  m.x_law.resize(m.T);
  for (int t = 1; t <= m.T; ++t) {
    int K = m.K(t);
    m.mu[t - 1].assign((std::size_t{1} << (2 * t - 1)) * K, 0.0);
    m.pi[t - 1].assign(std::size_t{1} << (2 * t - 1), 0.0);
    m.x_law[t - 1].assign(K, 1.0 / K);
  }
  m.z_law.assign(m.T, 0.5);
  m.latent.corr = Eigen::MatrixXd::Identity(2 * m.T, 2 * m.T);
  return m;
}

namespace {

void add(std::vector<Violation>& v, const std::string& code, const std::string& detail) {
  v.push_back({code, detail});
}

std::string cell_name(int t, std::uint32_t y, std::uint32_t d, int t_len_d) {
  std::ostringstream os;
  os << "t=" << t << " y=" << bits_to_string(unpack(y, t - 1)) << " d=" << bits_to_string(unpack(d, t_len_d));
  return os.str();
}

}  // namespace

std::vector<Violation> validate_model(const StructuralModel& m) {
  std::vector<Violation> v;
  if (m.T < 1 || m.T > kMaxHorizon) {
    add(v, "horizon_range", "T must lie in [1, 6]");
    return v;
  }
  if (static_cast<int>(m.x_grid.size()) != m.T) {
    add(v, "grid_size", "x_grid must have one list per period");
    return v;
  }
  for (int t = 1; t <= m.T; ++t) {
    const auto& g = m.x_grid[t - 1];
    if (g.empty()) add(v, "grid_size", "empty grid at t=" + std::to_string(t));
    for (std::size_t k = 1; k < g.size(); ++k)
      if (!(g[k] > g[k - 1])) add(v, "grid_not_increasing", "t=" + std::to_string(t));
  }
  if (!v.empty()) return v;

  bool tables_ok = static_cast<int>(m.mu.size()) == m.T && static_cast<int>(m.pi.size()) == m.T;
  for (int t = 1; tables_ok && t <= m.T; ++t) {
    std::size_t nmu = (std::size_t{1} << (2 * t - 1)) * m.K(t);
    std::size_t npi = std::size_t{1} << (2 * t - 1);
    if (m.mu[t - 1].size() != nmu) {
      add(v, "mu_table_incomplete", "t=" + std::to_string(t));
      tables_ok = false;
    }
    if (m.pi[t - 1].size() != npi) {
      add(v, "pi_table_incomplete", "t=" + std::to_string(t));
      tables_ok = false;
    }
  }
  if (tables_ok) {
    for (int t = 1; t <= m.T; ++t) {
      for (double x : m.mu[t - 1])
        if (std::isnan(x)) add(v, "threshold_nan", "mu at t=" + std::to_string(t));
      for (double x : m.pi[t - 1])
        if (std::isnan(x)) add(v, "threshold_nan", "pi at t=" + std::to_string(t));
    }
  }

  if (static_cast<int>(m.z_law.size()) != m.T) {
    add(v, "z_law_range", "z_law needs one probability per period");
  } else {
    for (int t = 1; t <= m.T; ++t)
      if (!(m.z_law[t - 1] > 0.0 && m.z_law[t - 1] < 1.0))
        add(v, "z_law_range", "Pr[Z=1] must lie in (0,1) at t=" + std::to_string(t));
  }
  if (static_cast<int>(m.x_law.size()) != m.T) {
    add(v, "x_law_invalid", "x_law needs one vector per period");
  } else {
    for (int t = 1; t <= m.T; ++t) {
      const auto& p = m.x_law[t - 1];
      if (static_cast<int>(p.size()) != m.K(t)) {
        add(v, "x_law_invalid", "length mismatch at t=" + std::to_string(t));
        continue;
      }
      double s = 0.0;
      bool neg = false;
      for (double q : p) {
        s += q;
        neg = neg || !(q >= 0.0);
      }
      if (neg || std::fabs(s - 1.0) > 1e-9) add(v, "x_law_invalid", "not a distribution at t=" + std::to_string(t));
    }
  }

  if (m.latent.mode == LatentMode::RankInvariant) {
    const auto& R = m.latent.corr;
    int n = 2 * m.T;
    if (R.rows() != n || R.cols() != n) {
      add(v, "latent_dim", "correlation must be 2T x 2T");
    } else {
      bool ok = true;
      for (int i = 0; i < n; ++i) {
        if (std::fabs(R(i, i) - 1.0) > 1e-12) {
          add(v, "latent_diag", "unit diagonal required");
          ok = false;
          break;
        }
      }
      if ((R - R.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        add(v, "latent_not_symmetric", "correlation must be symmetric");
        ok = false;
      }
      if (ok) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R);
        if (es.eigenvalues().minCoeff() <= 1e-10) add(v, "latent_not_pd", "correlation is not positive definite");
      }
    }
  } else {
    const auto& L = m.latent;
    std::size_t T = static_cast<std::size_t>(m.T);
    if (L.a.size() != T || L.b.size() != T || L.c.size() != T || L.e.size() != T) {
      add(v, "rs_loading_size", "loadings a,b,c,e need one entry per period");
    } else {
      for (std::size_t t = 0; t < T; ++t) {
        if (std::fabs(L.a[t] * L.a[t] + L.b[t] * L.b[t] - 1.0) > 1e-9 ||
            std::fabs(L.c[t] * L.c[t] + L.e[t] * L.e[t] - 1.0) > 1e-9)
          add(v, "rs_loading_norm", "a^2+b^2 and c^2+e^2 must equal 1 at t=" + std::to_string(t + 1));
        if (L.b[t] == 0.0 || L.e[t] == 0.0)
          add(v, "rs_loading_norm", "idiosyncratic loadings must be nonzero for a density");
      }
    }
  }

  if (tables_ok && m.T >= 2) {
    for (int t = 2; t <= m.T; ++t) {
      for (std::uint32_t y = 0; y < (1u << (t - 1)); ++y) {
        for (std::uint32_t d = 0; d < (1u << (t - 1)); ++d) {
          bool ylag = (y >> (t - 2)) & 1u;
          bool dlag = (d >> (t - 2)) & 1u;
          for (int z = 0; z < 2; ++z) {
            double p = m.pi_at(t, y, d, z);
            if (m.irreversible_y && ylag && p != -kInf)
              add(v, "irreversible_y_pattern", "pi must be -inf after y=1 at " + cell_name(t, y, d, t - 1));
            else if (m.irreversible_d && dlag && !(m.irreversible_y && ylag) && p != kInf)
              add(v, "irreversible_d_pattern", "pi must be +inf after d=1 at " + cell_name(t, y, d, t - 1));
          }
          if (m.irreversible_y && ylag) {
            for (std::uint32_t dt = 0; dt < 2; ++dt)
              for (int k = 0; k < m.K(t); ++k)
                if (m.mu_at(t, y, d | (dt << (t - 1)), k) != kInf)
                  add(v, "irreversible_y_pattern", "mu must be +inf after y=1 at " + cell_name(t, y, d, t - 1));
          }
        }
      }
    }
  }
  return v;
}

StructuralModel drop_grid_point(const StructuralModel& m, int t, int k_drop) {
  auto grid = m.x_grid;
  grid[t - 1].erase(grid[t - 1].begin() + k_drop);
  StructuralModel out = StructuralModel::shaped(grid);
  out.pi = m.pi;
  out.latent = m.latent;
  out.z_law = m.z_law;
  out.irreversible_d = m.irreversible_d;
  out.irreversible_y = m.irreversible_y;
  out.x_law = m.x_law;
  for (int s = 1; s <= m.T; ++s) {
    if (s != t) {
      out.mu[s - 1] = m.mu[s - 1];
      continue;
    }
    for (std::uint32_t y = 0; y < (1u << (s - 1)); ++y)
      for (std::uint32_t d = 0; d < (1u << s); ++d)
        for (int k = 0, kk = 0; k < m.K(s); ++k) {
          if (k == k_drop) continue;
          out.mu[s - 1][out.mu_index(s, y, d, kk++)] = m.mu_at(s, y, d, k);
        }
  }
  auto& law = out.x_law[t - 1];
  law.erase(law.begin() + k_drop);
  double s = 0.0;
  for (double q : law) s += q;
  for (double& q : law) q /= s;
  return out;
}

std::vector<Regime> enumerate_regimes(int T, bool irreversible_d) {
  std::vector<Regime> out;
  if (irreversible_d) {
    for (int start = T; start >= 0; --start) {
      Bits d(T, 0);
      for (int t = start; t < T; ++t) d[t] = 1;
      out.push_back(Regime::full(d));
    }
    std::sort(out.begin(), out.end());
    return out;
  }
  for (std::uint32_t c = 0; c < (1u << T); ++c) out.push_back(Regime::full(unpack(c, T)));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace dyntx
