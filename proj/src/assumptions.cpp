#include "dyntx/assumptions.hpp"

#include "dyntx/errors.hpp"

#include <algorithm>
#include <set>

namespace dyntx {

namespace {

History prefix_history(int t, const Bits& z, const Bits& x, const Bits& d, const Bits& y) {
  History h;
  h.t = t;
  h.z = z;
  h.z.push_back(0);
  h.x = x;
  h.x.push_back(0);
  h.d = d;
  h.y = y;
  return h;
}

bool any_reachable(const Evaluator& ev, History h) {
  for (int z = 0; z < 2; ++z)
    for (int x = 0; x < ev.grid_size(h.t); ++x) {
      h.z[h.t - 1] = z;
      h.x[h.t - 1] = x;
      if (ev.reachable(h)) return true;
    }
  return false;
}

}  // namespace

SupportSets check_support(const Evaluator& ev, int t, const Bits& d, const Bits& z_prefix, const Bits& x_prefix,
                          const Tolerances& tol) {
  if (t < 1 || t > ev.horizon()) throw ConfigError("period out of range");
  if (static_cast<int>(d.size()) != t) throw ConfigError("d^t must have length t");
  if (static_cast<int>(z_prefix.size()) != t - 1 || static_cast<int>(x_prefix.size()) != t - 1)
    throw ConfigError("prefix must have length t-1");
  SupportSets out;
  out.t = t;
  out.d = d;
  out.z_prefix = z_prefix;
  out.x_prefix = x_prefix;
  const int K = ev.grid_size(t);
  const int arm = d[t - 1];
  Bits dprev(d.begin(), d.end() - 1);

  std::set<std::pair<int, int>> cells;
  std::vector<int> count(K, 0);
  for (std::uint32_t yc = 0; yc < (1u << (t - 1)); ++yc) {
    Bits y = unpack(yc, t - 1);
    History h = prefix_history(t, z_prefix, x_prefix, dprev, y);
    if (!any_reachable(ev, h)) continue;
    out.y_histories.push_back(y);
    for (int x = 0; x < K; ++x)
      for (int z = 0; z < 2; ++z) {
        History c = h;
        c.z[t - 1] = z;
        c.x[t - 1] = x;
        if (ev.reachable(c)) cells.insert({x, z});
      }
    for (int x = 0; x < K; ++x) {
      History c = h;
      c.x[t - 1] = x;
      if (!ev.reachable(c)) continue;
      c.z[t - 1] = 1 - c.z[t - 1];
      if (!ev.reachable(c)) continue;
      MatchSet ms = match_lambda(ev, c, arm, x, tol);
      bool partner = false;
      for (const auto& [xa, res] : ms.matches) {
        out.S.push_back({y, x, xa, res});
        History a = c;
        a.x[t - 1] = xa;
        a.z[t - 1] = 0;
        bool ok = ev.reachable(a);
        a.z[t - 1] = 1;
        partner = partner || (ok && ev.reachable(a));
      }
      if (partner) ++count[x];
    }
  }
  out.T.assign(cells.begin(), cells.end());
  if (!out.y_histories.empty())
    for (int x = 0; x < K; ++x)
      if (count[x] == static_cast<int>(out.y_histories.size())) out.X.push_back(x);
  return out;
}

AssumptionReport assess_assumptions(const Evaluator& ev, const StructuralModel* m, const Tolerances& tol) {
  AssumptionReport rep;
  const int T = ev.horizon();
  if (m) {
    rep.model_violations = validate_model(*m);
    for (const auto& v : rep.model_violations) rep.failures.push_back("model: " + v.code + " " + v.detail);
    rep.sx_note = "holds by construction: instruments and covariates are drawn independently of the latent errors";
  } else {
    rep.sx_note = "not testable on observed data; assumed";
  }

  for (int t = 1; t <= T; ++t) {
    int Kp = 1;
    for (int s = 1; s < t; ++s) Kp *= ev.grid_size(s);
    for (std::uint32_t zc = 0; zc < (1u << (t - 1)); ++zc)
      for (int xc = 0; xc < Kp; ++xc) {
        Bits z = unpack(zc, t - 1), x(t - 1);
        for (int s = 1, r = xc; s < t; ++s) {
          x[s - 1] = r % ev.grid_size(s);
          r /= ev.grid_size(s);
        }
        for (std::uint32_t dc = 0; dc < (1u << (t - 1)); ++dc) {
          Bits dprev = unpack(dc, t - 1);
          for (std::uint32_t yc = 0; yc < (1u << (t - 1)); ++yc) {
            History h = prefix_history(t, z, x, dprev, unpack(yc, t - 1));
            for (int k = 0; k < ev.grid_size(t); ++k) {
              h.x[t - 1] = k;
              History h0 = h, h1 = h;
              h0.z[t - 1] = 0;
              h1.z[t - 1] = 1;
              if (!ev.reachable(h0) || !ev.reachable(h1)) continue;
              RelevanceEntry e{h, check_relevance(ev, h1, tol)};
              if (!e.result.relevant) rep.failures.push_back("irrelevant instrument at " + h.str());
              rep.relevance.push_back(e);
            }
          }
          for (int arm = 0; arm < 2; ++arm) {
            Bits d = dprev;
            d.push_back(arm);
            try {
              SupportSets s = check_support(ev, t, d, z, x, tol);
              if (s.y_histories.empty()) continue;
              if (!s.nonempty())
                rep.failures.push_back("empty matching support at t=" + std::to_string(t) + " d=" +
                                       bits_to_string(d) + " z=" + bits_to_string(z) + " x=" + bits_to_string(x));
              rep.support.push_back(std::move(s));
            } catch (const IrrelevantInstrument& ex) {
              rep.failures.push_back(std::string("support check: ") + ex.what());
            }
          }
        }
      }
  }
  return rep;
}

}  // namespace dyntx
