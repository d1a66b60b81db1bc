#include "dyntx/regimes.hpp"

#include "dyntx/errors.hpp"
#include "dyntx/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace dyntx {

ObjectiveSpec ObjectiveSpec::scaled(double c) const {
  ObjectiveSpec o = *this;
  o.w *= c;
  o.cost *= c;
  for (double& v : o.weights) v *= c;
  for (double& v : o.costs) v *= c;
  return o;
}

std::string objective_kind_name(ObjectiveSpec::Kind k) {
  return k == ObjectiveSpec::TerminalARSF ? "terminal_arsf" : "weighted_sum";
}

namespace {

// Relative slack used for ties and strict dominance. Scale-free so that
// rescaling the objective cannot change either set.
double slack(const std::vector<RankEntry>& entries) {
  double m = 0.0;
  for (const auto& e : entries) m = std::max({m, std::fabs(e.lo), std::fabs(e.hi)});
  return 1e-10 * m;
}

void add_scaled(RankEntry& e, double c, double lo, double hi) {
  if (c >= 0.0) {
    e.lo += c * lo;
    e.hi += c * hi;
  } else {
    e.lo += c * hi;
    e.hi += c * lo;
  }
}

void check_objective(const ObjectiveSpec& o, int T) {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(o.w) || !finite(o.cost)) throw ConfigError("objective weights must be finite");
  if (o.kind == ObjectiveSpec::WeightedSum) {
    if (static_cast<int>(o.weights.size()) != T || static_cast<int>(o.costs.size()) != T)
      throw ConfigError("weighted_sum objective needs T weights and T costs");
    if (!std::all_of(o.weights.begin(), o.weights.end(), finite) ||
        !std::all_of(o.costs.begin(), o.costs.end(), finite))
      throw ConfigError("objective weights must be finite");
  }
}

bool monotone(const Regime& r) {
  int last = 0;
  for (int t = 0; t < r.size(); ++t) {
    if (!r.active[t]) continue;
    if (r.d[t] < last) return false;
    last = r.d[t];
  }
  return true;
}

}  // namespace

std::vector<Regime> argmax_set(const std::vector<RankEntry>& entries) {
  std::vector<Regime> out;
  if (entries.empty()) return out;
  double best = entries.front().value;
  for (const auto& e : entries) best = std::max(best, e.value);
  double tol = slack(entries);
  for (const auto& e : entries)
    if (e.value >= best - tol) out.push_back(e.regime);
  return out;
}

std::vector<Regime> exclusion_set(const std::vector<RankEntry>& entries) {
  std::vector<Regime> out;
  double tol = slack(entries);
  for (const auto& e : entries) {
    bool dominated = std::any_of(entries.begin(), entries.end(),
                                 [&](const RankEntry& o) { return &o != &e && o.lo > e.hi + tol; });
    if (dominated) out.push_back(e.regime);
  }
  return out;
}

RegimeRanking rank_regimes(const Evaluator& ev, const ObjectiveSpec& objective, int w0,
                           const std::vector<Regime>& regimes, const Bits& x, const RankOptions& opt) {
  const int T = ev.horizon();
  if (regimes.empty()) throw ConfigError("regime set is empty");
  check_objective(objective, T);
  for (const auto& r : regimes) {
    if (r.size() != T) throw ConfigError("regime length mismatch: " + r.str());
    if (opt.irreversible_d && !monotone(r))
      throw ConfigError("regime " + r.str() + " violates irreversible treatment");
  }

  IdentifyOptions iopt = opt.identify;
  iopt.fallback_bounds = opt.allow_bounds;

  RegimeRanking out;
  out.w0 = w0;
  out.x = x;
  out.objective = objective;
  out.entries.resize(regimes.size());
  parallel_for(regimes.size(), [&](std::size_t i) {
    const Regime& r = regimes[i];
    RankEntry e;
    e.regime = r;
    bool bounded = false;
    auto period = [&](int t, double weight) {
      if (weight == 0.0) return;
      ArsfResult a = identify_arsf(ev, r, x, iopt, t);
      bounded = bounded || a.status != Status::Point;
      add_scaled(e, weight, a.lo, a.hi);
    };
    double treated = 0.0;
    if (objective.kind == ObjectiveSpec::TerminalARSF) {
      period(T, objective.w);
      for (int t = 0; t < T; ++t) treated += r.active[t] ? objective.cost * r.d[t] : 0.0;
    } else {
      for (int t = 1; t <= T; ++t) period(t, objective.weights[t - 1]);
      for (int t = 0; t < T; ++t) treated += r.active[t] ? objective.costs[t] * r.d[t] : 0.0;
    }
    e.lo -= treated;
    e.hi -= treated;
    e.status = bounded ? Status::Bounds : Status::Point;
    e.value = bounded ? 0.5 * (e.lo + e.hi) : e.lo;
    out.entries[i] = e;
  });

  bool all_point = std::all_of(out.entries.begin(), out.entries.end(),
                               [](const RankEntry& e) { return e.status == Status::Point; });
  if (all_point) {
    out.argmax = argmax_set(out.entries);
    for (const auto& e : out.entries)
      if (std::find(out.argmax.begin(), out.argmax.end(), e.regime) == out.argmax.end())
        out.excluded.push_back(e.regime);
    return out;
  }
  out.excluded = exclusion_set(out.entries);
  for (const auto& e : out.entries)
    if (std::find(out.excluded.begin(), out.excluded.end(), e.regime) == out.excluded.end())
      out.argmax.push_back(e.regime);
  if (out.argmax.size() > 1) out.outcome = RegimeRanking::Inconclusive;
  return out;
}

}  // namespace dyntx
