#include "dyntx/identify.hpp"

#include "dyntx/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <tuple>

namespace dyntx {

double h_tolerance(const Evaluator& ev, const Tolerances& tol, double se) {
  double base = tol.h >= 0.0 ? tol.h : ev.tol_h();
  return ev.counting() ? std::max(base * se, 1e-12) : base;
}

double relevance_tolerance(const Evaluator& ev, const Tolerances& tol, double se) {
  double base = tol.relevance >= 0.0 ? tol.relevance : ev.tol_relevance();
  return ev.counting() ? std::max(base * se, 1e-12) : base;
}

namespace {

History with_zx(History h, int z, int x) {
  h.z[h.t - 1] = z;
  h.x[h.t - 1] = x;
  return h;
}

}  // namespace

Relevance check_relevance(const Evaluator& ev, const History& h, const Tolerances& tol) {
  int x = h.x[h.t - 1];
  CellStats a = ev.propensity(with_zx(h, 1, x), 1);
  CellStats b = ev.propensity(with_zx(h, 0, x), 1);
  Relevance r;
  r.p1 = a.estimate;
  r.p0 = b.estimate;
  r.tol = relevance_tolerance(ev, tol, std::hypot(a.std_error, b.std_error));
  r.relevant = std::fabs(r.p1 - r.p0) > r.tol;
  return r;
}

HStat compute_h_general(const Evaluator& ev, const History& h, int z, int z_alt, int x, int x_alt) {
  CellStats a = ev.joint(with_zx(h, z, x), 1, 1);
  CellStats b = ev.joint(with_zx(h, z, x_alt), 1, 0);
  CellStats c = ev.joint(with_zx(h, z_alt, x), 1, 1);
  CellStats d = ev.joint(with_zx(h, z_alt, x_alt), 1, 0);
  HStat s;
  s.t = h.t;
  s.arm = 1;
  s.x = x;
  // Paired so identical cells cancel exactly.
  s.value = (a.estimate - c.estimate) + (b.estimate - d.estimate);
  s.std_error = std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error + c.std_error * c.std_error +
                          d.std_error * d.std_error);
  return s;
}

HStat compute_h_arm(const Evaluator& ev, const History& h, int arm, int x) {
  CellStats a = ev.joint(with_zx(h, 1, x), 1, arm);
  CellStats b = ev.joint(with_zx(h, 0, x), 1, arm);
  HStat s;
  s.t = h.t;
  s.arm = arm;
  s.x = x;
  s.value = a.estimate - b.estimate;
  s.std_error = std::hypot(a.std_error, b.std_error);
  return s;
}

std::string sign_name(Sign s) {
  switch (s) {
    case Sign::Negative:
      return "negative";
    case Sign::Zero:
      return "zero";
    case Sign::Positive:
      return "positive";
  }
  return "?";
}

SignResult sign_mu_gap(const Evaluator& ev, const History& h, int x, int x_alt, const Tolerances& tol) {
  Relevance rel = check_relevance(ev, with_zx(h, 1, x), tol);
  if (!rel.relevant) throw IrrelevantInstrument(h.str());
  HStat s = compute_h_general(ev, h, 1, 0, x, x_alt);
  SignResult out;
  out.h = rel.p1 < rel.p0 ? -s.value : s.value;
  out.tol = h_tolerance(ev, tol, s.std_error);
  out.sign = out.h > out.tol ? Sign::Positive : (out.h < -out.tol ? Sign::Negative : Sign::Zero);
  return out;
}

MatchSet match_lambda(const Evaluator& ev, const History& h, int arm, int x, const Tolerances& tol) {
  MatchSet ms;
  ms.t = h.t;
  ms.arm = arm;
  ms.x = x;
  Relevance rel = check_relevance(ev, with_zx(h, 1, x), tol);
  if (!rel.relevant) throw IrrelevantInstrument(h.str());
  for (int xa = 0; xa < ev.grid_size(h.t); ++xa) {
    HStat s;
    try {
      s = arm ? compute_h_general(ev, h, 1, 0, x, xa) : compute_h_general(ev, h, 1, 0, xa, x);
    } catch (const UnreachableCell&) {
      continue;
    }
    double res = std::fabs(s.value);
    double tl = h_tolerance(ev, tol, s.std_error);
    ms.candidates.emplace_back(xa, res);
    ms.tols.push_back(tl);
    if (res <= tl) ms.matches.emplace_back(xa, res);
  }
  std::stable_sort(ms.matches.begin(), ms.matches.end(),
                   [](const auto& a, const auto& b) { return a.second < b.second; });
  ms.status = ms.matches.empty() ? MatchSet::NoMatch : MatchSet::Matched;
  return ms;
}

MatchSet match_lambda_pooled(const Evaluator& ev, const History& h, int arm, int x, const Tolerances& tol) {
  const int t = h.t;
  const int K = ev.grid_size(t);
  MatchSet ms;
  ms.t = t;
  ms.arm = arm;
  ms.x = x;
  // Each cell's h vanishes at a true partner whatever the weight, so every
  // candidate gets its own precision weights. Counts rather than plug-in
  // variances: a small cell with an extreme frequency would otherwise dominate.
  std::vector<double> sum(K, 0.0), var(K, 0.0), wsum(K, 0.0);
  int prefixes = 1;
  for (int s = 1; s < t; ++s) prefixes *= ev.grid_size(s);
  bool any_relevant = false;
  for (std::uint32_t dc = 0; dc < (1u << (t - 1)); ++dc)
  for (std::uint32_t zc = 0; zc < (1u << (t - 1)); ++zc)
    for (int xc = 0; xc < prefixes; ++xc) {
      History c = h;
      for (int s = 1, rem = xc; s < t; ++s) {
        c.d[s - 1] = (dc >> (s - 1)) & 1u;
        c.z[s - 1] = (zc >> (s - 1)) & 1u;
        c.x[s - 1] = rem % ev.grid_size(s);
        rem /= ev.grid_size(s);
      }
      double orient = 1.0, inv = 0.0;
      try {
        Relevance rel = check_relevance(ev, with_zx(c, 1, x), tol);
        if (!rel.relevant) continue;
        orient = rel.p1 < rel.p0 ? -1.0 : 1.0;
        inv = 1.0 / ev.cell(with_zx(c, 1, x)).n + 1.0 / ev.cell(with_zx(c, 0, x)).n;
      } catch (const UnreachableCell&) {
        continue;
      }
      any_relevant = true;
      for (int xa = 0; xa < K; ++xa) {
        try {
          HStat s = arm ? compute_h_general(ev, c, 1, 0, x, xa) : compute_h_general(ev, c, 1, 0, xa, x);
          double w = 1.0 / (inv + 1.0 / ev.cell(with_zx(c, 1, xa)).n + 1.0 / ev.cell(with_zx(c, 0, xa)).n);
          sum[xa] += w * orient * s.value;
          var[xa] += w * w * s.std_error * s.std_error;
          wsum[xa] += w;
        } catch (const UnreachableCell&) {
        }
      }
    }
  if (!any_relevant) throw IrrelevantInstrument(h.str() + " (pooled)");
  double base = tol.h >= 0.0 ? tol.h : ev.tol_h();
  // Candidates are ranked by the normal log-density of their estimate at
  // zero: raw residuals favor whichever column is noisiest by chance and
  // standardized ones favor noisy columns outright.
  std::map<int, double> score;
  for (int xa = 0; xa < K; ++xa) {
    if (wsum[xa] <= 0.0) continue;
    double res = std::fabs(sum[xa]) / wsum[xa];
    double se = std::max(std::sqrt(var[xa]) / wsum[xa], 1e-12);
    double tl = base * se;
    ms.candidates.emplace_back(xa, res);
    ms.tols.push_back(tl);
    score[xa] = 0.5 * (res / se) * (res / se) + std::log(se);
    if (res <= tl) ms.matches.emplace_back(xa, res);
  }
  std::stable_sort(ms.matches.begin(), ms.matches.end(),
                   [&](const auto& a, const auto& b) { return score[a.first] < score[b.first]; });
  ms.status = ms.matches.empty() ? MatchSet::NoMatch : MatchSet::Matched;
  return ms;
}

std::string match_key(const History& h, int arm, bool pooled) {
  if (!pooled) return h.key() + "|" + std::to_string(arm);
  std::string k = std::to_string(h.t) + "|" + bits_to_string(h.y) + "|" + std::to_string(h.x[h.t - 1]) + "|" +
                  std::to_string(arm);
  return k;
}

std::string status_name(Status s) {
  switch (s) {
    case Status::Point:
      return "point";
    case Status::Bounds:
      return "bounds";
    case Status::Failed:
      return "failed";
  }
  return "?";
}

namespace {

struct Interval {
  double lo = 0.0, hi = 0.0;
};

void check_query(const Evaluator& ev, const Regime& r, const Bits& x) {
  int T = ev.horizon();
  if (r.size() != T)
    throw ConfigError("regime length mismatch: regime " + r.str() + " has length " + std::to_string(r.size()) +
                      " but T=" + std::to_string(T));
  if (static_cast<int>(r.active.size()) != T) throw ConfigError("regime length mismatch in the mask");
  if (static_cast<int>(x.size()) != T)
    throw ConfigError("x length mismatch: got " + std::to_string(x.size()) + " values for T=" + std::to_string(T));
  for (int t = 1; t <= T; ++t)
    if (x[t - 1] < 0 || x[t - 1] >= ev.grid_size(t))
      throw ConfigError("x index out of grid at t=" + std::to_string(t));
}

// The identification recursion for one instrument path z. A node is the
// expected target indicator given z, the (possibly substituted) x history,
// the conditioned treatments d^{t-1} and outcomes y^{t-1}.
class Engine {
 public:
  Engine(const Evaluator& ev, const Regime& r, const Bits& target, int horizon, const IdentifyOptions& opt)
      : ev_(ev), r_(r), target_(target), H_(horizon), opt_(opt) {}

  Interval run(const Bits& z, const Bits& x) {
    z_ = z;
    memo_.clear();
    Bits d, y, chi(x.begin(), x.begin() + H_);
    return node(1, d, chi, y);
  }

  bool used_bounds = false;
  std::vector<TraceNode> trace;

 private:
  bool target_ok(int t, int y) const { return target_[t - 1] < 0 || target_[t - 1] == y; }

  History history(int t, const Bits& d, const Bits& chi, const Bits& y) const {
    History h;
    h.t = t;
    h.z.assign(z_.begin(), z_.begin() + t);
    h.x.assign(chi.begin(), chi.begin() + t);
    h.d = d;
    h.y = y;
    return h;
  }

  std::string key(int t, const Bits& d, const Bits& chi, const Bits& y) const {
    std::string k(1, static_cast<char>(t));
    for (int s = 0; s + 1 < t; ++s) {
      k.push_back(static_cast<char>(d[s] | (y[s] << 1)));
      k.append(std::to_string(chi[s])).push_back(',');
    }
    return k;
  }

  Interval next(int t, Bits& d, Bits& chi, Bits& y, int dt, int yt) {
    if (t == H_) return {1.0, 1.0};
    d.push_back(dt);
    y.push_back(yt);
    Interval v = node(t + 1, d, chi, y);
    d.pop_back();
    y.pop_back();
    return v;
  }

  // Outcome expansion inside the group with D_t = dt at x_t = chi[t-1].
  Interval expand(int t, Bits& d, Bits& chi, Bits& y, int dt, std::vector<double>* laws) {
    History h = history(t, d, chi, y);
    Interval acc;
    for (int yt = 0; yt < 2; ++yt) {
      double q = ev_.transition(h, dt, yt).estimate;
      if (laws) laws->push_back(q);
      if (q == 0.0 || !target_ok(t, yt)) continue;
      Interval v = next(t, d, chi, y, dt, yt);
      acc.lo += q * v.lo;
      acc.hi += q * v.hi;
    }
    return acc;
  }

  Interval substituted(int t, Bits& d, Bits& chi, Bits& y, int dt, int xs, std::vector<double>* laws) {
    int keep = chi[t - 1];
    chi[t - 1] = xs;
    Interval v;
    try {
      v = expand(t, d, chi, y, dt, laws);
    } catch (...) {
      chi[t - 1] = keep;
      throw;
    }
    chi[t - 1] = keep;
    return v;
  }

  Interval node(int t, Bits& d, Bits& chi, Bits& y) {
    if (opt_irreversible_y(t, y)) {
      for (int s = t; s <= H_; ++s)
        if (!target_ok(s, 1)) return {0.0, 0.0};
      return {1.0, 1.0};
    }
    std::string k = key(t, d, chi, y);
    auto it = memo_.find(k);
    if (it != memo_.end()) return it->second;

    History h = history(t, d, chi, y);
    CellTable c = ev_.cell(h);
    TraceNode rec;
    rec.t = t;
    rec.z = h.z;
    rec.x = h.x;
    rec.d = d;
    rec.y = y;
    rec.active = r_.active[t - 1] != 0;
    Interval out;

    if (!rec.active) {
      for (int o = 0; o < 4; ++o) rec.observed.push_back(c.p[o]);
      for (int dt = 0; dt < 2; ++dt)
        for (int yt = 0; yt < 2; ++yt) {
          double q = c.prob(yt, dt);
          if (q == 0.0 || !target_ok(t, yt)) continue;
          Interval v = next(t, d, chi, y, dt, yt);
          out.lo += q * v.lo;
          out.hi += q * v.hi;
        }
    } else {
      int rt = r_.d[t - 1];
      rec.r = rt;
      rec.w_consistent = c.prob(0, rt) + c.prob(1, rt);
      rec.w_flipped = c.prob(0, 1 - rt) + c.prob(1, 1 - rt);
      for (int yt = 0; yt < 2; ++yt) {
        double q = c.prob(yt, rt);
        rec.y_consistent.push_back(rec.w_consistent > 0.0 ? q / rec.w_consistent : 0.0);
        if (q == 0.0 || !target_ok(t, yt)) continue;
        Interval v = next(t, d, chi, y, rt, yt);
        out.lo += q * v.lo;
        out.hi += q * v.hi;
      }
      if (rec.w_flipped > 0.0) {
        Interval f = flipped(t, d, chi, y, rt, h, rec);
        out.lo += rec.w_flipped * f.lo;
        out.hi += rec.w_flipped * f.hi;
      }
    }
    out.lo = std::clamp(out.lo, 0.0, 1.0);
    out.hi = std::clamp(out.hi, 0.0, 1.0);
    rec.lo = out.lo;
    rec.hi = out.hi;
    trace.push_back(std::move(rec));
    memo_.emplace(std::move(k), out);
    return out;
  }

  // Group with D_t != r_t: replace x_t by a partner that equates the
  // period-t index across the two treatment arms.
  Interval flipped(int t, Bits& d, Bits& chi, Bits& y, int rt, const History& h, TraceNode& rec) {
    const int alt = 1 - rt;
    const bool pooled = ev_.counting() && opt_.pool_matching;
    const std::string mk = opt_.partners ? match_key(h, rt, pooled) : std::string();
    if (opt_.partners && opt_.freeze_partners) {
      auto it = opt_.partners->find(mk);
      if (it != opt_.partners->end()) {
        rec.substituted = true;
        rec.matched_x = it->second;
        return substituted(t, d, chi, y, alt, it->second, &rec.y_flipped);
      }
    }
    MatchSet ms = pooled ? match_lambda_pooled(ev_, h, rt, chi[t - 1], opt_.tol)
                         : match_lambda(ev_, h, rt, chi[t - 1], opt_.tol);
    if (ms.status == MatchSet::NoMatch && opt_.force_match && !ms.candidates.empty()) {
      auto best = std::min_element(ms.candidates.begin(), ms.candidates.end(),
                                   [](const auto& a, const auto& b) { return a.second < b.second; });
      ms.matches.push_back(*best);
      ms.status = MatchSet::Matched;
    }
    if (opt_.partners && !opt_.freeze_partners && ms.status == MatchSet::Matched)
      opt_.partners->emplace(mk, ms.matches.front().first);
    if (ms.status == MatchSet::Matched) {
      int best = ms.matches.front().first;
      Interval v = substituted(t, d, chi, y, alt, best, &rec.y_flipped);
      rec.substituted = true;
      rec.matched_x = best;
      rec.residual = ms.matches.front().second;
      double tl = 0.0;
      for (std::size_t i = 0; i < ms.candidates.size(); ++i)
        if (ms.candidates[i].first == best) tl = ms.tols[i];
      // Counting backends admit noise-level matches whose values differ by
      // sampling error; only the exact backend can certify agreement.
      if (ev_.counting()) return v;
      for (std::size_t i = 1; i < ms.matches.size(); ++i) {
        Interval o = substituted(t, d, chi, y, alt, ms.matches[i].first, nullptr);
        rec.spread = std::max({rec.spread, std::fabs(o.lo - v.lo), std::fabs(o.hi - v.hi)});
      }
      if (rec.spread > opt_.tol.spread_factor * tl)
        throw MatchSpread(h.str() + " spread " + std::to_string(rec.spread));
      return v;
    }
    if (!opt_.fallback_bounds) throw NoMatch(h.str() + " arm " + std::to_string(rt));

    // Sign of mu_t(r_t, x_t) - mu_t(1-r_t, x~): a nonnegative gap makes the
    // substituted group a lower bound, a nonpositive gap an upper bound.
    used_bounds = true;
    rec.bounded = true;
    Relevance rel = check_relevance(ev_, h, opt_.tol);
    double flip = rel.p1 < rel.p0 ? -1.0 : 1.0;
    int lower = -1, upper = -1;
    double lower_res = kInf, upper_res = kInf;
    for (std::size_t i = 0; i < ms.candidates.size(); ++i) {
      auto [xa, res] = ms.candidates[i];
      HStat s = rt ? compute_h_general(ev_, h, 1, 0, chi[t - 1], xa) : compute_h_general(ev_, h, 1, 0, xa, chi[t - 1]);
      double g = flip * s.value * (rt ? 1.0 : -1.0);
      double tl = ms.tols[i];
      if (g >= -tl && res < lower_res) {
        lower = xa;
        lower_res = res;
      }
      if (g <= tl && res < upper_res) {
        upper = xa;
        upper_res = res;
      }
    }
    Interval v{0.0, 1.0};
    if (lower >= 0) {
      v.lo = substituted(t, d, chi, y, alt, lower, nullptr).lo;
      rec.lower_x = lower;
      rec.lower_sign = 1;
    }
    if (upper >= 0) {
      v.hi = substituted(t, d, chi, y, alt, upper, nullptr).hi;
      rec.upper_x = upper;
      rec.upper_sign = -1;
    }
    return v;
  }

  bool opt_irreversible_y(int t, const Bits& y) const { return opt_.irreversible_y && t >= 2 && y[t - 2] == 1; }

  const Evaluator& ev_;
  const Regime& r_;
  const Bits& target_;
  int H_;
  const IdentifyOptions& opt_;
  Bits z_;
  std::map<std::string, Interval> memo_;
};

ArsfResult run_engine(const Evaluator& ev, const Regime& r, const Bits& target, const Bits& x, int horizon,
                      const IdentifyOptions& opt) {
  check_query(ev, r, x);
  if (horizon < 1 || horizon > ev.horizon()) throw ConfigError("horizon out of range");
  if (static_cast<int>(target.size()) < horizon) throw ConfigError("target shorter than the horizon");
  ArsfResult res;
  res.regime = r;
  res.x = x;
  Engine eng(ev, r, target, horizon, opt);
  Bits xh(x.begin(), x.begin() + horizon);
  // Z enters a full regime's potential outcomes nowhere, so each path alone
  // identifies the target; masked regimes need the whole average.
  bool full = true;
  for (int t = 0; t < horizon; ++t) full = full && r.active[t];
  const bool may_skip = ev.counting() && opt.skip_sparse_paths && full;
  Interval total;
  double kept = 0.0;
  std::string first_error;
  for (std::uint32_t zc = 0; zc < (1u << horizon); ++zc) {
    Bits z = unpack(zc, horizon);
    double w = ev.z_weight(z, xh);
    if (w <= 0.0) continue;
    Interval v;
    if (may_skip) {
      std::size_t mark = eng.trace.size();
      try {
        v = eng.run(z, x);
      } catch (const UnreachableCell& e) {
        eng.trace.resize(mark);
        res.skipped.emplace_back(z, e.what());
        if (first_error.empty()) first_error = e.what();
        continue;
      }
    } else {
      v = eng.run(z, x);
    }
    res.aggregation.emplace_back(z, w);
    kept += w;
    total.lo += w * v.lo;
    total.hi += w * v.hi;
  }
  if (may_skip && !res.skipped.empty()) {
    if (kept <= 0.0) throw UnreachableCell(first_error.substr(first_error.find(": ") + 2) + " on every instrument path");
    total.lo /= kept;
    total.hi /= kept;
    for (auto& a : res.aggregation) a.second /= kept;
  }
  res.lo = std::clamp(total.lo, 0.0, 1.0);
  res.hi = std::clamp(total.hi, 0.0, 1.0);
  res.status = eng.used_bounds ? Status::Bounds : Status::Point;
  res.value = res.status == Status::Point ? res.lo : 0.5 * (res.lo + res.hi);
  res.trace = std::move(eng.trace);
  return res;
}

}  // namespace

ArsfResult identify_joint_prob(const Evaluator& ev, const Regime& r, const Bits& target, const Bits& x, int horizon,
                               const IdentifyOptions& opt) {
  bool any = false;
  for (int s = 0; s < horizon && s < static_cast<int>(target.size()); ++s) any = any || target[s] >= 0;
  if (!any) {
    check_query(ev, r, x);
    ArsfResult res;
    res.regime = r;
    res.x = x;
    res.status = Status::Point;
    res.value = res.lo = res.hi = 1.0;
    return res;
  }
  return run_engine(ev, r, target, x, horizon, opt);
}

ArsfResult identify_arsf(const Evaluator& ev, const Regime& r, const Bits& x, const IdentifyOptions& opt,
                         int horizon) {
  if (horizon < 0) horizon = ev.horizon();
  Bits target(ev.horizon(), -1);
  if (horizon >= 1 && horizon <= ev.horizon()) target[horizon - 1] = 1;
  return identify_joint_prob(ev, r, target, x, horizon, opt);
}

ArsfResult identify_arsf_subsequence(const Evaluator& ev, const Regime& r, const Bits& x,
                                     const IdentifyOptions& opt) {
  return identify_arsf(ev, r, x, opt);
}

Effect identify_ate(const Evaluator& ev, const Regime& a, const Regime& b, const Bits& x,
                    const IdentifyOptions& opt) {
  ArsfResult ra = identify_arsf(ev, a, x, opt);
  ArsfResult rb = a == b ? ra : identify_arsf(ev, b, x, opt);
  Effect e;
  if (ra.status == Status::Point && rb.status == Status::Point) {
    e.status = Status::Point;
    e.value = e.lo = e.hi = ra.value - rb.value;
    return e;
  }
  e.status = Status::Bounds;
  e.lo = std::max(-1.0, ra.lo - rb.hi);
  e.hi = std::min(1.0, ra.hi - rb.lo);
  e.value = 0.5 * (e.lo + e.hi);
  return e;
}

namespace {

void require_point(const ArsfResult& r, const char* what) {
  if (r.status != Status::Point) throw NoMatch(std::string(what) + " is only partially identified");
}

// Pr[Y_T(d)=1, Y_-(d)=y_-] and Pr[Y_-(d)=y_-], the latter truncated at the
// last restricted period.
std::pair<double, double> transition_terms(const Evaluator& ev, const Regime& r, const Bits& y_minus, const Bits& x,
                                           const IdentifyOptions& opt) {
  const int T = ev.horizon();
  if (static_cast<int>(y_minus.size()) != T - 1) throw ConfigError("y_minus must have length T-1");
  Bits target(y_minus);
  target.push_back(1);
  ArsfResult num = identify_joint_prob(ev, r, target, x, T, opt);
  require_point(num, "transition numerator");
  int last = 0;
  for (int s = 1; s < T; ++s)
    if (y_minus[s - 1] >= 0) last = s;
  double den = 1.0;
  if (last > 0) {
    target.back() = -1;
    ArsfResult d = identify_joint_prob(ev, r, target, x, last, opt);
    require_point(d, "transition denominator");
    den = d.value;
  }
  if (den < opt.tol.denominator_floor)
    throw DegenerateConditioning("Pr[Y_-(d)=y_-|x] = " + std::to_string(den) + " is below the floor");
  return {num.value, den};
}

}  // namespace

TransitionEffect identify_transition_ate(const Evaluator& ev, const Regime& a, const Regime& b, const Bits& y_minus,
                                         const Bits& x, const IdentifyOptions& opt) {
  TransitionEffect e;
  std::tie(e.numerator_a, e.denominator_a) = transition_terms(ev, a, y_minus, x, opt);
  if (a == b) {
    std::tie(e.numerator_b, e.denominator_b) = std::pair{e.numerator_a, e.denominator_a};
  } else {
    std::tie(e.numerator_b, e.denominator_b) = transition_terms(ev, b, y_minus, x, opt);
  }
  e.ratio_a = e.numerator_a / e.denominator_a;
  e.ratio_b = e.numerator_b / e.denominator_b;
  e.value = e.ratio_a - e.ratio_b;
  return e;
}

PeriodEffect identify_period_ate(const Evaluator& ev, int y_prev, const Bits& x, const IdentifyOptions& opt) {
  const int T = ev.horizon();
  PeriodEffect e;
  Regime r;
  r.d.assign(T, 0);
  r.active.assign(T, 0);
  r.active[T - 1] = 1;
  Bits target(T, -1);
  if (T >= 2) {
    target[T - 2] = y_prev;
    ArsfResult den = identify_joint_prob(ev, r, target, x, T - 1, opt);
    require_point(den, "Pr[Y_{T-1}=y|x]");
    e.denominator = den.value;
    if (e.denominator < opt.tol.denominator_floor)
      throw DegenerateConditioning("Pr[Y_{T-1}=y|x] = " + std::to_string(e.denominator) + " is below the floor");
  }
  target[T - 1] = 1;
  for (int dT = 0; dT < 2; ++dT) {
    r.d[T - 1] = dT;
    ArsfResult num = identify_joint_prob(ev, r, target, x, T, opt);
    require_point(num, "period-specific numerator");
    (dT ? e.treated : e.untreated) = num.value / e.denominator;
  }
  e.value = e.treated - e.untreated;
  return e;
}

double ex_id_closed_form(const Evaluator& ev, const Regime& r, const Bits& x, const Tolerances& tol) {
  if (ev.horizon() != 2 || r.size() != 2 || !r.is_full()) throw ConfigError("closed form needs T=2 and a full regime");
  check_query(ev, r, x);
  const int d1 = r.d[0], d2 = r.d[1], d1a = 1 - d1, d2a = 1 - d2;
  auto h1 = [&](const Bits& z, int x1) {
    History h;
    h.t = 1;
    h.z = {z[0]};
    h.x = {x1};
    return h;
  };
  auto h2 = [&](const Bits& z, int x1, int x2, int dd1, int y1) {
    History h;
    h.t = 2;
    h.z = z;
    h.x = {x1, x2};
    h.d = {dd1};
    h.y = {y1};
    return h;
  };
  auto best = [&](const History& h, int arm) {
    MatchSet ms = match_lambda(ev, h, arm, h.x[h.t - 1], tol);
    if (ms.status != MatchSet::Matched) throw NoMatch(h.str());
    return ms.matches.front().first;
  };
  // P[y1, dd1, dd2 | x1, x2, z]
  auto path = [&](const Bits& z, int x1, int x2, int y1, int dd1, int dd2) {
    double p1 = ev.cell(h1(z, x1)).prob(y1, dd1);
    if (p1 == 0.0) return 0.0;
    CellTable c2 = ev.cell(h2(z, x1, x2, dd1, y1));
    return p1 * (c2.prob(0, dd2) + c2.prob(1, dd2));
  };

  double total = 0.0;
  for (std::uint32_t zc = 0; zc < 4; ++zc) {
    Bits z = unpack(zc, 2);
    double wz = ev.z_weight(z, x);
    if (wz <= 0.0) continue;
    const int x1 = x[0], x2 = x[1];

    // P[d|x,z] E[Y_2|x,z,d]
    double pd = path(z, x1, x2, 0, d1, d2) + path(z, x1, x2, 1, d1, d2);
    double ey = 0.0;
    if (pd > 0.0) {
      for (int y1 = 0; y1 < 2; ++y1) {
        double p1 = ev.cell(h1(z, x1)).prob(y1, d1);
        if (p1 > 0.0) ey += p1 * ev.cell(h2(z, x1, x2, d1, y1)).prob(1, d2);
      }
      ey /= pd;
    }
    double term1 = pd * ey;

    // P[d1,d2'|x,z] mu_{2,d1,d2'}
    double pa = path(z, x1, x2, 0, d1, d2a) + path(z, x1, x2, 1, d1, d2a);
    double mu_a = 0.0;
    if (pa > 0.0) {
      for (int y1 = 0; y1 < 2; ++y1) {
        double py = path(z, x1, x2, y1, d1, d2a) / pa;
        if (py == 0.0) continue;
        int x2m = best(h2(z, x1, x2, d1, y1), d2);
        mu_a += py * ev.transition(h2(z, x1, x2m, d1, y1), d2a, 1).estimate;
      }
    }
    double term2 = pa * mu_a;

    // The D_1 = d1' group is carried by the partner lambda_1(x_1) throughout.
    double p1a = ev.propensity(h1(z, x1), d1a).estimate;
    double term3 = 0.0, term4 = 0.0;
    if (p1a > 0.0) {
      int x1m = best(h1(z, x1), d1);
      double w1 = ev.propensity(h1(z, x1m), d1a).estimate;
      // P[d1', d2 | lambda_1(x_1), x_2, z] E[Y_2 | lambda_1(x_1), x_2, z, d1', d2]
      double pb = (path(z, x1m, x2, 0, d1a, d2) + path(z, x1m, x2, 1, d1a, d2)) / w1;
      double eb = 0.0;
      if (pb > 0.0) {
        for (int y1 = 0; y1 < 2; ++y1) {
          double p1 = ev.cell(h1(z, x1m)).prob(y1, d1a);
          if (p1 > 0.0) eb += p1 / w1 * ev.cell(h2(z, x1m, x2, d1a, y1)).prob(1, d2);
        }
        eb /= pb;
      }
      term3 = p1a * pb * eb;

      // P[d1', d2' | lambda_1(x_1), x_2, z] mu_{2,d1',d2'}
      double pc = (path(z, x1m, x2, 0, d1a, d2a) + path(z, x1m, x2, 1, d1a, d2a)) / w1;
      double mu_b = 0.0;
      if (pc > 0.0) {
        for (int y1 = 0; y1 < 2; ++y1) {
          double py = path(z, x1m, x2, y1, d1a, d2a) / w1 / pc;
          if (py == 0.0) continue;
          int x2m = best(h2(z, x1m, x2, d1a, y1), d2);
          mu_b += py * ev.transition(h2(z, x1m, x2m, d1a, y1), d2a, 1).estimate;
        }
      }
      term4 = p1a * pc * mu_b;
    }
    total += wz * (term1 + term2 + term3 + term4);
  }
  return std::clamp(total, 0.0, 1.0);
}

double g_computation(const Evaluator& ev, const Regime& r, const Bits& x, int horizon) {
  check_query(ev, r, x);
  const int H = horizon < 0 ? ev.horizon() : horizon;
  Bits xh(x.begin(), x.begin() + H);
  double total = 0.0;
  for (std::uint32_t zc = 0; zc < (1u << H); ++zc) {
    Bits z = unpack(zc, H);
    double wz = ev.z_weight(z, xh);
    if (wz <= 0.0) continue;
    // Chain P[y_t | history, d_t = regime] along the regime.
    std::function<double(int, Bits&)> rec = [&](int t, Bits& y) -> double {
      History h;
      h.t = t;
      h.z.assign(z.begin(), z.begin() + t);
      h.x.assign(x.begin(), x.begin() + t);
      h.d.assign(r.d.begin(), r.d.begin() + (t - 1));
      h.y = y;
      if (t == H) return ev.transition(h, r.d[t - 1], 1).estimate;
      double acc = 0.0;
      for (int yt = 0; yt < 2; ++yt) {
        double q = ev.transition(h, r.d[t - 1], yt).estimate;
        if (q == 0.0) continue;
        y.push_back(yt);
        acc += q * rec(t + 1, y);
        y.pop_back();
      }
      return acc;
    };
    Bits y;
    total += wz * rec(1, y);
  }
  return std::clamp(total, 0.0, 1.0);
}

}  // namespace dyntx
