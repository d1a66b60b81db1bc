#include "dyntx/inference.hpp"

#include "dyntx/errors.hpp"
#include "dyntx/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace dyntx {

std::string functional_name(FunctionalSpec::Kind k) {
  switch (k) {
    case FunctionalSpec::Arsf:
      return "arsf";
    case FunctionalSpec::Ate:
      return "ate";
    case FunctionalSpec::TransitionAte:
      return "transition_ate";
    case FunctionalSpec::PeriodAte:
      return "period_ate";
    case FunctionalSpec::Ranking:
      return "ranking";
    case FunctionalSpec::GComputation:
      return "g_computation";
  }
  return "?";
}

FunctionalSpec::Kind parse_functional(const std::string& s) {
  for (auto k : {FunctionalSpec::Arsf, FunctionalSpec::Ate, FunctionalSpec::TransitionAte, FunctionalSpec::PeriodAte,
                 FunctionalSpec::Ranking, FunctionalSpec::GComputation})
    if (functional_name(k) == s) return k;
  throw ConfigError("unknown functional '" + s + "'");
}

double evaluate_scalar(const Evaluator& ev, const FunctionalSpec& f) {
  switch (f.kind) {
    case FunctionalSpec::Arsf:
      return identify_arsf(ev, f.regime, f.x, f.identify, f.horizon).value;
    case FunctionalSpec::Ate:
      return identify_ate(ev, f.regime, f.regime_b, f.x, f.identify).value;
    case FunctionalSpec::TransitionAte:
      return identify_transition_ate(ev, f.regime, f.regime_b, f.y_minus, f.x, f.identify).value;
    case FunctionalSpec::PeriodAte:
      return identify_period_ate(ev, f.y_prev, f.x, f.identify).value;
    case FunctionalSpec::GComputation:
      return g_computation(ev, f.regime, f.x, f.horizon);
    case FunctionalSpec::Ranking:
      break;
  }
  throw ConfigError("the ranking functional has no scalar value");
}

EstimateResult estimate(const PanelData& data, const FunctionalSpec& f) {
  if (data.n == 0) throw ConfigError("panel is empty");
  EmpiricalEvaluator ev(data, f.min_count);
  EstimateResult out;
  out.kind = f.kind;
  if (f.kind == FunctionalSpec::Ranking) {
    int w0 = data.w0.empty() ? 0 : data.w0.front();
    out.ranking = rank_regimes(ev, f.objective, w0, f.regimes, f.x, f.rank);
    return out;
  }
  if (f.kind == FunctionalSpec::Arsf) {
    out.arsf = identify_arsf(ev, f.regime, f.x, f.identify, f.horizon);
    out.value = out.arsf->value;
    return out;
  }
  out.value = evaluate_scalar(ev, f);
  return out;
}

std::vector<double> resample_weights(std::size_t n, std::uint64_t seed, std::uint64_t replicate) {
  auto rng = block_engine(seed, 4, replicate);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<double> w(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) w[pick(rng)] += 1.0;
  return w;
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw ConfigError("percentile of an empty sample");
  std::sort(v.begin(), v.end());
  double pos = q * static_cast<double>(v.size() - 1);
  std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  std::size_t hi = std::min(lo + 1, v.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

BootstrapResult bootstrap(const PanelData& data, const FunctionalSpec& f, int B, std::uint64_t seed, double alpha) {
  if (B < 100) throw ConfigError("bootstrap needs B >= 100");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  if (f.kind == FunctionalSpec::Ranking) throw ConfigError("bootstrap needs a scalar functional");
  if (data.n == 0) throw ConfigError("panel is empty");

  auto index = PanelIndex::build(data);
  BootstrapResult out;
  out.functional = functional_name(f.kind);
  out.B = B;
  out.alpha = alpha;
  // Replicates reuse the full-sample partners: re-matching inside each
  // resample doubles the matching noise and turns the tolerance test into a
  // spurious failure source.
  FunctionalSpec rf = f;
  rf.identify.partners = std::make_shared<std::map<std::string, int>>();
  rf.identify.freeze_partners = false;
  {
    EmpiricalEvaluator ev(index, std::vector<double>(data.n, 1.0), f.min_count);
    out.point = evaluate_scalar(ev, rf);
  }
  rf.identify.freeze_partners = true;
  out.partners_fixed = rf.identify.partners && !rf.identify.partners->empty();

  std::vector<double> values(B, 0.0);
  std::vector<std::string> errors(B);
  std::vector<char> ok(B, 0);
  parallel_for(static_cast<std::size_t>(B), [&](std::size_t b) {
    EmpiricalEvaluator ev(index, resample_weights(data.n, seed, b), f.min_count);
    try {
      values[b] = evaluate_scalar(ev, rf);
      ok[b] = 1;
    } catch (const Error& e) {
      errors[b] = e.what();
    }
  });
  for (int b = 0; b < B; ++b) {
    if (ok[b]) {
      out.replicates.push_back(values[b]);
    } else {
      ++out.failures;
      out.failure_reasons.push_back(errors[b]);
    }
  }
  if (out.failures > 0.2 * B)
    throw TooManyFailures(std::to_string(out.failures) + " of " + std::to_string(B) +
                          " bootstrap replicates failed; first: " + out.failure_reasons.front());
  out.lo = percentile(out.replicates, alpha / 2.0);
  out.hi = percentile(out.replicates, 1.0 - alpha / 2.0);
  return out;
}

}  // namespace dyntx
