#pragma once

#include "dyntx/identify.hpp"
#include "dyntx/regimes.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dyntx {

struct FunctionalSpec {
  enum Kind { Arsf, Ate, TransitionAte, PeriodAte, Ranking, GComputation };
  Kind kind = Arsf;
  Regime regime;
  Regime regime_b;  // second arm of ate and transition_ate
  Bits x;
  Bits y_minus;     // transition_ate: length T-1, -1 unrestricted
  int y_prev = 0;   // period_ate
  int horizon = -1;
  ObjectiveSpec objective;
  std::vector<Regime> regimes;
  RankOptions rank;
  IdentifyOptions identify;
  double min_count = 30.0;
};

std::string functional_name(FunctionalSpec::Kind k);
FunctionalSpec::Kind parse_functional(const std::string& s);

// Scalar value of the functional on any evaluator. Ranking has no scalar.
double evaluate_scalar(const Evaluator& ev, const FunctionalSpec& f);

struct EstimateResult {
  FunctionalSpec::Kind kind = FunctionalSpec::Arsf;
  double value = 0.0;
  std::optional<ArsfResult> arsf;
  std::optional<RegimeRanking> ranking;
};

// Plug-in estimate: frequency evaluator on the panel plus the matching
// identification or ranking step.
EstimateResult estimate(const PanelData& data, const FunctionalSpec& f);

struct BootstrapResult {
  std::string functional;
  double point = 0.0;
  int B = 0;
  double alpha = 0.05;
  double lo = 0.0, hi = 0.0;
  int failures = 0;
  std::vector<double> replicates;  // successful ones, in replicate order
  std::vector<std::string> failure_reasons;
  // True when replicates reused the full-sample partner choices. Validity of
  // the percentile interval with estimated partners is not established.
  bool partners_fixed = false;
};

// Individual-level resampling. Each replicate reweights whole T-paths, so
// every resampled path is a row of the original panel.
BootstrapResult bootstrap(const PanelData& data, const FunctionalSpec& f, int B, std::uint64_t seed,
                          double alpha = 0.05);

// Multiplicities of one individual-level resample of n units.
std::vector<double> resample_weights(std::size_t n, std::uint64_t seed, std::uint64_t replicate);

// Linear-interpolation percentile of a sample.
double percentile(std::vector<double> v, double q);

}  // namespace dyntx
