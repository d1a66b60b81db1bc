#pragma once

#include "dyntx/identify.hpp"

#include <string>
#include <vector>

namespace dyntx {

struct ObjectiveSpec {
  enum Kind { TerminalARSF, WeightedSum };
  Kind kind = TerminalARSF;
  // TerminalARSF: Pi = w E[Y_T(d)] - cost * sum_t d_t
  double w = 1.0;
  double cost = 0.0;
  // WeightedSum: Pi = sum_t weights_t E[Y_t(d)] - sum_t costs_t d_t
  std::vector<double> weights, costs;

  ObjectiveSpec scaled(double c) const;
};

std::string objective_kind_name(ObjectiveSpec::Kind k);

struct RankEntry {
  Regime regime;
  Status status = Status::Point;
  double lo = 0.0, hi = 0.0;
  double value = 0.0;
};

struct RegimeRanking {
  enum Outcome { Decided, Inconclusive };
  int w0 = 0;
  Bits x;
  ObjectiveSpec objective;
  std::vector<RankEntry> entries;
  // Point case: regimes within a relative 1e-10 of the maximum. Interval
  // case: every regime not excluded.
  std::vector<Regime> argmax;
  std::vector<Regime> excluded;
  Outcome outcome = Decided;
};

struct RankOptions {
  IdentifyOptions identify;
  // Replace unmatched substitutions by bounds instead of failing.
  bool allow_bounds = false;
  bool irreversible_d = false;
};

// Evaluates the objective for every regime at covariate path x within one
// stratum; ev must already be restricted to that stratum.
RegimeRanking rank_regimes(const Evaluator& ev, const ObjectiveSpec& objective, int w0,
                           const std::vector<Regime>& regimes, const Bits& x, const RankOptions& opt = {});

// Regimes whose upper bound lies strictly below another regime's lower bound.
std::vector<Regime> exclusion_set(const std::vector<RankEntry>& entries);

// Point-valued argmax with ties returned as a set.
std::vector<Regime> argmax_set(const std::vector<RankEntry>& entries);

}  // namespace dyntx
