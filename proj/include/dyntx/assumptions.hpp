#pragma once

#include "dyntx/identify.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dyntx {

struct SupportPair {
  Bits y;  // y^{t-1} the pair was found under
  int x = 0;
  int x_alt = 0;
  double residual = 0.0;
};

// Empirical analogs of the matching sets for one (t, d^t) and one
// instrument/covariate prefix (z^{t-1}, x^{t-1}).
struct SupportSets {
  int t = 1;
  Bits d;  // d^t
  Bits z_prefix, x_prefix;
  std::vector<SupportPair> S;             // (x, x~) with matching statistic zero within tolerance
  std::vector<std::pair<int, int>> T;     // observed (x_t, z_t) cells, summed over reachable y^{t-1}
  std::vector<int> X;                     // x with a partner under every reachable y^{t-1}
  std::vector<Bits> y_histories;          // reachable y^{t-1} the intersection ran over
  bool nonempty() const { return !X.empty(); }
};

SupportSets check_support(const Evaluator& ev, int t, const Bits& d, const Bits& z_prefix, const Bits& x_prefix,
                          const Tolerances& tol = {});

struct RelevanceEntry {
  History history;  // z_t entry unused
  Relevance result;
};

struct AssumptionReport {
  std::vector<Violation> model_violations;
  std::vector<RelevanceEntry> relevance;
  std::vector<SupportSets> support;
  // Structural exogeneity holds by construction for models built here; on
  // external data it cannot be checked.
  bool sx_holds = true;
  std::string sx_note;
  std::vector<std::string> failures;
  bool all_pass() const { return failures.empty(); }
};

// Enumerates every reachable history up to the horizon. With a model the
// table checks run too and the exogeneity note records "by construction".
AssumptionReport assess_assumptions(const Evaluator& ev, const StructuralModel* m = nullptr,
                                    const Tolerances& tol = {});

}  // namespace dyntx
