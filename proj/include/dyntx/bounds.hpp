#pragma once

#include "dyntx/identify.hpp"

namespace dyntx {

struct BoundsResult {
  Regime regime;
  Bits x;
  double lo = 0.0, hi = 1.0;
  Status status = Status::Bounds;
  // Nodes where no partner existed, with the gap sign and bound side used.
  std::vector<TraceNode> ledger;
};

// Runs the identification recursion with one-sided substitution at nodes
// without an on-grid partner. The interval is degenerate when every node
// matched.
BoundsResult bound_arsf(const Evaluator& ev, const Regime& r, const Bits& x, IdentifyOptions opt = {},
                        int horizon = -1);

// [lo_a - hi_b, hi_a - lo_b] clipped to [-1, 1].
Effect bound_ate(const Evaluator& ev, const Regime& a, const Regime& b, const Bits& x, IdentifyOptions opt = {});
Effect interval_difference(double lo_a, double hi_a, double lo_b, double hi_b);

}  // namespace dyntx
