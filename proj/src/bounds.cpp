#include "dyntx/bounds.hpp"

#include <algorithm>

namespace dyntx {

BoundsResult bound_arsf(const Evaluator& ev, const Regime& r, const Bits& x, IdentifyOptions opt, int horizon) {
  opt.fallback_bounds = true;
  ArsfResult a = identify_arsf(ev, r, x, opt, horizon);
  BoundsResult b;
  b.regime = r;
  b.x = x;
  b.status = a.status;
  b.lo = a.lo;
  b.hi = a.hi;
  for (const auto& n : a.trace)
    if (n.bounded) b.ledger.push_back(n);
  return b;
}

Effect interval_difference(double lo_a, double hi_a, double lo_b, double hi_b) {
  Effect e;
  e.lo = std::max(-1.0, lo_a - hi_b);
  e.hi = std::min(1.0, hi_a - lo_b);
  e.status = e.lo == e.hi ? Status::Point : Status::Bounds;
  e.value = 0.5 * (e.lo + e.hi);
  return e;
}

Effect bound_ate(const Evaluator& ev, const Regime& a, const Regime& b, const Bits& x, IdentifyOptions opt) {
  BoundsResult ra = bound_arsf(ev, a, x, opt);
  BoundsResult rb = a == b ? ra : bound_arsf(ev, b, x, opt);
  return interval_difference(ra.lo, ra.hi, rb.lo, rb.hi);
}

}  // namespace dyntx
