#include "dyntx/bounds.hpp"
#include "dyntx/designs.hpp"
#include "dyntx/simulate.hpp"
#include "helpers.hpp"

#include <gtest/gtest.h>

using namespace dyntx;

TEST(BoundArsf, CollapsesWhenEveryMatchExists) {
  ExactEvaluator ev(dgp_a());
  for (const auto& r : enumerate_regimes(2, false)) {
    BoundsResult b = bound_arsf(ev, r, {2, 1});
    EXPECT_EQ(b.status, Status::Point);
    EXPECT_DOUBLE_EQ(b.lo, b.hi);
    EXPECT_NEAR(b.lo, identify_arsf(ev, r, {2, 1}).value, 1e-12);
  }
}

TEST(BoundArsf, OneSidedSignLeavesOtherSideTrivial) {
  // treatment lifts the index above every untreated grid value
  auto m = testutil::constant_model(1, 3, 0.0, 0.0);
  testutil::set_instrument(m, 0.8);
  for (int k = 0; k < 3; ++k) {
    m.mu[0][m.mu_index(1, 0, 0, k)] = -1.0 + 0.2 * k;
    m.mu[0][m.mu_index(1, 0, 1, k)] = 1.0 + 0.2 * k;
  }
  ExactEvaluator ev(m);
  BoundsResult b = bound_arsf(ev, Regime::parse("1"), {0});
  ASSERT_EQ(b.status, Status::Bounds);
  // one ledger entry per instrument value
  ASSERT_EQ(b.ledger.size(), 2u);
  for (const TraceNode& n : b.ledger) {
    EXPECT_GE(n.lower_x, 0);
    EXPECT_EQ(n.upper_x, -1);
  }
  // z = 0 and z = 1 average; the flipped group's upper side is 1 in both
  double hi = 0.0;
  for (int z = 0; z < 2; ++z) {
    CellTable cz = ev.cell(History{1, {z}, {0}, {}, {}});
    hi += 0.5 * (cz.prob(1, 1) + cz.prob(0, 0) + cz.prob(1, 0));
  }
  EXPECT_NEAR(b.hi, hi, 1e-12);
  EXPECT_LE(b.lo, ExactOracle(m).arsf(Regime::parse("1"), {0}));
}

TEST(BoundArsf, DgpBContainsOracleAndIsInformative) {
  auto m = dgp_b();
  ExactEvaluator ev(m);
  ExactOracle orc(m);
  int bounded = 0;
  for (const auto& r : enumerate_regimes(2, false))
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 4; ++j) {
        BoundsResult b = bound_arsf(ev, r, {i, j});
        double o = orc.arsf(r, {i, j});
        EXPECT_LE(b.lo, o + 1e-9);
        EXPECT_GE(b.hi, o - 1e-9);
        EXPECT_LT(b.hi - b.lo, 1.0);
        bounded += b.status == Status::Bounds;
      }
  EXPECT_GT(bounded, 0);
}

TEST(IntervalDifference, EdgeCases) {
  Effect z = interval_difference(0.3, 0.3, 0.3, 0.3);
  EXPECT_DOUBLE_EQ(z.lo, 0.0);
  EXPECT_DOUBLE_EQ(z.hi, 0.0);
  Effect w = interval_difference(0.0, 1.0, 0.0, 1.0);
  EXPECT_DOUBLE_EQ(w.lo, -1.0);
  EXPECT_DOUBLE_EQ(w.hi, 1.0);
  Effect g = interval_difference(0.6, 0.7, 0.1, 0.2);
  EXPECT_DOUBLE_EQ(g.lo, 0.4);
  EXPECT_DOUBLE_EQ(g.hi, 0.6);
}

TEST(BoundAte, DgpBContainsOracle) {
  auto m = dgp_b();
  ExactEvaluator ev(m);
  ExactOracle orc(m);
  auto a = Regime::parse("11"), b = Regime::parse("00");
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) {
      Effect e = bound_ate(ev, a, b, {i, j});
      double o = orc.arsf(a, {i, j}) - orc.arsf(b, {i, j});
      EXPECT_LE(e.lo, o + 1e-9);
      EXPECT_GE(e.hi, o - 1e-9);
    }
}
