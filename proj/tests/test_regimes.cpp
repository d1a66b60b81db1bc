#include "dyntx/bounds.hpp"
#include "dyntx/designs.hpp"
#include "dyntx/errors.hpp"
#include "dyntx/regimes.hpp"
#include "dyntx/simulate.hpp"
#include "helpers.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace dyntx;

namespace {

StructuralModel static_model(double effect) {
  auto m = testutil::constant_model(1, 3, 0.0, 0.0);
  testutil::set_instrument(m, 0.8);
  for (int k = 0; k < 3; ++k) {
    m.mu[0][m.mu_index(1, 0, 0, k)] = -0.5 + 0.25 * k;
    m.mu[0][m.mu_index(1, 0, 1, k)] = -0.5 + 0.25 * k + effect;
  }
  return m;
}

RankEntry interval(const std::string& r, double lo, double hi) {
  RankEntry e;
  e.regime = Regime::parse(r);
  e.status = Status::Bounds;
  e.lo = lo;
  e.hi = hi;
  return e;
}

}  // namespace

TEST(RankRegimes, StaticSignDecidesArgmax) {
  auto regimes = enumerate_regimes(1, false);
  for (double eff : {0.25, -0.25, 0.0}) {
    ExactEvaluator ev(static_model(eff));
    RegimeRanking rk = rank_regimes(ev, {}, 0, regimes, {1});
    double ate = identify_ate(ev, Regime::parse("1"), Regime::parse("0"), {1}).value;
    if (eff > 0) {
      EXPECT_GT(ate, 0.0);
      EXPECT_EQ(rk.argmax, std::vector<Regime>{Regime::parse("1")});
    } else if (eff < 0) {
      EXPECT_LT(ate, 0.0);
      EXPECT_EQ(rk.argmax, std::vector<Regime>{Regime::parse("0")});
    } else {
      EXPECT_NEAR(ate, 0.0, 1e-12);
      EXPECT_EQ(rk.argmax.size(), 2u);
    }
  }
}

TEST(RankRegimes, NoEffectMeansEveryRegimeIsOptimal) {
  auto m = testutil::constant_model(2, 3, 0.1, 0.0);
  testutil::set_instrument(m, 0.8);
  ExactEvaluator ev(m);
  RegimeRanking rk = rank_regimes(ev, {}, 0, enumerate_regimes(2, false), {1, 1});
  EXPECT_EQ(rk.argmax.size(), 4u);
  EXPECT_TRUE(rk.excluded.empty());
}

TEST(RankRegimes, DgpAMatchesOracleArgmax) {
  auto m = dgp_a();
  ExactEvaluator ev(m);
  ExactOracle orc(m);
  auto regimes = enumerate_regimes(2, false);
  ObjectiveSpec obj;
  obj.w = 1.0;
  obj.cost = 0.0;
  RegimeRanking rk = rank_regimes(ev, obj, 0, regimes, {2, 2});
  double best = -1.0;
  std::vector<Regime> truth;
  for (const auto& r : regimes) best = std::max(best, orc.arsf(r, {2, 2}));
  for (const auto& r : regimes)
    if (orc.arsf(r, {2, 2}) >= best - 1e-9) truth.push_back(r);
  EXPECT_EQ(rk.argmax, truth);
  EXPECT_EQ(rk.outcome, RegimeRanking::Decided);
}

TEST(RankRegimes, ArgmaxInvariantToRescaling) {
  ExactEvaluator ev(dgp_a());
  auto regimes = enumerate_regimes(2, false);
  ObjectiveSpec obj;
  obj.kind = ObjectiveSpec::WeightedSum;
  obj.weights = {0.4, 1.0};
  obj.costs = {0.1, 0.02};
  auto base = rank_regimes(ev, obj, 0, regimes, {1, 2}).argmax;
  for (double c : {0.001, 3.0, 1e4}) EXPECT_EQ(rank_regimes(ev, obj.scaled(c), 0, regimes, {1, 2}).argmax, base);
}

TEST(ExclusionSet, IntervalDominance) {
  std::vector<RankEntry> wide = {interval("0", 0.0, 1.0), interval("1", 0.0, 1.0)};
  EXPECT_TRUE(exclusion_set(wide).empty());
  std::vector<RankEntry> apart = {interval("0", 0.8, 0.9), interval("1", 0.1, 0.2)};
  EXPECT_EQ(exclusion_set(apart), std::vector<Regime>{Regime::parse("1")});
}

TEST(RankRegimes, DgpBNeverExcludesOracleOptimum) {
  auto m = dgp_b();
  ExactEvaluator ev(m);
  ExactOracle orc(m);
  auto regimes = enumerate_regimes(2, false);
  RankOptions opt;
  opt.allow_bounds = true;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) {
      RegimeRanking rk = rank_regimes(ev, {}, 0, regimes, {i, j}, opt);
      Regime best = regimes.front();
      for (const auto& r : regimes)
        if (orc.arsf(r, {i, j}) > orc.arsf(best, {i, j})) best = r;
      EXPECT_EQ(std::count(rk.excluded.begin(), rk.excluded.end(), best), 0);
    }
}

TEST(RankRegimes, InputValidation) {
  ExactEvaluator ev(dgp_a());
  try {
    rank_regimes(ev, {}, 0, {Regime::parse("101")}, {2, 2});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("regime length mismatch"), std::string::npos);
  }
  RankOptions irr;
  irr.irreversible_d = true;
  EXPECT_THROW(rank_regimes(ev, {}, 0, {Regime::parse("10")}, {2, 2}, irr), ConfigError);
  ObjectiveSpec bad;
  bad.kind = ObjectiveSpec::WeightedSum;
  bad.weights = {1.0};
  bad.costs = {0.0};
  EXPECT_THROW(rank_regimes(ev, bad, 0, enumerate_regimes(2, false), {2, 2}), ConfigError);
  EXPECT_THROW(rank_regimes(ev, {}, 0, {}, {2, 2}), ConfigError);
}

TEST(RankRegimes, CostsCountTreatedPeriods) {
  ExactEvaluator ev(dgp_a());
  ObjectiveSpec obj;
  obj.cost = 0.1;
  RegimeRanking rk = rank_regimes(ev, obj, 0, {Regime::parse("11"), Regime::parse("00")}, {2, 2});
  EXPECT_NEAR(rk.entries[0].value, identify_arsf(ev, Regime::parse("11"), {2, 2}).value - 0.2, 1e-12);
  EXPECT_NEAR(rk.entries[1].value, identify_arsf(ev, Regime::parse("00"), {2, 2}).value, 1e-12);
}
