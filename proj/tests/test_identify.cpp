#include "dyntx/designs.hpp"
#include "dyntx/errors.hpp"
#include "dyntx/identify.hpp"
#include "dyntx/simulate.hpp"
#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dyntx;

namespace {

History hist(int t, Bits z, Bits x, Bits d, Bits y) { return History{t, z, x, d, y}; }

StructuralModel trivial_one(int T) {
  auto m = testutil::constant_model(T, 2, kInf, 0.0);
  testutil::set_instrument(m, 0.8);
  return m;
}

// E[Y_2 | D = regime, x] straight from the cell laws.
double observed_mean(const Evaluator& ev, const Regime& r, const Bits& x) {
  double num = 0.0, den = 0.0;
  for (std::uint32_t zc = 0; zc < 4; ++zc) {
    Bits z = unpack(zc, 2);
    double wz = ev.z_weight(z, x);
    CellTable c1 = ev.cell(hist(1, {z[0]}, {x[0]}, {}, {}));
    for (int y1 = 0; y1 < 2; ++y1) {
      double p1 = c1.prob(y1, r.d[0]);
      CellTable c2 = ev.cell(hist(2, z, x, {r.d[0]}, {y1}));
      num += wz * p1 * c2.prob(1, r.d[1]);
      den += wz * p1 * (c2.prob(0, r.d[1]) + c2.prob(1, r.d[1]));
    }
  }
  return num / den;
}

}  // namespace

TEST(Relevance, ConstantPropensityIsIrrelevant) {
  auto m = testutil::constant_model(1, 2, 0.0, 0.2);
  ExactEvaluator ev(m);
  Relevance r = check_relevance(ev, hist(1, {0}, {1}, {}, {}));
  EXPECT_FALSE(r.relevant);
  EXPECT_DOUBLE_EQ(r.p1, r.p0);
}

TEST(Relevance, DegenerateInstrument) {
  auto m = testutil::constant_model(1, 2, 0.0, 0.0);
  m.pi[0] = {-kInf, kInf};
  ExactEvaluator ev(m);
  Relevance r = check_relevance(ev, hist(1, {0}, {0}, {}, {}));
  EXPECT_TRUE(r.relevant);
  EXPECT_DOUBLE_EQ(r.p1, 1.0);
  EXPECT_DOUBLE_EQ(r.p0, 0.0);
}

TEST(Relevance, DgpAGapMatchesSimulatedPropensities) {
  auto m = dgp_a();
  ExactEvaluator ev(m);
  Relevance r = check_relevance(ev, hist(1, {0}, {2}, {}, {}));
  ASSERT_TRUE(r.relevant);
  // brute-force D_1 under each z from the latent sampler
  LatentSampler s(m);
  auto rng = block_engine(17, 0, 0);
  double n = 400000, hits[2] = {0, 0};
  for (int i = 0; i < n; ++i) {
    auto w = s.draw(rng);
    for (int z = 0; z < 2; ++z) hits[z] += w.v[0] <= m.pi_at(1, 0, 0, z);
  }
  double g = hits[1] / n - hits[0] / n;
  double se = std::sqrt((hits[1] / n) * (1 - hits[1] / n) / n + (hits[0] / n) * (1 - hits[0] / n) / n);
  EXPECT_LE(std::fabs(g - (r.p1 - r.p0)), 3.0 * se);
  EXPECT_GE(r.p1 - r.p0, 0.15);
}

TEST(HStatistic, IdenticalInstrumentValuesCancel) {
  ExactEvaluator ev(dgp_a());
  HStat s = compute_h_general(ev, hist(2, {1, 1}, {1, 3}, {1}, {0}), 1, 1, 3, 1);
  EXPECT_EQ(s.value, 0.0);
}

TEST(HStatistic, IrrelevantInstrumentGivesZero) {
  auto m = testutil::constant_model(2, 3, 0.1, 0.3);
  m.mu[1][m.mu_index(2, 0, 2, 1)] = 0.9;
  ExactEvaluator ev(m);
  EXPECT_NEAR(compute_h_general(ev, hist(2, {0, 0}, {0, 1}, {0}, {0}), 1, 0, 1, 2).value, 0.0, 1e-12);
  for (int arm = 0; arm < 2; ++arm)
    EXPECT_NEAR(compute_h_arm(ev, hist(2, {0, 0}, {0, 1}, {0}, {0}), arm, 1).value, 0.0, 1e-12);
}

TEST(HStatistic, VanishesAtKnownPartner) {
  auto m = dgp_a();
  ExactEvaluator ev(m);
  for (int k = 0; k < 4; ++k) {
    EXPECT_NEAR(compute_h_general(ev, hist(1, {0}, {0}, {}, {}), 1, 0, k, k + 1).value, 0.0, 1e-8);
    for (int y1 = 0; y1 < 2; ++y1)
      EXPECT_NEAR(compute_h_general(ev, hist(2, {1, 0}, {2, 0}, {y1}, {1 - y1}), 1, 0, k, k + 1).value, 0.0, 1e-8);
  }
}

TEST(HStatistic, ArmsSumToOutcomeContrast) {
  ExactEvaluator ev(dgp_a());
  History h = hist(2, {0, 1}, {3, 1}, {1}, {1});
  double sum = compute_h_arm(ev, h, 0, 1).value + compute_h_arm(ev, h, 1, 1).value;
  History a = h, b = h;
  a.z[1] = 1;
  b.z[1] = 0;
  CellTable ca = ev.cell(a), cb = ev.cell(b);
  EXPECT_NEAR(sum, (ca.prob(1, 0) + ca.prob(1, 1)) - (cb.prob(1, 0) + cb.prob(1, 1)), 1e-14);
}

TEST(HStatistic, MonteCarloReproducesArms) {
  auto m = dgp_a();
  ExactEvaluator ex(m);
  McEvaluator mc(m, 2000000, 8);
  for (const auto& h : {hist(1, {0}, {1}, {}, {}), hist(2, {1, 0}, {2, 3}, {1}, {0})})
    for (int arm = 0; arm < 2; ++arm) {
      HStat a = compute_h_arm(ex, h, arm, h.x[h.t - 1]), b = compute_h_arm(mc, h, arm, h.x[h.t - 1]);
      EXPECT_LE(std::fabs(a.value - b.value), 4.0 * b.std_error) << h.str() << " arm " << arm;
    }
}

TEST(SignMuGap, MatchedPairIsZero) {
  ExactEvaluator ev(dgp_a());
  EXPECT_EQ(sign_mu_gap(ev, hist(1, {0}, {0}, {}, {}), 1, 2).sign, Sign::Zero);
  EXPECT_EQ(sign_mu_gap(ev, hist(1, {0}, {0}, {}, {}), 1, 1).sign, Sign::Positive);
  EXPECT_EQ(sign_mu_gap(ev, hist(1, {0}, {0}, {}, {}), 1, 3).sign, Sign::Negative);
}

TEST(SignMuGap, InfiniteTreatedThreshold) {
  auto m = testutil::constant_model(1, 2, 0.2, 0.0);
  testutil::set_instrument(m, 0.7);
  m.mu[0][m.mu_index(1, 0, 1, 0)] = kInf;
  ExactEvaluator ev(m);
  EXPECT_EQ(sign_mu_gap(ev, hist(1, {0}, {0}, {}, {}), 0, 1).sign, Sign::Positive);
}

TEST(SignMuGap, ReversedInstrumentCodingKeepsSign) {
  auto m = dgp_a();
  auto rev = m;
  for (auto& tab : rev.pi)
    for (std::size_t i = 0; i + 1 < tab.size(); i += 2) std::swap(tab[i], tab[i + 1]);
  ExactEvaluator a(m), b(rev);
  for (int x = 0; x < 5; ++x)
    for (int xa = 0; xa < 5; ++xa) {
      History h = hist(2, {0, 0}, {2, x}, {0}, {1});
      EXPECT_EQ(sign_mu_gap(a, h, x, xa).sign, sign_mu_gap(b, h, x, xa).sign);
    }
}

TEST(SignMuGap, IrrelevantInstrumentThrows) {
  ExactEvaluator ev(testutil::constant_model(1, 2, 0.0, 0.0));
  EXPECT_THROW(sign_mu_gap(ev, hist(1, {0}, {0}, {}, {}), 0, 1), IrrelevantInstrument);
}

TEST(MatchLambda, NoTreatmentEffectMatchesItself) {
  auto m = testutil::constant_model(2, 3, 0.0, 0.0);
  for (int k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < m.mu[0].size(); ++i) m.mu[0][i] = -0.5 + 0.4 * static_cast<double>(i % 3);
  testutil::set_instrument(m, 0.8);
  ExactEvaluator ev(m);
  for (int x = 0; x < 3; ++x) {
    MatchSet ms = match_lambda(ev, hist(1, {0}, {x}, {}, {}), 1, x);
    ASSERT_EQ(ms.status, MatchSet::Matched);
    EXPECT_EQ(ms.matches.front().first, x);
    EXPECT_NEAR(ms.matches.front().second, 0.0, 1e-12);
  }
}

TEST(MatchLambda, SinglePointWithEffectHasNoMatch) {
  auto m = testutil::constant_model(1, 1, 0.0, 0.0);
  testutil::set_instrument(m, 0.8);
  m.mu[0][m.mu_index(1, 0, 1, 0)] = 0.7;
  ExactEvaluator ev(m);
  EXPECT_EQ(match_lambda(ev, hist(1, {0}, {0}, {}, {}), 1, 0).status, MatchSet::NoMatch);
}

TEST(MatchLambda, DgpAFindsKnownPartner) {
  auto m = dgp_a();
  ExactEvaluator ev(m);
  for (int t = 1; t <= 2; ++t)
    for (std::uint32_t y = 0; y < (1u << (t - 1)); ++y)
      for (int arm = 0; arm < 2; ++arm)
        for (int k = 0; k < 5; ++k) {
          History h = t == 1 ? hist(1, {0}, {k}, {}, {}) : hist(2, {1, 0}, {2, k}, {1}, {static_cast<int>(y)});
          MatchSet ms = match_lambda(ev, h, arm, k);
          auto truth = mu_partner(m, t, y, 0, arm, k);
          if (!truth) {
            EXPECT_EQ(ms.status, MatchSet::NoMatch);
            continue;
          }
          ASSERT_EQ(ms.matches.size(), 1u) << h.str() << " arm " << arm;
          EXPECT_EQ(ms.matches.front().first, *truth);
        }
}

TEST(IdentifyArsf, InfiniteThresholdsGiveOne) {
  ExactEvaluator ev(trivial_one(2));
  for (const auto& r : enumerate_regimes(2, false)) EXPECT_NEAR(identify_arsf(ev, r, {0, 1}).value, 1.0, 1e-12);
}

TEST(IdentifyArsf, ExogenousEqualsObservedMean) {
  auto m = dgp_a(0.0, 0.3);
  for (std::uint32_t d = 0; d < 2; ++d)
    for (int z = 0; z < 2; ++z) m.pi[1][m.pi_index(2, 1, d, z)] = m.pi_at(2, 0, d, z);
  ExactEvaluator ev(m);
  for (const auto& r : enumerate_regimes(2, false))
    EXPECT_NEAR(identify_arsf(ev, r, {2, 2}).value, observed_mean(ev, r, {2, 2}), 1e-8) << r.str();
}

TEST(IdentifyArsf, DgpAMatchesOracle) {
  auto m = dgp_a();
  ExactEvaluator ev(m);
  ExactOracle orc(m);
  for (const auto& r : enumerate_regimes(2, false))
    for (Bits x : {Bits{1, 1}, Bits{2, 3}, Bits{3, 2}}) {
      ArsfResult a = identify_arsf(ev, r, x);
      EXPECT_EQ(a.status, Status::Point);
      EXPECT_NEAR(a.value, orc.arsf(r, x), 1e-6);
      EXPECT_NEAR(identify_arsf(ev, r, x, {}, 1).value, orc.arsf(r, x, 1), 1e-6);
    }
}

TEST(IdentifyArsf, LengthMismatch) {
  ExactEvaluator ev(dgp_a());
  try {
    identify_arsf(ev, Regime::parse("110"), {2, 2});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("regime length mismatch"), std::string::npos);
  }
  EXPECT_THROW(identify_arsf(ev, Regime::parse("11"), {2}), ConfigError);
}

TEST(IdentifyArsf, NoMatchWithoutBounds) {
  ExactEvaluator ev(dgp_b());
  EXPECT_THROW(identify_arsf(ev, Regime::parse("11"), {2, 3}), NoMatch);
}

TEST(IdentifyArsf, ClosedFormAgrees) {
  ExactEvaluator ev(dgp_a());
  for (const auto& r : enumerate_regimes(2, false))
    EXPECT_NEAR(ex_id_closed_form(ev, r, {2, 1}), identify_arsf(ev, r, {2, 1}).value, 1e-12);
}

TEST(IdentifyAte, TrivialAndOracle) {
  auto m = dgp_a();
  ExactEvaluator ev(m);
  ExactOracle orc(m);
  auto a = Regime::parse("11"), b = Regime::parse("00");
  EXPECT_EQ(identify_ate(ev, a, a, {2, 2}).value, 0.0);
  ExactEvaluator one(trivial_one(2));
  EXPECT_NEAR(identify_ate(one, a, b, {0, 0}).value, 0.0, 1e-12);
  EXPECT_NEAR(identify_ate(ev, a, b, {2, 2}).value, orc.arsf(a, {2, 2}) - orc.arsf(b, {2, 2}), 1e-6);
}

TEST(JointProb, TrivialAndOracle) {
  auto m = dgp_a();
  ExactEvaluator ev(m);
  ExactOracle orc(m);
  auto r = Regime::parse("10");
  EXPECT_NEAR(identify_joint_prob(ev, r, {-1, -1}, {2, 2}, 2).value, 1.0, 1e-12);
  ExactEvaluator one(trivial_one(2));
  EXPECT_NEAR(identify_joint_prob(one, r, {0, 1}, {1, 1}, 2).value, 0.0, 1e-12);
  for (int y1 = 0; y1 < 2; ++y1)
    for (int y2 = 0; y2 < 2; ++y2)
      EXPECT_NEAR(identify_joint_prob(ev, r, {y1, y2}, {1, 3}, 2).value, orc.prob(r, {1, 3}, {y1, y2}, 2), 1e-6);
}

TEST(TransitionAte, TrivialCases) {
  ExactEvaluator ev(dgp_a());
  auto a = Regime::parse("11");
  EXPECT_EQ(identify_transition_ate(ev, a, a, {0}, {2, 2}).value, 0.0);
  auto m = trivial_one(2);
  for (double& v : m.mu[0]) v = -kInf;
  ExactEvaluator dead(m);
  EXPECT_THROW(identify_transition_ate(dead, a, Regime::parse("00"), {1}, {0, 0}), DegenerateConditioning);
}

TEST(TransitionAte, DgpAMatchesOracle) {
  auto m = dgp_a();
  ExactEvaluator ev(m);
  ExactOracle orc(m);
  auto a = Regime::parse("11"), b = Regime::parse("01");
  for (int y = 0; y < 2; ++y) {
    auto e = identify_transition_ate(ev, a, b, {y}, {2, 2});
    double truth = orc.transition(a, {y}, {2, 2}).ratio - orc.transition(b, {y}, {2, 2}).ratio;
    EXPECT_NEAR(e.value, truth, 1e-5);
  }
}

TEST(PeriodAte, NoEffectAtFinalPeriod) {
  auto m = dgp_a();
  for (std::size_t i = 0; i < m.mu[1].size(); ++i) m.mu[1][i] = -0.4;
  ExactEvaluator ev(m);
  EXPECT_NEAR(identify_period_ate(ev, 0, {2, 2}).value, 0.0, 1e-12);
}

TEST(PeriodAte, SinglePeriodIsStaticAte) {
  auto m = testutil::constant_model(1, 3, 0.0, 0.0);
  testutil::set_instrument(m, 0.9);
  for (int k = 0; k < 3; ++k) {
    m.mu[0][m.mu_index(1, 0, 0, k)] = -0.6 + 0.5 * k;
    m.mu[0][m.mu_index(1, 0, 1, k)] = -0.1 + 0.5 * k;
  }
  ExactEvaluator ev(m);
  EXPECT_NEAR(identify_period_ate(ev, 0, {1}).value,
              identify_ate(ev, Regime::parse("1"), Regime::parse("0"), {1}).value, 1e-12);
}

TEST(PeriodAte, DgpAMatchesForcedPrefixSimulation) {
  auto m = dgp_a();
  ExactEvaluator ev(m);
  for (int y = 0; y < 2; ++y) {
    auto e = identify_period_ate(ev, y, {2, 2});
    auto t1 = oracle_transition(m, Regime::parse("01", "01"), {y}, {2, 2}, 1000000, 6);
    auto t0 = oracle_transition(m, Regime::parse("00", "01"), {y}, {2, 2}, 1000000, 6);
    EXPECT_LE(std::fabs(e.value - (t1.ratio - t0.ratio)), 4.0 * std::hypot(t1.std_error, t0.std_error));
    EXPECT_NEAR(e.value, ExactOracle(m).period_arsf(y, 1, {2, 2}) - ExactOracle(m).period_arsf(y, 0, {2, 2}), 1e-5);
  }
}

TEST(Subsequence, FullMaskEqualsArsf) {
  ExactEvaluator ev(dgp_a());
  auto r = Regime::parse("10");
  EXPECT_EQ(identify_arsf_subsequence(ev, r, {2, 2}).value, identify_arsf(ev, r, {2, 2}).value);
}

TEST(Subsequence, FirstPeriodOnlyMatchesMaskedOracle) {
  auto m = dgp_a();
  ExactEvaluator ev(m);
  ExactOracle orc(m);
  for (int d1 = 0; d1 < 2; ++d1) {
    Regime r = Regime::parse(d1 ? "10" : "00", "10");
    for (Bits x : {Bits{1, 2}, Bits{2, 2}, Bits{3, 0}})
      EXPECT_NEAR(identify_arsf_subsequence(ev, r, x).value, orc.arsf(r, x), 1e-6);
  }
}

TEST(Subsequence, InactivePeriodWithCertainOutcome) {
  auto m = dgp_a();
  for (double& v : m.mu[1]) v = kInf;
  ExactEvaluator ev(m);
  Regime r = Regime::parse("10", "10");
  ArsfResult a = identify_arsf_subsequence(ev, r, {2, 2});
  EXPECT_NEAR(a.value, 1.0, 1e-12);
  for (const auto& n : a.trace)
    if (!n.active) EXPECT_NEAR(n.observed[0] + n.observed[1], 0.0, 1e-12);
}

TEST(Trace, BranchWeightsSumToOne) {
  ExactEvaluator ev(dgp_a());
  for (const auto& r : enumerate_regimes(2, false)) {
    ArsfResult a = identify_arsf(ev, r, {2, 2});
    double agg = 0.0;
    for (const auto& [z, w] : a.aggregation) agg += w;
    EXPECT_NEAR(agg, 1.0, 1e-12);
    for (const auto& n : a.trace) {
      if (!n.active) continue;
      EXPECT_NEAR(n.w_consistent + n.w_flipped, 1.0, 1e-10);
      EXPECT_NEAR(n.y_consistent[0] + n.y_consistent[1], 1.0, 1e-10);
    }
  }
}

TEST(Trace, PartnerMapIsRecordedAndReused) {
  auto m = dgp_a();
  ExactEvaluator ev(m);
  IdentifyOptions o;
  o.partners = std::make_shared<std::map<std::string, int>>();
  double v = identify_arsf(ev, Regime::parse("11"), {2, 2}, o).value;
  EXPECT_FALSE(o.partners->empty());
  o.freeze_partners = true;
  EXPECT_EQ(identify_arsf(ev, Regime::parse("11"), {2, 2}, o).value, v);
}
