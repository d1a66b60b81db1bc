#include "dyntx/designs.hpp"
#include "dyntx/errors.hpp"
#include "dyntx/population.hpp"
#include "dyntx/simulate.hpp"
#include "helpers.hpp"

#include <gtest/gtest.h>

#include <fstream>

#include <cmath>
#include <filesystem>

using namespace dyntx;

namespace {

History hist(int t, Bits z, Bits x, Bits d, Bits y) { return History{t, z, x, d, y}; }

// Every history at the given period with x fixed to the middle point.
std::vector<History> all_histories(int t, int xk) {
  std::vector<History> out;
  for (std::uint32_t z = 0; z < (1u << t); ++z)
    for (std::uint32_t d = 0; d < (1u << (t - 1)); ++d)
      for (std::uint32_t y = 0; y < (1u << (t - 1)); ++y)
        out.push_back(hist(t, unpack(z, t), Bits(t, xk), unpack(d, t - 1), unpack(y, t - 1)));
  return out;
}

}  // namespace

TEST(ExactEvaluator, InfiniteOutcomeThresholdsGiveOne) {
  auto m = testutil::constant_model(2, 2, kInf, 0.3);
  ExactEvaluator ev(m);
  int reachable = 0;
  for (const auto& h : all_histories(2, 1)) {
    if (h.y[0] == 0) {
      // Y_1 = 0 never happens, so that history has no cell
      EXPECT_THROW(ev.cell(h), UnreachableCell);
      continue;
    }
    CellTable c = ev.cell(h);
    EXPECT_NEAR(c.prob(1, 0) + c.prob(1, 1), 1.0, 1e-12);
    ++reachable;
  }
  EXPECT_EQ(reachable, 8);
}

TEST(ExactEvaluator, MedianPropensity) {
  auto m = testutil::constant_model(1, 1, 0.4, 0.0);
  ExactEvaluator ev(m);
  for (int z = 0; z < 2; ++z) EXPECT_NEAR(ev.propensity(hist(1, {z}, {0}, {}, {}), 1).estimate, 0.5, 1e-12);
}

TEST(ExactEvaluator, CellsSumToOneAndStayInRange) {
  ExactEvaluator ev(dgp_a());
  for (int t = 1; t <= 2; ++t)
    for (const auto& h : all_histories(t, 2)) {
      CellTable c = ev.cell(h);
      double s = 0.0;
      for (double q : c.p) {
        EXPECT_GE(q, 0.0);
        EXPECT_LE(q, 1.0);
        s += q;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(ExactEvaluator, RejectsUnsupportedLatent) {
  auto m = testutil::constant_model(2, 2, 0.0, 0.0);
  m.latent.mode = LatentMode::RSGeneral;
  EXPECT_THROW(ExactEvaluator ev(m), UnsupportedLatent);
}

TEST(McEvaluator, AgreesWithExactJointProbability) {
  auto m = dgp_a();
  ExactEvaluator ex(m);
  McEvaluator mc(m, 2000000, 11);
  History h1 = hist(1, {1}, {0}, {}, {});
  CellStats a = ex.joint(h1, 1, 1), b = mc.joint(h1, 1, 1);
  EXPECT_LE(std::fabs(a.estimate - b.estimate), 4.0 * b.std_error);
  for (const auto& h : all_histories(2, 2)) {
    CellTable ce = ex.cell(h), cm = mc.cell(h);
    for (int i = 0; i < 4; ++i) EXPECT_LE(std::fabs(ce.p[i] - cm.p[i]), 4.0 * cm.se(cm.p[i]) + 1e-4) << h.str();
  }
}

TEST(McEvaluator, CountsPartitionAndAreDeterministic) {
  auto m = dgp_a();
  McEvaluator a(m, 200000, 5), b(m, 200000, 5);
  for (const auto& h : all_histories(2, 1)) {
    CellTable ca = a.cell(h), cb = b.cell(h);
    EXPECT_DOUBLE_EQ(ca.p[0] + ca.p[1] + ca.p[2] + ca.p[3], 1.0);
    for (int i = 0; i < 4; ++i) EXPECT_EQ(ca.p[i], cb.p[i]);
    EXPECT_EQ(ca.n, cb.n);
  }
}

TEST(McEvaluator, GeneralLatentModeRuns) {
  auto m = testutil::constant_model(2, 2, 0.0, 0.0);
  testutil::set_instrument(m, 0.8);
  m.latent.mode = LatentMode::RSGeneral;
  m.latent.a = {0.6, 0.6};
  m.latent.b = {0.8, 0.8};
  m.latent.c = {0.6, 0.6};
  m.latent.e = {0.8, 0.8};
  McEvaluator mc(m, 400000, 3);
  CellStats p = mc.propensity(hist(1, {1}, {0}, {}, {}), 1);
  EXPECT_NEAR(p.estimate, 0.7881, 4.0 * p.std_error);  // Phi(0.8)
}

TEST(EmpiricalEvaluator, SingleRowPanel) {
  PanelData p;
  p.T = 1;
  p.n = 1;
  p.y = {0};
  p.d = {0};
  p.x = {0};
  p.z = {0};
  p.w0 = {0};
  EmpiricalEvaluator ev(p, 1.0);
  CellStats s = ev.propensity(hist(1, {0}, {0}, {}, {}), 0);
  EXPECT_DOUBLE_EQ(s.estimate, 1.0);
  EXPECT_DOUBLE_EQ(s.count, 1.0);
  EXPECT_THROW(ev.cell(hist(1, {0}, {1}, {}, {})), UnreachableCell);
  EXPECT_THROW(ev.cell(hist(1, {1}, {0}, {}, {})), UnreachableCell);
}

TEST(EmpiricalEvaluator, LargePanelMatchesExact) {
  auto m = dgp_a();
  ExactEvaluator ex(m);
  PanelData p = simulate_panel(m, 1000000, 21);
  EmpiricalEvaluator em(p, 30.0);
  int checked = 0, sparse = 0;
  for (int t = 1; t <= 2; ++t)
    for (int xk = 0; xk < 5; ++xk)
      for (const auto& h : all_histories(t, xk)) {
        CellTable ce = ex.cell(h), cm;
        try {
          cm = em.cell(h);
        } catch (const UnreachableCell&) {
          // fewer rows than min_count
          ++sparse;
          continue;
        }
        for (int i = 0; i < 4; ++i) EXPECT_LE(std::fabs(ce.p[i] - cm.p[i]), 4.0 * cm.se(ce.p[i]) + 1e-9) << h.str();
        ++checked;
      }
  EXPECT_GT(checked, 50);
  EXPECT_LE(sparse * 10, checked);
  // z weights are frequencies; the design draws Z independently of X
  EXPECT_NEAR(em.z_weight({1, 0}, {2, 2}), 0.25, 0.01);
}

TEST(EmpiricalEvaluator, ReweightedIndexEqualsDuplicatedRows) {
  auto m = dgp_a();
  PanelData p = simulate_panel(m, 500, 4);
  std::vector<double> w(p.n, 1.0);
  w[0] = 3.0;
  w[1] = 0.0;
  PanelData dup = p;
  dup.n = 0;
  dup.y.clear();
  dup.d.clear();
  dup.x.clear();
  dup.z.clear();
  dup.w0.clear();
  for (std::size_t i = 0; i < p.n; ++i)
    for (int r = 0; r < static_cast<int>(w[i]); ++r) {
      for (int t = 1; t <= p.T; ++t) {
        dup.y.push_back(p.at(p.y, i, t));
        dup.d.push_back(p.at(p.d, i, t));
        dup.x.push_back(p.at(p.x, i, t));
        dup.z.push_back(p.at(p.z, i, t));
      }
      dup.w0.push_back(0);
      ++dup.n;
    }
  auto idx = PanelIndex::build(p, {5, 5});
  EmpiricalEvaluator a(idx, w, 1.0), b(dup, 1.0, {5, 5});
  for (const auto& h : all_histories(2, 2)) {
    if (!b.reachable(h)) continue;
    CellTable ca = a.cell(h), cb = b.cell(h);
    EXPECT_DOUBLE_EQ(ca.n, cb.n);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(ca.p[i], cb.p[i], 1e-12);
  }
}

TEST(PanelCsv, RoundTripAndErrors) {
  auto p = simulate_panel(dgp_a(), 300, 9, 2);
  auto path = (std::filesystem::temp_directory_path() / "dyntx_panel_test.csv").string();
  write_panel_csv(p, path);
  PanelData q = read_panel_csv(path);
  EXPECT_EQ(q.n, p.n);
  EXPECT_EQ(q.T, p.T);
  EXPECT_EQ(q.y, p.y);
  EXPECT_EQ(q.d, p.d);
  EXPECT_EQ(q.x, p.x);
  EXPECT_EQ(q.z, p.z);
  EXPECT_EQ(q.w0, p.w0);
  EXPECT_EQ(panel_to_csv(q), panel_to_csv(p));
  std::ofstream(path) << "id,t,y,d,x,z,w0\n1,1,2,0,0,0,0\n";
  EXPECT_THROW(read_panel_csv(path), ConfigError);
  std::filesystem::remove(path);
}

TEST(PanelData, StrataSubset) {
  auto a = simulate_panel(dgp_a(), 50, 1, 0);
  auto b = simulate_panel(dgp_a(), 70, 2, 3);
  PanelData p = a;
  p.n += b.n;
  p.y.insert(p.y.end(), b.y.begin(), b.y.end());
  p.d.insert(p.d.end(), b.d.begin(), b.d.end());
  p.x.insert(p.x.end(), b.x.begin(), b.x.end());
  p.z.insert(p.z.end(), b.z.begin(), b.z.end());
  p.w0.insert(p.w0.end(), b.w0.begin(), b.w0.end());
  EXPECT_EQ(p.strata(), (std::vector<int>{0, 3}));
  EXPECT_EQ(p.subset_w0(3).n, 70u);
  EXPECT_EQ(p.subset_w0(3).y, b.y);
}
