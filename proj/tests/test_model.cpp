#include "dyntx/designs.hpp"
#include "dyntx/errors.hpp"
#include "dyntx/model.hpp"
#include "helpers.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace dyntx;

namespace {

bool has_code(const std::vector<Violation>& v, const std::string& code) {
  return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.code == code; });
}

}  // namespace

TEST(Bits, PackRoundTrip) {
  Bits b{1, 0, 1, 1};
  EXPECT_EQ(pack(b), 0b1101u);
  EXPECT_EQ(unpack(pack(b), 4), b);
  EXPECT_EQ(bits_to_string(b), "1011");
  EXPECT_EQ(bits_from_string("1011"), b);
  EXPECT_THROW(bits_from_string("10x"), ConfigError);
}

TEST(Regime, ParseWithMask) {
  Regime r = Regime::parse("10", "10");
  EXPECT_FALSE(r.is_full());
  EXPECT_EQ(r.str(), "1.");
  EXPECT_THROW(Regime::parse("11", "10"), ConfigError);
  try {
    Regime::parse("10", "1");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("regime length mismatch"), std::string::npos);
  }
}

TEST(ValidateModel, NegativeEigenvalueIsNotPd) {
  auto m = testutil::constant_model(2, 3, 0.0, 0.0);
  Eigen::MatrixXd R = Eigen::MatrixXd::Identity(4, 4);
  // eigenvalues of [[1, r], [r, 1]] are 1 +- r; r = 1.1 gives -0.1
  R(0, 1) = R(1, 0) = 1.1;
  m.latent.corr = R;
  EXPECT_TRUE(has_code(validate_model(m), "latent_not_pd"));
}

TEST(ValidateModel, FiniteIdentityIsClean) {
  auto m = testutil::constant_model(3, 2, 0.2, -0.1);
  EXPECT_TRUE(validate_model(m).empty());
}

TEST(ValidateModel, IrreversibleTreatmentPatternAccepted) {
  auto m = testutil::constant_model(2, 2, 0.0, 0.3);
  m.irreversible_d = true;
  for (std::uint32_t y = 0; y < 2; ++y)
    for (int z = 0; z < 2; ++z) m.pi[1][m.pi_index(2, y, 1, z)] = kInf;
  EXPECT_TRUE(validate_model(m).empty());
  m.pi[1][m.pi_index(2, 0, 1, 0)] = 0.0;
  EXPECT_TRUE(has_code(validate_model(m), "irreversible_d_pattern"));
}

TEST(ValidateModel, IrreversibleOutcomePattern) {
  auto m = testutil::constant_model(2, 2, 0.0, 0.3);
  m.irreversible_y = true;
  EXPECT_TRUE(has_code(validate_model(m), "irreversible_y_pattern"));
  for (std::uint32_t d = 0; d < 2; ++d) {
    for (int z = 0; z < 2; ++z) m.pi[1][m.pi_index(2, 1, d, z)] = -kInf;
    for (std::uint32_t dt = 0; dt < 2; ++dt)
      for (int k = 0; k < 2; ++k) m.mu[1][m.mu_index(2, 1, d | (dt << 1), k)] = kInf;
  }
  EXPECT_TRUE(validate_model(m).empty());
}

TEST(ValidateModel, ShapeAndLawErrors) {
  auto m = testutil::constant_model(2, 3, 0.0, 0.0);
  m.mu[1].pop_back();
  EXPECT_TRUE(has_code(validate_model(m), "mu_table_incomplete"));
  m = testutil::constant_model(2, 3, 0.0, 0.0);
  m.x_grid[0] = {0.0, 0.0, 1.0};
  EXPECT_TRUE(has_code(validate_model(m), "grid_not_increasing"));
  m = testutil::constant_model(2, 3, 0.0, 0.0);
  m.z_law[0] = 1.0;
  EXPECT_TRUE(has_code(validate_model(m), "z_law_range"));
  m = testutil::constant_model(2, 3, 0.0, 0.0);
  m.x_law[1] = {0.5, 0.5, 0.5};
  EXPECT_TRUE(has_code(validate_model(m), "x_law_invalid"));
  m = testutil::constant_model(2, 3, 0.0, 0.0);
  m.mu[0][0] = std::nan("");
  EXPECT_TRUE(has_code(validate_model(m), "threshold_nan"));
  m = testutil::constant_model(2, 3, 0.0, 0.0);
  m.latent.mode = LatentMode::RSGeneral;
  m.latent.a = {0.6, 0.6};
  m.latent.b = {0.8, 0.8};
  m.latent.c = {0.6, 0.5};
  m.latent.e = {0.8, 0.8};
  EXPECT_TRUE(has_code(validate_model(m), "rs_loading_norm"));
  m.latent.c = {0.6, 0.6};
  EXPECT_TRUE(validate_model(m).empty());
}

TEST(ValidateModel, ReferenceDesignsAreValid) {
  EXPECT_TRUE(validate_model(dgp_a()).empty());
  EXPECT_TRUE(validate_model(dgp_b()).empty());
  std::mt19937_64 rng(3);
  for (int i = 0; i < 5; ++i) {
    EXPECT_TRUE(validate_model(random_shift_model(rng)).empty());
    EXPECT_TRUE(validate_model(random_table_model(rng)).empty());
  }
}

TEST(DropGridPoint, KeepsOtherEntries) {
  auto a = dgp_a();
  auto b = drop_grid_point(a, 2, 3);
  EXPECT_EQ(b.K(2), 4);
  EXPECT_EQ(b.x_grid[1], (std::vector<double>{-1.0, -0.5, 0.0, 1.0}));
  EXPECT_DOUBLE_EQ(b.mu_at(2, 1, 2, 3), a.mu_at(2, 1, 2, 4));
  EXPECT_EQ(b.mu[0], a.mu[0]);
  double s = 0.0;
  for (double q : b.x_law[1]) s += q;
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(EnumerateRegimes, FullAndMonotone) {
  EXPECT_EQ(enumerate_regimes(3, false).size(), 8u);
  auto mono = enumerate_regimes(3, true);
  ASSERT_EQ(mono.size(), 4u);
  for (const auto& r : mono) EXPECT_TRUE(std::is_sorted(r.d.begin(), r.d.end()));
}

TEST(Designs, DgpAHasOnGridPartners) {
  auto m = dgp_a();
  // treatment at x_k equals no treatment at x_{k+1}
  for (int t = 1; t <= 2; ++t)
    for (std::uint32_t y = 0; y < (1u << (t - 1)); ++y)
      for (int k = 0; k < 4; ++k) {
        auto p = mu_partner(m, t, y, 0, 1, k);
        ASSERT_TRUE(p.has_value());
        EXPECT_EQ(*p, k + 1);
      }
  for (int t = 1; t <= 2; ++t)
    for (std::uint32_t k = 0; k < 5; ++k)
      for (std::uint32_t d = 0; d < (1u << (t - 1)); ++d)
        for (double v : {m.mu_at(t, 0, d, k), m.mu_at(t, 0, d | (1u << (t - 1)), k)}) {
          EXPECT_GE(v, -1.5);
          EXPECT_LE(v, 1.5);
        }
}
