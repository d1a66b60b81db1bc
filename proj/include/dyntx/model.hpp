#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace dyntx {

using Bits = std::vector<int>;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kMaxHorizon = 6;

// Bit-vectors are packed with period 1 in the least significant bit.
inline std::uint32_t pack(const Bits& b) {
  std::uint32_t c = 0;
  for (std::size_t i = 0; i < b.size(); ++i)
    if (b[i]) c |= (1u << i);
  return c;
}
Bits unpack(std::uint32_t code, int len);
std::string bits_to_string(const Bits& b);
Bits bits_from_string(const std::string& s);

struct Regime {
  Bits d;
  Bits active;

  static Regime full(const Bits& d);
  static Regime parse(const std::string& d, const std::string& mask = "");
  int size() const { return static_cast<int>(d.size()); }
  bool is_full() const;
  std::string str() const;
  bool operator==(const Regime& o) const { return d == o.d && active == o.active; }
  bool operator<(const Regime& o) const;
};

enum class LatentMode { RankInvariant, RSGeneral };

// RankInvariant: corr is 2T x 2T over (U_1..U_T, V_1..V_T).
// RSGeneral: U_t(d) = a_t*alpha + b_t*eps_t(d), V_t = c_t*alpha + e_t*eta_t.
struct LatentSpec {
  LatentMode mode = LatentMode::RankInvariant;
  Eigen::MatrixXd corr;
  std::vector<double> a, b, c, e;
};

struct StructuralModel {
  int T = 1;
  std::vector<std::vector<double>> x_grid;
  // mu[t-1] at ((y << t) | d) * K_t + k, pi[t-1] at (((y << (t-1)) | d) << 1) | z
  std::vector<std::vector<double>> mu;
  std::vector<std::vector<double>> pi;
  LatentSpec latent;
  std::vector<double> z_law;
  std::vector<std::vector<double>> x_law;
  bool irreversible_d = false;
  bool irreversible_y = false;

  int K(int t) const { return static_cast<int>(x_grid[t - 1].size()); }
  std::size_t mu_index(int t, std::uint32_t y, std::uint32_t d, int k) const {
    return ((static_cast<std::size_t>(y) << t) | d) * K(t) + k;
  }
  std::size_t pi_index(int t, std::uint32_t y, std::uint32_t d, int z) const {
    return ((((static_cast<std::size_t>(y) << (t - 1)) | d)) << 1) | static_cast<std::size_t>(z);
  }
  double mu_at(int t, std::uint32_t y, std::uint32_t d, int k) const { return mu[t - 1][mu_index(t, y, d, k)]; }
  double pi_at(int t, std::uint32_t y, std::uint32_t d, int z) const { return pi[t - 1][pi_index(t, y, d, z)]; }

  // Allocates tables of the right shape filled with zeros.
  static StructuralModel shaped(const std::vector<std::vector<double>>& grid);
};

struct Violation {
  std::string code;
  std::string detail;
};

std::vector<Violation> validate_model(const StructuralModel& m);

// Rebuilds the model keeping a subset of grid indices at period t.
StructuralModel drop_grid_point(const StructuralModel& m, int t, int k);

// Valid regimes of length T: all 2^T sequences, or the T+1 monotone ones.
std::vector<Regime> enumerate_regimes(int T, bool irreversible_d);

}  // namespace dyntx
