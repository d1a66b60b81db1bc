#pragma once

#include "dyntx/gauss.hpp"
#include "dyntx/model.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace dyntx {

enum class Backend { Exact, McPopulation, Empirical };
std::string backend_name(Backend b);

// Conditioning for a period-t query: z and x hold z^t and grid indices x^t,
// d and y hold the realized d^{t-1} and y^{t-1}.
struct History {
  int t = 1;
  Bits z, x, d, y;
  std::string str() const;
  std::string key() const;
};

struct CellStats {
  double count = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;
};

// Law of (Y_t, D_t) inside one history cell; p is indexed by 2*y + d.
struct CellTable {
  double n = 0.0;
  std::array<double, 4> p{};
  double prob(int y, int d) const { return p[2 * y + d]; }
  double se(double q) const;
};

class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual Backend backend() const = 0;
  virtual int horizon() const = 0;
  virtual int grid_size(int t) const = 0;
  // Throws UnreachableCell when the conditioning event lacks mass.
  virtual CellTable cell(const History& h) const = 0;
  // Pr[Z^L = z | X^L = x] with L = z.size().
  virtual double z_weight(const Bits& z, const Bits& x) const = 0;
  // Default zero-sign tolerance for h statistics and relevance gaps.
  virtual double tol_h() const { return 1e-6; }
  virtual double tol_relevance() const { return 1e-3; }
  // Smallest conditioning count accepted by counting backends.
  virtual double min_count() const { return 0.0; }
  // True for counting backends, whose tolerances scale with standard errors.
  bool counting() const { return backend() != Backend::Exact; }

  bool reachable(const History& h) const;
  CellStats joint(const History& h, int y, int d) const;
  CellStats propensity(const History& h, int d) const;
  CellStats transition(const History& h, int d, int y) const;
};

class ExactEvaluator : public Evaluator {
 public:
  ExactEvaluator(const StructuralModel& m, int quad_order = 16);
  Backend backend() const override { return Backend::Exact; }
  int horizon() const override { return m_.T; }
  int grid_size(int t) const override { return m_.K(t); }
  CellTable cell(const History& h) const override;
  double z_weight(const Bits& z, const Bits& x) const override;
  const StructuralModel& model() const { return m_; }
  const gauss::RectangleProb& rect() const { return rect_; }
  int quad_order() const { return rect_.order(); }

 private:
  StructuralModel m_;
  gauss::RectangleProb rect_;
  mutable std::mutex mu_;
  mutable std::unordered_map<std::string, CellTable> cache_;
};

// Latent draws for one simulated unit: U_t(0), U_t(1), V_t.
struct LatentDraw {
  std::array<double, kMaxHorizon> u0{}, u1{}, v{};
};

class LatentSampler {
 public:
  explicit LatentSampler(const StructuralModel& m);
  LatentDraw draw(std::mt19937_64& rng) const;

 private:
  int T_;
  LatentSpec spec_;
  Eigen::MatrixXd chol_;
};

// Seeds an engine for a block of units so results do not depend on threading.
std::mt19937_64 block_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t block);

class McEvaluator : public Evaluator {
 public:
  McEvaluator(const StructuralModel& m, std::size_t draws, std::uint64_t seed, double floor = 200.0);
  Backend backend() const override { return Backend::McPopulation; }
  int horizon() const override { return m_.T; }
  int grid_size(int t) const override { return m_.K(t); }
  CellTable cell(const History& h) const override;
  double z_weight(const Bits& z, const Bits& x) const override;
  double tol_h() const override { return 3.0; }
  double tol_relevance() const override { return 2.0; }
  double min_count() const override { return floor_; }
  std::size_t draws() const { return draws_.size(); }
  std::uint64_t seed() const { return seed_; }

 private:
  const std::vector<double>& path_counts(int t, const Bits& z, const Bits& x) const;

  StructuralModel m_;
  std::vector<LatentDraw> draws_;
  std::uint64_t seed_;
  double floor_;
  mutable std::mutex mu_;
  mutable std::map<std::string, std::vector<double>> paths_;
};

struct PanelData {
  int T = 1;
  std::size_t n = 0;
  // Row-major n x T matrices; x holds grid indices.
  std::vector<int> y, d, x, z;
  std::vector<int> w0;

  int at(const std::vector<int>& v, std::size_t i, int t) const { return v[i * T + (t - 1)]; }
  PanelData subset_w0(int label) const;
  std::vector<int> strata() const;
};

PanelData read_panel_csv(const std::string& path);
void write_panel_csv(const PanelData& p, const std::string& path);
std::string panel_to_csv(const PanelData& p);

// Cell ids for every (unit, period), reused across bootstrap reweightings.
struct PanelIndex {
  int T = 1;
  std::size_t n = 0;
  std::vector<int> K;
  std::unordered_map<std::string, int> cell_id, zx_id, x_id;
  std::vector<int> cell_of, outcome_of, zx_of, x_of;
  static std::shared_ptr<const PanelIndex> build(const PanelData& p, std::vector<int> grid_sizes = {});
};

class EmpiricalEvaluator : public Evaluator {
 public:
  explicit EmpiricalEvaluator(const PanelData& data, double floor = 30.0, std::vector<int> grid_sizes = {});
  EmpiricalEvaluator(std::shared_ptr<const PanelIndex> index, const std::vector<double>& weights,
                     double floor = 30.0);
  Backend backend() const override { return Backend::Empirical; }
  int horizon() const override { return index_->T; }
  int grid_size(int t) const override { return index_->K[t - 1]; }
  CellTable cell(const History& h) const override;
  double z_weight(const Bits& z, const Bits& x) const override;
  double tol_h() const override { return 3.0; }
  double tol_relevance() const override { return 2.0; }
  double min_count() const override { return floor_; }
  const std::shared_ptr<const PanelIndex>& index() const { return index_; }

 private:
  void tally(const std::vector<double>* weights);

  std::shared_ptr<const PanelIndex> index_;
  double floor_;
  std::vector<double> cells_, zx_, xs_;
};

}  // namespace dyntx
