#pragma once

#include <Eigen/Dense>

#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

namespace dyntx::gauss {

double Phi(double x);
double phi(double x);

// Lower-orthant bivariate normal probability P(X <= a, Y <= b), corr r.
double bvn_cdf(double a, double b, double r);

// Lower-orthant probability for a standard normal vector with correlation R.
// Nested one-dimensional composite Gauss-Legendre over conditional laws;
// `order` is the node count per panel.
double mvn_cdf(const Eigen::MatrixXd& R, const std::vector<double>& a, int order);

// Gauss-Legendre nodes and weights on [-1, 1].
const std::vector<std::pair<double, double>>& legendre(int order);

struct Side {
  enum Kind : char { Free = 0, Le = 1, Gt = 2 };
  Kind kind = Free;
  double v = 0.0;
  static Side free() { return {Free, 0.0}; }
  static Side le(double x) { return {Le, x}; }
  static Side gt(double x) { return {Gt, x}; }
};

// Probability of a product of half-lines under N(0, R), reduced to
// lower-orthant probabilities by inclusion-exclusion. Results are cached,
// so equal events always return bit-identical values.
class RectangleProb {
 public:
  RectangleProb(Eigen::MatrixXd R, int order);
  double operator()(const std::vector<Side>& sides) const;
  int order() const { return order_; }
  int dim() const { return static_cast<int>(R_.rows()); }

 private:
  double orthant(unsigned mask, const std::vector<double>& a) const;

  Eigen::MatrixXd R_;
  int order_;
  mutable std::mutex mu_;
  mutable std::unordered_map<std::string, double> cache_;
};

}  // namespace dyntx::gauss
