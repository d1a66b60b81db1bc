#pragma once

#include "dyntx/gauss.hpp"
#include "dyntx/model.hpp"
#include "dyntx/population.hpp"

#include <cstdint>
#include <vector>

namespace dyntx {

// Observed panel drawn from the selection and outcome equations.
PanelData simulate_panel(const StructuralModel& m, std::size_t n, std::uint64_t seed, int w0 = 0);

struct OracleResult {
  Regime regime;
  Bits x;
  std::vector<double> value;      // E[Y_t(d) | x] for t = 1..T
  std::vector<double> std_error;
  std::size_t draws = 0;
  std::uint64_t seed = 0;
};

// Forced-regime simulation; inactive periods follow the selection equation
// with instruments drawn from their law. Latent draws depend only on the
// seed, so contrasts across regimes share random numbers.
OracleResult oracle_arsf(const StructuralModel& m, const Regime& r, const Bits& x, std::size_t draws,
                         std::uint64_t seed);

struct TransitionOracle {
  double numerator = 0.0;    // Pr[Y_T(d)=1, Y_-(d)=y_- | x]
  double denominator = 0.0;  // Pr[Y_-(d)=y_- | x]
  double ratio = 0.0;
  double std_error = 0.0;    // of the ratio, binomial within the conditioning set
  std::size_t draws = 0;
};

// y_minus has length T-1 with entries -1 (unrestricted), 0 or 1.
TransitionOracle oracle_transition(const StructuralModel& m, const Regime& r, const Bits& y_minus, const Bits& x,
                                   std::size_t draws, std::uint64_t seed);

// Quadrature counterpart of the forced-regime simulation (rank-invariant
// latent law, T <= 3).
class ExactOracle {
 public:
  explicit ExactOracle(const StructuralModel& m, int quad_order = 16);
  // Pr[Y_s(d) = target_s for every restricted s <= horizon | x]; target
  // entries are -1 for unrestricted periods.
  double prob(const Regime& r, const Bits& x, const Bits& target, int horizon) const;
  double arsf(const Regime& r, const Bits& x, int horizon = -1) const;
  TransitionOracle transition(const Regime& r, const Bits& y_minus, const Bits& x) const;
  // E[Y_T(d_T) | Y_{T-1} = y, x] with the earlier treatments left to the agent.
  double period_arsf(int y_prev, int d_T, const Bits& x) const;
  const StructuralModel& model() const { return m_; }

 private:
  StructuralModel m_;
  gauss::RectangleProb rect_;
};

}  // namespace dyntx
