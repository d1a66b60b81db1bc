#pragma once

#include "dyntx/model.hpp"
#include "dyntx/population.hpp"

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace dyntx {

// Negative values select the backend defaults: absolute tolerances for the
// exact backend, multiples of the cell standard error for counting ones.
struct Tolerances {
  double h = -1.0;
  double relevance = -1.0;
  double spread_factor = 10.0;
  double denominator_floor = 1e-3;
};

struct IdentifyOptions {
  Tolerances tol;
  bool fallback_bounds = false;
  // Absorbing outcome: once Y=1 every later outcome is 1.
  bool irreversible_y = false;
  // Counting backends pick partners from h pooled over earlier instrument
  // and covariate cells.
  bool pool_matching = true;
  // Counting backends, full regimes: every instrument path identifies the
  // same quantity, so paths hitting an empty cell may be dropped.
  bool skip_sparse_paths = true;
  // Partner choices keyed by match_key. When present and not frozen the
  // recursion records its choices; when frozen it reuses them and only
  // matches keys it has never seen.
  std::shared_ptr<std::map<std::string, int>> partners;
  bool freeze_partners = false;
  // Take the smallest-residual candidate even when it misses the tolerance.
  // Used inside resamples, where the full sample already ran the test.
  bool force_match = false;
};

// Key of one partner decision: the pooled decision depends on (t, y^{t-1},
// x_t, arm) only, the per-cell one on the whole history.
std::string match_key(const History& h, int arm, bool pooled);

double h_tolerance(const Evaluator& ev, const Tolerances& tol, double se);
double relevance_tolerance(const Evaluator& ev, const Tolerances& tol, double se);

struct Relevance {
  bool relevant = false;
  double p1 = 0.0;  // Pr[D_t=1 | Z_t=1, history]
  double p0 = 0.0;  // Pr[D_t=1 | Z_t=0, history]
  double tol = 0.0;
};

// The period-t instrument entry of h is ignored; both values are queried.
Relevance check_relevance(const Evaluator& ev, const History& h, const Tolerances& tol = {});

struct HStat {
  int t = 0;
  int arm = 0;
  int x = 0;
  double value = 0.0;
  double std_error = 0.0;
};

// P[Y=1,D=1|z,x] + P[Y=1,D=0|z,x~] - P[Y=1,D=1|z~,x] - P[Y=1,D=0|z~,x~]
HStat compute_h_general(const Evaluator& ev, const History& h, int z, int z_alt, int x, int x_alt);
// P[Y_t=1, D_t=arm | Z_t=1, .] - P[Y_t=1, D_t=arm | Z_t=0, .] at x_t = x
HStat compute_h_arm(const Evaluator& ev, const History& h, int arm, int x);

enum class Sign { Negative = -1, Zero = 0, Positive = 1 };
std::string sign_name(Sign s);

struct SignResult {
  Sign sign = Sign::Zero;
  double h = 0.0;
  double tol = 0.0;
};

// Sign of mu_t(., 1, x) - mu_t(., 0, x_alt) read off the h statistic.
SignResult sign_mu_gap(const Evaluator& ev, const History& h, int x, int x_alt, const Tolerances& tol = {});

struct MatchSet {
  enum Status { Matched, NoMatch, Irrelevant };
  int t = 0;
  int arm = 0;
  int x = 0;
  Status status = NoMatch;
  std::vector<std::pair<int, double>> matches;     // (x~, residual), ascending
  std::vector<std::pair<int, double>> candidates;  // every reachable x~ with its residual
  std::vector<double> tols;                        // tolerance used per candidate
};

// Grid values x~ with |h^arm(x) + h^{1-arm}(x~)| within tolerance.
MatchSet match_lambda(const Evaluator& ev, const History& h, int arm, int x, const Tolerances& tol = {});

// Counting-backend variant. Thresholds depend on the past only through
// y^{t-1} (the recursion already requires them free of earlier treatments),
// so every cell sharing y^{t-1} carries the same sign information; the oriented h statistics are averaged over those cells with
// weights shared by all candidates.
MatchSet match_lambda_pooled(const Evaluator& ev, const History& h, int arm, int x, const Tolerances& tol = {});

enum class Status { Point, Bounds, Failed };
std::string status_name(Status s);

// One memoized recursion node. Weights are the treatment split at the node
// and the outcome laws inside the consistent and flipped branches.
struct TraceNode {
  int t = 0;
  Bits z, x, d, y;
  bool active = true;
  int r = 0;
  double w_consistent = 0.0;
  double w_flipped = 0.0;
  std::vector<double> y_consistent, y_flipped;
  std::vector<double> observed;  // inactive nodes: Pr[y_t, d_t] in 2*y+d order
  bool substituted = false;
  int matched_x = -1;
  double residual = 0.0;
  double spread = 0.0;
  // bounds ledger
  bool bounded = false;
  int lower_x = -1, upper_x = -1;
  int lower_sign = 0, upper_sign = 0;
  double lo = 0.0, hi = 0.0;
};

struct ArsfResult {
  Regime regime;
  Bits x;
  Status status = Status::Failed;
  double value = 0.0;
  double lo = 0.0, hi = 1.0;
  std::vector<TraceNode> trace;
  std::vector<std::pair<Bits, double>> aggregation;  // z and Pr[Z=z|x]
  // Instrument paths left out because a needed cell was empty; the
  // remaining weights are renormalized.
  std::vector<std::pair<Bits, std::string>> skipped;
  std::string failure;
};

// Pr[Y_s(d) = target_s for every restricted s <= horizon | x]. Regime masks
// switch off substitution at inactive periods, where the observed
// treatment law is used instead.
ArsfResult identify_joint_prob(const Evaluator& ev, const Regime& r, const Bits& target, const Bits& x,
                               int horizon, const IdentifyOptions& opt = {});

// E[Y_horizon(d) | x]; horizon defaults to T.
ArsfResult identify_arsf(const Evaluator& ev, const Regime& r, const Bits& x, const IdentifyOptions& opt = {},
                         int horizon = -1);

// Masked regime: only active periods are intervened on.
ArsfResult identify_arsf_subsequence(const Evaluator& ev, const Regime& r, const Bits& x,
                                     const IdentifyOptions& opt = {});

struct Effect {
  Status status = Status::Point;
  double value = 0.0;
  double lo = 0.0, hi = 0.0;
};

Effect identify_ate(const Evaluator& ev, const Regime& a, const Regime& b, const Bits& x,
                    const IdentifyOptions& opt = {});

struct TransitionEffect {
  double numerator_a = 0.0, denominator_a = 0.0, ratio_a = 0.0;
  double numerator_b = 0.0, denominator_b = 0.0, ratio_b = 0.0;
  double value = 0.0;
};

// y_minus has length T-1 with -1 for unrestricted periods.
TransitionEffect identify_transition_ate(const Evaluator& ev, const Regime& a, const Regime& b, const Bits& y_minus,
                                         const Bits& x, const IdentifyOptions& opt = {});

struct PeriodEffect {
  double treated = 0.0;    // E[Y_T(1) | Y_{T-1}=y, x]
  double untreated = 0.0;  // E[Y_T(0) | Y_{T-1}=y, x]
  double denominator = 1.0;
  double value = 0.0;
};

PeriodEffect identify_period_ate(const Evaluator& ev, int y_prev, const Bits& x, const IdentifyOptions& opt = {});

// Term-by-term closed form for T=2 and full regimes.
double ex_id_closed_form(const Evaluator& ev, const Regime& r, const Bits& x, const Tolerances& tol = {});

// Sequential-randomization baseline: chains observed transitions along the
// regime as if treatment were ignorable given the observed history.
double g_computation(const Evaluator& ev, const Regime& r, const Bits& x, int horizon = -1);

}  // namespace dyntx
