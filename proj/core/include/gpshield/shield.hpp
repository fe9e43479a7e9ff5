#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "gpshield/backup.hpp"
#include "gpshield/environment.hpp"
#include "gpshield/geometry.hpp"
#include "gpshield/gp.hpp"
#include "gpshield/rng.hpp"

namespace gpshield {

enum class ToleranceKind { Constant, QuadraticDecay, ExplicitList };

/**
 * Per-step failure tolerances eps_t whose episode total stays within a
 * budget eps in (0, 1).  Built through the named factories, which validate
 * the budget at construction:
 *
 *   constant(eps, T)        eps_t = eps / T for t in [0, T)
 *   quadratic_decay(eps)    eps_t = eps / ((t + 1)^2 pi^2), any t >= 0
 *   explicit_list(v, eps)   eps_t = v[t]; sum(v) must not exceed eps
 *
 * at(t) throws IndexError outside the supported step range.
 */
class ToleranceSchedule {
 public:
  /// Uniform split of the budget over `horizon` steps.  The default
  /// schedule spends 0.02 over 200 steps, i.e. 1e-4 per step.
  static ToleranceSchedule constant(double budget, int horizon);

  /// Summable decay with unbounded support; the total over all steps is
  /// budget / 6, comfortably inside the budget.
  static ToleranceSchedule quadratic_decay(double budget);

  /// Arbitrary per-step values, each in (0, 1), summing to at most budget.
  static ToleranceSchedule explicit_list(std::vector<double> values,
                                         double budget);

  ToleranceSchedule() : ToleranceSchedule(constant(0.02, 200)) {}

  /// Tolerance spent at step t.  Throws IndexError for negative t or for t
  /// beyond a constant schedule's horizon / an explicit list's length.
  double at(int t) const;

  ToleranceKind kind() const { return kind_; }
  double budget() const { return budget_; }
  /// Number of supported steps, or -1 for the unbounded decay schedule.
  int horizon() const { return horizon_; }

 private:
  struct Unchecked {};
  explicit ToleranceSchedule(Unchecked) {}

  ToleranceKind kind_ = ToleranceKind::Constant;
  double budget_ = 0.0;
  int horizon_ = 0;
  std::vector<double> values_;
};

/**
 * Static configuration of the action shield: forecast depth, tolerance
 * schedule, quantile selection, and the environment constants the forecast
 * needs (action bounds, observation and process noise).
 */
struct ShieldConfig {
  /// Forecast steps N: one candidate step followed by N - 1 backup steps.
  int recovery_horizon = 20;

  ToleranceSchedule schedule;

  /// When set, this fixed quantile replaces the per-step z(eps_t).
  std::optional<double> z_override;

  /// Scale confidence regions by sqrt of the chi-square(state_dim)
  /// quantile instead of the per-axis standard normal quantile.
  bool joint_quantile = false;

  /// Certify at the first forecast step whose confidence region fits in
  /// the terminal set, instead of requiring containment exactly at step N.
  bool accept_first_containment = false;

  /// Bounds the candidate is clipped to and the fallback action obeys.
  Box action_space;

  /// Per-dimension observation noise variance for the step-0 belief.
  /// Empty means exact state observations.
  Eigen::VectorXd obs_noise_var;

  /// Extra diagonal variance added at every forecast step (empty = none).
  Eigen::VectorXd process_noise;
};

/// Per-step tolerance for environment step t.
double tolerance_at(const ShieldConfig& config, int t);

/// One forecast step in a shield decision trace.
struct ShieldStepRecord {
  /// Forecast index: 0 is the current belief, k >= 1 the k-step forecast.
  int step = 0;
  Eigen::VectorXd mean;
  Eigen::VectorXd cov_diag;
  /// Confidence region contained in the safe set.
  bool safe_ok = false;
  /// Whether terminal-set containment was evaluated at this step.
  bool terminal_checked = false;
  bool terminal_ok = false;
};

struct ShieldDecision {
  /// The action to apply: the clipped candidate when certified, the
  /// clipped backup action otherwise.
  Eigen::VectorXd action;
  /// True when a failed check rerouted the step to the backup law.
  bool overridden = false;
  /// Description of the first failed check; empty when certified.
  std::string failure;
  /// Tolerance and quantile used for this decision.
  double epsilon = 0.0;
  double z = 0.0;
  /// Forecast records up to and including the step that settled the
  /// decision.
  std::vector<ShieldStepRecord> trace;
};

/**
 * Decide whether the candidate action may be applied at environment step
 * `step`, given the latest observation.
 *
 * The forecast starts from the belief (observed, diag obs_noise_var),
 * propagates one step under the clipped candidate and then under the
 * backup law through the fitted dynamics model, and checks the z-scaled
 * confidence region of every step against the safe set, plus the final
 * (or, optionally, first) step against the terminal set.  Any failed
 * check, non-finite input, or numeric failure inside the forecast falls
 * back to the backup action computed at the current observation; such
 * problems never propagate as exceptions.  Dimension mismatches between
 * the model, controller, sets, and config throw DomainError, and stepping
 * past the schedule's horizon throws IndexError, since both are setup
 * errors rather than runtime conditions.
 *
 * The decision is a pure function of its arguments.
 */
ShieldDecision shield_action(const GpModel& model,
                             const BackupController& backup,
                             const InvariantSet& terminal, const SafeSet& safe,
                             const ShieldConfig& config,
                             const Eigen::VectorXd& observed,
                             const Eigen::VectorXd& candidate, int step);

/**
 * Ground-truth recoverability frequency for one candidate at one state.
 *
 * Each rollout applies the clipped candidate once from the true state x0,
 * then the backup law (driven by noisy observations) for the remaining
 * steps, with disturbances drawn from the environment.  A rollout counts
 * as recoverable when the true state stays inside the safe set for all
 * `horizon` steps and enters the terminal set at some step in [0, horizon].
 * Returns the recoverable fraction over `samples` rollouts; reproducible
 * from the stream passed in.
 */
double check_recoverable_mc(const Environment& env,
                            const BackupController& backup,
                            const InvariantSet& terminal, const SafeSet& safe,
                            const Eigen::VectorXd& x0,
                            const Eigen::VectorXd& candidate, int horizon,
                            int samples, RngStream& rng);

/**
 * Smallest K such that K - 1 failure-free rollouts refute a failure mode
 * of probability >= eps at confidence 1 - delta:
 * K = ceil(log(1/delta) / log(1/(1 - eps)) + 1).  Both arguments must lie
 * in (0, 1).
 */
long required_sample_count(double eps, double delta);

}  // namespace gpshield
