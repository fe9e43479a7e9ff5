#include "gpshield/shield.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "gpshield/errors.hpp"
#include "gpshield/numerics.hpp"

namespace gpshield {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_budget(double budget) {
  if (!(budget > 0.0) || !(budget < 1.0)) {
    throw DomainError("tolerance budget must lie in (0, 1)");
  }
}

}  // namespace

ToleranceSchedule ToleranceSchedule::constant(double budget, int horizon) {
  check_budget(budget);
  if (horizon <= 0) throw DomainError("schedule horizon must be positive");
  ToleranceSchedule s{Unchecked{}};
  s.kind_ = ToleranceKind::Constant;
  s.budget_ = budget;
  s.horizon_ = horizon;
  return s;
}

ToleranceSchedule ToleranceSchedule::quadratic_decay(double budget) {
  check_budget(budget);
  ToleranceSchedule s{Unchecked{}};
  s.kind_ = ToleranceKind::QuadraticDecay;
  s.budget_ = budget;
  s.horizon_ = -1;
  return s;
}

ToleranceSchedule ToleranceSchedule::explicit_list(std::vector<double> values,
                                                   double budget) {
  check_budget(budget);
  if (values.empty()) throw DomainError("explicit schedule must be non-empty");
  double total = 0.0;
  for (double v : values) {
    if (!(v > 0.0) || !(v < 1.0) || !std::isfinite(v)) {
      throw DomainError("explicit schedule entries must lie in (0, 1)");
    }
    total += v;
  }
  if (total > budget * (1.0 + 1e-12)) {
    throw DomainError("explicit schedule exceeds the tolerance budget");
  }
  ToleranceSchedule s{Unchecked{}};
  s.kind_ = ToleranceKind::ExplicitList;
  s.budget_ = budget;
  s.horizon_ = static_cast<int>(values.size());
  s.values_ = std::move(values);
  return s;
}

double ToleranceSchedule::at(int t) const {
  if (t < 0) throw IndexError("schedule step must be non-negative");
  switch (kind_) {
    case ToleranceKind::Constant:
      if (t >= horizon_) {
        throw IndexError("step beyond the constant schedule horizon");
      }
      return budget_ / static_cast<double>(horizon_);
    case ToleranceKind::QuadraticDecay: {
      const double k = static_cast<double>(t) + 1.0;
      return budget_ / (k * k * kPi * kPi);
    }
    case ToleranceKind::ExplicitList:
      if (t >= horizon_) {
        throw IndexError("step beyond the explicit schedule length");
      }
      return values_[static_cast<std::size_t>(t)];
  }
  throw DomainError("unknown schedule kind");
}

double tolerance_at(const ShieldConfig& config, int t) {
  return config.schedule.at(t);
}

namespace {

/// Validates the static wiring between model, controller, sets, and
/// config.  These mismatches are setup bugs, so they throw rather than
/// degrade to an override.
void check_shield_dims(const GpModel& model, const BackupController& backup,
                       const InvariantSet& terminal, const SafeSet& safe,
                       const ShieldConfig& config) {
  const int n = static_cast<int>(backup.x_eq.size());
  const int m = static_cast<int>(backup.u_eq.size());
  if (n == 0 || m == 0) throw DomainError("backup controller is empty");
  if (backup.K.rows() != m || backup.K.cols() != n) {
    throw DomainError("backup gain shape does not match the equilibrium");
  }
  if (model.input_dim() != n + m || model.output_dim() != n) {
    throw DomainError("dynamics model dimensions do not match the controller");
  }
  if (config.recovery_horizon < 1) {
    throw DomainError("recovery horizon must be at least 1");
  }
  if (config.action_space.dim() != m) {
    throw DomainError("action space dimension does not match the controller");
  }
  if (config.obs_noise_var.size() != 0 && config.obs_noise_var.size() != n) {
    throw DomainError("observation noise dimension does not match the state");
  }
  if (config.process_noise.size() != 0 && config.process_noise.size() != n) {
    throw DomainError("process noise dimension does not match the state");
  }
  if (region_dim(terminal.region) != n) {
    throw DomainError("terminal set dimension does not match the state");
  }
  for (const ConvexRegion& r : safe.inclusions) {
    if (region_dim(r) != n) {
      throw DomainError("safe set dimension does not match the state");
    }
  }
  for (const ConvexRegion& r : safe.exclusions) {
    if (region_dim(r) != n) {
      throw DomainError("safe set dimension does not match the state");
    }
  }
}

ShieldStepRecord record_step(int step, const GaussianBelief& belief) {
  ShieldStepRecord rec;
  rec.step = step;
  rec.mean = belief.mean;
  rec.cov_diag = belief.cov.diagonal();
  return rec;
}

}  // namespace

ShieldDecision shield_action(const GpModel& model,
                             const BackupController& backup,
                             const InvariantSet& terminal, const SafeSet& safe,
                             const ShieldConfig& config,
                             const Eigen::VectorXd& observed,
                             const Eigen::VectorXd& candidate, int step) {
  check_shield_dims(model, backup, terminal, safe, config);
  const int n = static_cast<int>(backup.x_eq.size());
  const int m = static_cast<int>(backup.u_eq.size());

  ShieldDecision decision;
  decision.epsilon = config.schedule.at(step);
  if (config.z_override) {
    decision.z = *config.z_override;
  } else if (config.joint_quantile) {
    decision.z = std::sqrt(
        chi_square_quantile(1.0 - decision.epsilon, static_cast<double>(n)));
  } else {
    decision.z = std_normal_quantile(1.0 - decision.epsilon);
  }

  const bool usable_observation =
      observed.size() == n && observed.allFinite();
  const Eigen::VectorXd fallback_state =
      usable_observation ? observed : backup.x_eq;
  const auto fall_back = [&](std::string why) {
    decision.overridden = true;
    decision.failure = std::move(why);
    decision.action =
        backup.clipped_action(fallback_state, config.action_space);
    return decision;
  };

  if (!usable_observation) {
    return fall_back("observation is non-finite or has the wrong dimension");
  }
  if (candidate.size() != m || !candidate.allFinite()) {
    return fall_back("candidate action is non-finite or has the wrong dimension");
  }

  const int N = config.recovery_horizon;
  try {
    Eigen::MatrixXd cov0 = Eigen::MatrixXd::Zero(n, n);
    if (config.obs_noise_var.size() == n) {
      cov0.diagonal() = config.obs_noise_var;
    }
    GaussianBelief belief(observed, cov0);

    ShieldStepRecord rec0 = record_step(0, belief);
    rec0.safe_ok =
        ellipsoid_in_safe_set(Ellipsoid::from_belief(belief, decision.z), safe);
    decision.trace.push_back(rec0);
    if (!rec0.safe_ok) {
      return fall_back("current belief is not contained in the safe set");
    }

    const Eigen::VectorXd clipped = config.action_space.clamp(candidate);
    PropagateOptions options;
    options.process_noise = config.process_noise;

    belief = propagate_state(model, belief, clipped, options);
    for (int t = 1; t <= N; ++t) {
      const Ellipsoid region = Ellipsoid::from_belief(belief, decision.z);
      ShieldStepRecord rec = record_step(t, belief);
      rec.safe_ok = ellipsoid_in_safe_set(region, safe);
      const bool check_terminal = config.accept_first_containment || t == N;
      if (rec.safe_ok && check_terminal) {
        rec.terminal_checked = true;
        rec.terminal_ok = ellipsoid_in_region(region, terminal.region);
      }
      decision.trace.push_back(rec);

      if (!rec.safe_ok) {
        return fall_back("forecast step " + std::to_string(t) +
                         " leaves the safe set");
      }
      if (rec.terminal_checked && rec.terminal_ok) break;
      if (t == N) {
        return fall_back("forecast does not reach the terminal set by step " +
                         std::to_string(N));
      }
      belief = propagate_state(model, belief, backup.K, backup.x_eq,
                               backup.u_eq, options);
    }

    decision.action = clipped;
    return decision;
  } catch (const std::exception& err) {
    return fall_back(std::string("forecast failed: ") + err.what());
  }
}

double check_recoverable_mc(const Environment& env,
                            const BackupController& backup,
                            const InvariantSet& terminal, const SafeSet& safe,
                            const Eigen::VectorXd& x0,
                            const Eigen::VectorXd& candidate, int horizon,
                            int samples, RngStream& rng) {
  if (horizon < 1) throw DomainError("recoverability horizon must be >= 1");
  if (samples < 1) throw DomainError("recoverability needs >= 1 sample");
  if (x0.size() != env.state_dim() || !x0.allFinite()) {
    throw DomainError("start state does not match the environment");
  }
  if (candidate.size() != env.action_dim()) {
    throw DomainError("candidate action does not match the environment");
  }

  const Box& action_space = env.config().action_space;
  const Eigen::VectorXd first_action = action_space.clamp(candidate);

  int recoverable = 0;
  for (int s = 0; s < samples; ++s) {
    RngStream sub = rng.substream(s);
    Eigen::VectorXd x = x0;
    bool stayed_safe = safe.contains(x);
    bool entered = stayed_safe && terminal.contains(x);
    for (int t = 0; t < horizon && stayed_safe; ++t) {
      const Eigen::VectorXd u =
          t == 0 ? first_action
                 : backup.clipped_action(env.observe(x, sub), action_space);
      x = env.dynamics(x, u, env.draw_disturbance(sub));
      if (!safe.contains(x)) {
        stayed_safe = false;
        break;
      }
      if (terminal.contains(x)) entered = true;
    }
    if (stayed_safe && entered) ++recoverable;
  }
  return static_cast<double>(recoverable) / static_cast<double>(samples);
}

long required_sample_count(double eps, double delta) {
  if (!(eps > 0.0) || !(eps < 1.0)) {
    throw DomainError("failure probability must lie in (0, 1)");
  }
  if (!(delta > 0.0) || !(delta < 1.0)) {
    throw DomainError("confidence level must lie in (0, 1)");
  }
  const double raw = std::log(1.0 / delta) / std::log(1.0 / (1.0 - eps)) + 1.0;
  return static_cast<long>(std::ceil(raw - 1e-9));
}

}  // namespace gpshield
