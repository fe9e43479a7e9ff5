#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gpshield/geometry.hpp"
#include "gpshield/rng.hpp"

namespace gpshield {

enum class EnvKind {
  Cartpole,
  MountainCar,
  PointMass,
};

enum class RewardKind {
  /// +1 for every step whose next true state stays inside the safe set.
  SafePerStep,
  /// +1 for every step where one state coordinate exceeds a threshold.
  ThresholdBonus,
  /// Sparse goal bonus, with a per-step action-magnitude cost off the goal.
  GoalWithActionCost,
  /// Goal bonus plus dense distance-progress shaping toward a target point.
  GoalDense,
};

struct RewardSpec {
  RewardKind kind = RewardKind::SafePerStep;

  int threshold_dim = 0;
  double threshold = 0.0;

  double bonus = 0.0;
  double action_cost = 0.0;

  /// Goal condition: next(d) >= goal_min(i) for every listed dimension d.
  std::vector<int> goal_dims;
  Eigen::VectorXd goal_min;

  /// Shaping distance is the Euclidean norm over these dimensions.
  std::vector<int> dense_dims;
  Eigen::VectorXd dense_target;
};

enum class InitKind { FixedPoint, UniformBox };

/**
 * Full description of a benchmark environment: dynamics family and its
 * constants, state/action/disturbance spaces, observation noise, safe set,
 * initial-state distribution, reward, and episode termination rules.
 */
struct EnvironmentConfig {
  std::string name;
  EnvKind kind = EnvKind::PointMass;
  int state_dim = 0;
  int action_dim = 0;

  // cartpole constants
  double cp_force = 10.0;
  double cp_mass_cart = 1.0;
  double cp_mass_pole = 0.1;
  double cp_pole_length = 0.5;
  double cp_gravity = 9.8;
  double cp_tau = 0.02;

  // mountain-car constants
  double mc_force = 0.00015;
  double mc_gravity = 0.0025;

  // point-mass constants: per axis,
  //   vel' = vel + accel_coef * u + w,  pos' = pos + pos_coef * vel'
  int pm_axes = 1;
  double pm_pos_coef = 1.0;
  double pm_accel_coef = 0.001;

  Box state_space{Eigen::VectorXd(), Eigen::VectorXd()};
  Box action_space{Eigen::VectorXd(), Eigen::VectorXd()};
  /// Additive disturbance support; dimension equals the velocity-update count.
  Box disturbance_box{Eigen::VectorXd(), Eigen::VectorXd()};
  /// Per-dimension observation noise variance (diagonal).
  Eigen::VectorXd obs_noise_var;
  SafeSet safe_set;

  InitKind init_kind = InitKind::FixedPoint;
  Eigen::VectorXd init_point;
  Box init_box{Eigen::VectorXd(), Eigen::VectorXd()};

  RewardSpec reward;

  int max_steps = 200;
  bool terminate_on_goal = false;
  bool terminate_on_violation = false;
};

/// Named factory for the built-in benchmark environments. Known names:
/// cartpole, cartpole2, cartpole3, mountain_car, obstacle, obstacle2,
/// obstacle3, obstacle4, road, road_2d. Throws ConfigError otherwise.
EnvironmentConfig make_environment_config(const std::string& name);

/// One interaction step as recorded by the harness.
struct Transition {
  Eigen::VectorXd state;
  Eigen::VectorXd observed;
  Eigen::VectorXd action;
  double reward = 0.0;
  Eigen::VectorXd next_state;
  Eigen::VectorXd next_observed;
  /// Whether the next true state lies inside the safe set.
  bool safe = true;
  bool goal = false;
  /// Whether the environment's own rules end the episode after this step.
  bool terminal = false;
};

/**
 * Simulator for a benchmark environment. All stochasticity (disturbances,
 * observation noise, initial states) is drawn from a caller-provided
 * RngStream, so trajectories are reproducible from the seed alone.
 */
class Environment {
 public:
  explicit Environment(EnvironmentConfig config);

  const EnvironmentConfig& config() const { return config_; }
  const std::string& name() const { return config_.name; }
  int state_dim() const { return config_.state_dim; }
  int action_dim() const { return config_.action_dim; }
  int disturbance_dim() const;

  /**
   * Deterministic transition map x' = f(x, u, w). The action is used as
   * given (no clipping here); w must have disturbance_dim() entries.
   * Pass a zero w for the nominal dynamics.
   */
  Eigen::VectorXd dynamics(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                           const Eigen::VectorXd& w) const;

  /// Nominal dynamics with zero disturbance.
  Eigen::VectorXd dynamics(const Eigen::VectorXd& x,
                           const Eigen::VectorXd& u) const;

  /// Uniform draw from the disturbance box.
  Eigen::VectorXd draw_disturbance(RngStream& rng) const;

  /// True state plus independent Gaussian observation noise per dimension.
  Eigen::VectorXd observe(const Eigen::VectorXd& true_state,
                          RngStream& rng) const;

  /// Draw an initial true state and its first observation.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> reset(RngStream& rng) const;

  /**
   * One stochastic step from a true state. The action is clipped to the
   * action space first; the clipped value is what the transition records.
   * Reward, safety, and goal flags are evaluated on true states.
   */
  Transition step(const Eigen::VectorXd& true_state,
                  const Eigen::VectorXd& action, RngStream& rng) const;

  double reward(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                const Eigen::VectorXd& next) const;
  bool goal_reached(const Eigen::VectorXd& next) const;
  bool is_safe(const Eigen::VectorXd& x) const;

 private:
  EnvironmentConfig config_;
};

struct EpisodeResult {
  std::vector<Transition> transitions;
  double total_return = 0.0;
  bool violated = false;
  /// Index of the first unsafe transition, or -1 if none.
  int violation_step = -1;
  /// Per-step override flags as reported by the policy.
  std::vector<bool> overrides;
};

/// Policy callback: (observed state, step index) -> (action, override flag).
/// The override flag marks steps where a backup controller supplied the
/// action; it is recorded but does not change the environment's behaviour.
using EpisodePolicy =
    std::function<std::pair<Eigen::VectorXd, bool>(const Eigen::VectorXd&, int)>;

/**
 * Roll one episode: reset, then step until the environment terminates or
 * max_steps is reached (pass max_steps <= 0 to use the config's limit).
 */
EpisodeResult run_episode(const Environment& env, const EpisodePolicy& policy,
                          RngStream& rng, int max_steps = 0);

}  // namespace gpshield
