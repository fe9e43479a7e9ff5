#pragma once

#include <Eigen/Dense>
#include <string>
#include <unordered_map>
#include <vector>

#include "gpshield/environment.hpp"
#include "gpshield/geometry.hpp"
#include "gpshield/gp.hpp"
#include "gpshield/mlp.hpp"
#include "gpshield/rng.hpp"

namespace gpshield {

/// sign(x) log(1 + |x|): compresses large magnitudes symmetrically.
double symlog(double x);
/// Inverse of symlog: sign(z) (exp(|z|) - 1).
double symexp(double z);

struct GaeResult {
  Eigen::VectorXd advantages;
  /// TD-lambda returns: advantages + values.
  Eigen::VectorXd returns;
};

/**
 * Generalized advantage estimation over one trajectory.  `rewards` has one
 * entry per step, `values` the state-value estimate at each step's start
 * state, and `bootstrap_value` stands in for the value after the final
 * step (pass 0 for terminal states).  Backward recursion
 * A_t = delta_t + gamma lambda A_{t+1} with
 * delta_t = r_t + gamma V_{t+1} - V_t.
 */
GaeResult gae(const Eigen::VectorXd& rewards, const Eigen::VectorXd& values,
              double bootstrap_value, double gamma, double lambda);

/// An action draw: the raw Gaussian sample (log-prob basis) and its clip
/// onto the action space (what the system applies).
struct PolicyAction {
  Eigen::VectorXd raw;
  Eigen::VectorXd clipped;
  double log_prob = 0.0;
};

/**
 * Diagonal-Gaussian policy: a two-hidden-layer tanh network produces the
 * action mean, and a state-independent learnable log-std (initialized to
 * log of half the action range per dimension) sets the exploration scale.
 * Log-probs are always evaluated on raw, pre-clip samples.
 */
class GaussianPolicy {
 public:
  GaussianPolicy(int state_dim, const Box& action_space, int hidden_units,
                 RngStream& rng);

  int state_dim() const { return net_.input_dim(); }
  int action_dim() const { return net_.output_dim(); }
  const Box& action_space() const { return action_space_; }

  Eigen::VectorXd mean(const Eigen::VectorXd& state) const;
  const Eigen::VectorXd& log_std() const { return log_std_; }

  PolicyAction act(const Eigen::VectorXd& state, RngStream& rng) const;
  double log_prob(const Eigen::VectorXd& state,
                  const Eigen::VectorXd& raw_action) const;
  /// Differential entropy of the action distribution (state-independent).
  double entropy() const;

  /// Flat parameters: network first, then the log-std vector.
  int param_count() const { return net_.param_count() + action_dim(); }
  Eigen::VectorXd params() const;
  void set_params(const Eigen::VectorXd& flat);

  const Mlp& net() const { return net_; }

 private:
  Mlp net_;
  Eigen::VectorXd log_std_;
  Box action_space_;
};

/**
 * State-value network with the same trunk; the scalar output lives in
 * symlog space, so callers convert with symexp when they need values in
 * reward units.
 */
class ValueCritic {
 public:
  ValueCritic(int state_dim, int hidden_units, RngStream& rng);

  int state_dim() const { return net_.input_dim(); }
  double value(const Eigen::VectorXd& state) const;

  int param_count() const { return net_.param_count(); }
  Eigen::VectorXd params() const { return net_.params(); }
  void set_params(const Eigen::VectorXd& flat) { net_.set_params(flat); }

  const Mlp& net() const { return net_; }

 private:
  Mlp net_;
};

/**
 * Ring buffer of transitions with novelty-weighted start sampling.
 *
 * The state space is discretized per dimension into `bins_per_dim` equal
 * bins plus two overflow bins; dimensions without finite bounds take
 * their range from the buffer contents at the first sampling call.  Visit
 * counts per bin accumulate over every add and are never decremented, so
 * a stored state from a heavily visited bin is sampled with probability
 * proportional to 1 / visits(bin), renormalized over the buffer.
 */
class ReplayBuffer {
 public:
  ReplayBuffer(int capacity, const Box& state_space, int bins_per_dim = 10);

  void add(const Transition& t);
  int size() const { return static_cast<int>(data_.size()); }
  int capacity() const { return capacity_; }
  bool empty() const { return data_.empty(); }
  long total_added() const { return added_; }
  const Transition& at(int i) const;

  /// Draw `count` start states with replacement, novelty-weighted.
  /// Throws EmptyBuffer when nothing is stored.
  std::vector<Eigen::VectorXd> sample_starts(int count, RngStream& rng);

  /// Normalized per-item sampling weights, aligned with at(i).
  Eigen::VectorXd sampling_weights();

 private:
  long bin_of(const Eigen::VectorXd& x) const;
  void freeze_edges();

  int capacity_;
  int bins_;
  Box space_;
  std::vector<Transition> data_;
  int next_ = 0;
  long added_ = 0;
  bool frozen_ = false;
  Eigen::VectorXd edge_lo_, edge_hi_;
  std::unordered_map<long, long> visits_;
};

/// One imagined transition: the mean state an action was sampled at, the
/// raw action, the reward of the imagined step, and whether the imagined
/// next state stayed inside the safe set.
struct ImaginedStep {
  Eigen::VectorXd state;
  Eigen::VectorXd action;
  double reward = 0.0;
  bool next_safe = true;
};

struct ImaginedRollout {
  Eigen::VectorXd start;
  /// At most `horizon` steps; cut at the first step whose next state is
  /// unsafe (that step carries reward 0).
  std::vector<ImaginedStep> steps;
  /// State after the last step; the bootstrap point for safe truncation.
  Eigen::VectorXd final_state;
  bool truncated_unsafe = false;

  /// Index of the first unsafe step, or -1 when the rollout stayed safe.
  int truncation_index() const {
    return truncated_unsafe ? static_cast<int>(steps.size()) : -1;
  }
  double reward_sum() const;
};

struct ImagineOptions {
  int horizon = 16;
  /// Sampled dynamics functions per start state; each path rolls out under
  /// one fixed function sample so trajectories are self-consistent.
  int posterior_samples = 5;
  int rff_features = 500;
  /// Replace per-path function samples with the posterior mean.
  bool mean_propagation = false;
};

/**
 * Roll the policy inside the learned dynamics from each start state,
 * `posterior_samples` paths per start.  Actions are sampled from the
 * policy at the imagined mean state; rewards use the environment's reward
 * function on imagined states with the clipped action; a step landing
 * outside `safe` zeroes its reward and ends the rollout.  A start state
 * already outside `safe` yields a length-0 unsafe rollout.  Deterministic
 * given the stream.
 */
std::vector<ImaginedRollout> imagine_rollouts(
    const GpModel& model, const GaussianPolicy& policy, const Environment& env,
    const std::vector<Eigen::VectorXd>& starts, const SafeSet& safe,
    const ImagineOptions& options, RngStream& rng);

/// Transition-level actor batch: per-step states, raw actions, advantages.
struct ActorBatch {
  std::vector<Eigen::VectorXd> states;
  std::vector<Eigen::VectorXd> actions;
  Eigen::VectorXd advantages;
};

/**
 * Actor loss -mean(adv * log pi) - entropy_coef * entropy and its exact
 * gradient in the policy's flat parameter layout.  `grad` is resized and
 * overwritten.  Returns the loss.
 */
double actor_loss_and_grad(const GaussianPolicy& policy,
                           const ActorBatch& batch, double entropy_coef,
                           Eigen::VectorXd& grad);

/// Critic batch: states with symlog-space regression targets and the
/// target network's predictions for the regularizer.
struct CriticBatch {
  std::vector<Eigen::VectorXd> states;
  Eigen::VectorXd targets;
  Eigen::VectorXd reg_targets;
};

/**
 * Critic loss mean((V - target)^2) + reg_coef * mean((V - reg_target)^2)
 * and its exact gradient.  All quantities are in symlog space.
 */
double critic_loss_and_grad(const ValueCritic& critic, const CriticBatch& batch,
                            double reg_coef, Eigen::VectorXd& grad);

struct UpdateConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double actor_lr = 3e-4;
  double critic_lr = 1e-3;
  double entropy_coef = 0.05;
  double critic_reg = 1.0;
  double clip_norm = 0.5;
  double polyak_tau = 0.02;
  /// Optimizer steps taken on each imagined batch.
  int iterations = 10;
};

struct UpdateReport {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
  /// Mean imagined reward sum per rollout (before any update).
  double mean_return = 0.0;
  /// Pre-clip gradient norms from the last iteration.
  double actor_grad_norm = 0.0;
  double critic_grad_norm = 0.0;
  int transitions = 0;
};

/**
 * Actor-critic learner.  Owns the policy, the critic, its Polyak-averaged
 * target copy, and per-network adaptive-moment optimizers whose state
 * persists across update rounds.
 *
 * Each update round takes `iterations` optimizer steps on the given
 * imagined batch.  Every step recomputes values and advantages under the
 * current critic (values converted with symexp; unsafe-truncated rollouts
 * bootstrap 0), clips both gradients to `clip_norm`, and moves the target
 * critic by polyak_tau toward the critic.  A non-finite gradient aborts
 * the step before any parameter changes and surfaces as
 * NonFiniteGradient.
 */
class A2cTrainer {
 public:
  A2cTrainer(GaussianPolicy policy, ValueCritic critic, UpdateConfig config);

  UpdateReport update(const std::vector<ImaginedRollout>& rollouts);

  const GaussianPolicy& policy() const { return policy_; }
  const ValueCritic& critic() const { return critic_; }
  const ValueCritic& target_critic() const { return target_; }
  const UpdateConfig& config() const { return config_; }

  /// Serializes networks and optimizer state (architecture checked on
  /// load; the update configuration comes from the caller).
  void save_checkpoint(const std::string& path) const;
  static A2cTrainer load_checkpoint(const std::string& path,
                                    const UpdateConfig& config);

 private:
  GaussianPolicy policy_;
  ValueCritic critic_;
  ValueCritic target_;
  UpdateConfig config_;
  Adam actor_opt_;
  Adam critic_opt_;
};

}  // namespace gpshield
