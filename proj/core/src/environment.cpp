#include "gpshield/environment.hpp"

#include <cmath>
#include <limits>

#include "gpshield/errors.hpp"

namespace gpshield {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd constant_vec(int n, double v) {
  return Eigen::VectorXd::Constant(n, v);
}

Box symmetric_box(int n, double half_width) {
  return Box{constant_vec(n, -half_width), constant_vec(n, half_width)};
}

/// Box over position coordinates only; velocity coordinates unbounded.
Box position_box(double x_lo, double x_hi, double y_lo, double y_hi) {
  Eigen::VectorXd lo(4), hi(4);
  lo << x_lo, y_lo, -kInf, -kInf;
  hi << x_hi, y_hi, kInf, kInf;
  return Box{lo, hi};
}

EnvironmentConfig cartpole_base() {
  EnvironmentConfig c;
  c.name = "cartpole";
  c.kind = EnvKind::Cartpole;
  c.state_dim = 4;
  c.action_dim = 1;

  Eigen::VectorXd lo(4), hi(4);
  lo << -4.8, -0.4190, -kInf, -kInf;
  hi << 4.8, 0.4190, kInf, kInf;
  c.state_space = Box{lo, hi};
  c.action_space = symmetric_box(1, 1.0);
  c.disturbance_box = symmetric_box(2, 0.001);
  c.obs_noise_var = constant_vec(4, 1e-6);

  Eigen::VectorXd slo(4), shi(4);
  slo << -2.4, -0.2095, -kInf, -kInf;
  shi << 2.4, 0.2095, kInf, kInf;
  c.safe_set.inclusions.push_back(Box{slo, shi});

  c.init_kind = InitKind::UniformBox;
  c.init_box = symmetric_box(4, 0.5);

  c.reward.kind = RewardKind::SafePerStep;
  c.max_steps = 200;
  c.terminate_on_violation = true;
  return c;
}

EnvironmentConfig mountain_car_config() {
  EnvironmentConfig c;
  c.name = "mountain_car";
  c.kind = EnvKind::MountainCar;
  c.state_dim = 2;
  c.action_dim = 1;

  Eigen::VectorXd lo(2), hi(2);
  lo << -1.2, -0.07;
  hi << 0.6, 0.07;
  c.state_space = Box{lo, hi};
  c.action_space = symmetric_box(1, 1.0);
  c.disturbance_box = symmetric_box(1, 0.001);
  c.obs_noise_var = constant_vec(2, 1e-6);

  Eigen::VectorXd slo(2), shi(2);
  slo << -1.2, -kInf;
  shi << kInf, kInf;
  c.safe_set.inclusions.push_back(Box{slo, shi});

  c.init_kind = InitKind::UniformBox;
  Eigen::VectorXd ilo(2), ihi(2);
  ilo << -0.6, 0.0;
  ihi << -0.4, 0.0;
  c.init_box = Box{ilo, ihi};

  c.reward.kind = RewardKind::GoalWithActionCost;
  c.reward.bonus = 100.0;
  c.reward.action_cost = 0.1;
  c.reward.goal_dims = {0};
  c.reward.goal_min = constant_vec(1, 0.45);

  c.max_steps = 1000;
  c.terminate_on_goal = true;
  return c;
}

/// Shared skeleton for the planar point-mass navigation tasks.
EnvironmentConfig obstacle_base(const std::string& name, double pos_coef,
                                double accel_coef) {
  EnvironmentConfig c;
  c.name = name;
  c.kind = EnvKind::PointMass;
  c.state_dim = 4;
  c.action_dim = 2;
  c.pm_axes = 2;
  c.pm_pos_coef = pos_coef;
  c.pm_accel_coef = accel_coef;

  Eigen::VectorXd lo(4), hi(4);
  lo << -0.5, -0.5, -0.05, -0.05;
  hi << 3.5, 3.5, 0.05, 0.05;
  c.state_space = Box{lo, hi};
  c.action_space = symmetric_box(2, 2.0);
  c.disturbance_box = symmetric_box(2, 0.001);
  c.obs_noise_var = constant_vec(4, 1e-6);

  c.init_kind = InitKind::FixedPoint;
  c.init_point = constant_vec(4, 0.0);

  c.reward.kind = RewardKind::GoalDense;
  c.reward.bonus = 30.0;
  c.max_steps = 200;
  return c;
}

void set_goal(EnvironmentConfig& c, std::vector<int> dims,
              std::initializer_list<double> mins) {
  c.reward.goal_dims = std::move(dims);
  c.reward.goal_min.resize(static_cast<Eigen::Index>(mins.size()));
  Eigen::Index i = 0;
  for (double v : mins) c.reward.goal_min(i++) = v;
}

void set_dense(EnvironmentConfig& c, std::vector<int> dims,
               std::initializer_list<double> target) {
  c.reward.dense_dims = std::move(dims);
  c.reward.dense_target.resize(static_cast<Eigen::Index>(target.size()));
  Eigen::Index i = 0;
  for (double v : target) c.reward.dense_target(i++) = v;
}

EnvironmentConfig road_base(const std::string& name, int axes,
                            double accel_coef) {
  EnvironmentConfig c;
  c.name = name;
  c.kind = EnvKind::PointMass;
  c.pm_axes = axes;
  c.pm_pos_coef = 10.0;
  c.pm_accel_coef = accel_coef;
  c.state_dim = 2 * axes;
  c.action_dim = axes;

  Eigen::VectorXd lo(c.state_dim), hi(c.state_dim);
  for (int a = 0; a < axes; ++a) {
    lo(a) = -4.0;
    hi(a) = 4.0;
    lo(axes + a) = -0.1;
    hi(axes + a) = 0.1;
  }
  c.state_space = Box{lo, hi};
  c.action_space = symmetric_box(axes, 2.0);
  c.disturbance_box = symmetric_box(axes, 0.001);
  c.obs_noise_var = constant_vec(c.state_dim, 1e-6);

  Eigen::VectorXd slo(c.state_dim), shi(c.state_dim);
  for (int a = 0; a < axes; ++a) {
    slo(a) = -kInf;
    shi(a) = kInf;
    slo(axes + a) = -0.01;
    shi(axes + a) = 0.01;
  }
  c.safe_set.inclusions.push_back(Box{slo, shi});

  c.init_kind = InitKind::FixedPoint;
  c.init_point = constant_vec(c.state_dim, 0.0);

  c.reward.kind = RewardKind::GoalDense;
  c.reward.bonus = 20.0;
  c.max_steps = 200;
  c.terminate_on_goal = true;
  return c;
}

}  // namespace

EnvironmentConfig make_environment_config(const std::string& name) {
  if (name == "cartpole") {
    return cartpole_base();
  }
  if (name == "cartpole2") {
    EnvironmentConfig c = cartpole_base();
    c.name = name;
    c.reward = RewardSpec{};
    c.reward.kind = RewardKind::ThresholdBonus;
    c.reward.threshold_dim = 0;
    c.reward.threshold = 0.1;
    return c;
  }
  if (name == "cartpole3") {
    EnvironmentConfig c = cartpole_base();
    c.name = name;
    c.reward = RewardSpec{};
    c.reward.kind = RewardKind::ThresholdBonus;
    c.reward.threshold_dim = 1;
    c.reward.threshold = 0.1;
    return c;
  }
  if (name == "mountain_car") {
    return mountain_car_config();
  }
  if (name == "obstacle") {
    EnvironmentConfig c = obstacle_base(name, 2.0, 0.005);
    c.safe_set.exclusions.push_back(position_box(0.0, 1.0, 2.0, 3.0));
    set_goal(c, {0, 1}, {3.0, 0.0});
    set_dense(c, {0}, {3.0});
    return c;
  }
  if (name == "obstacle2") {
    EnvironmentConfig c = obstacle_base(name, 1.0, 0.002);
    c.safe_set.exclusions.push_back(position_box(1.0, 2.0, 1.0, 2.0));
    set_goal(c, {0, 1}, {3.0, 3.0});
    set_dense(c, {0, 1}, {3.0, 3.0});
    return c;
  }
  if (name == "obstacle3") {
    EnvironmentConfig c = obstacle_base(name, 1.0, 0.002);
    c.safe_set.exclusions.push_back(position_box(1.5, 2.0, 0.5, 2.0));
    // keep-out band above y = 2.5, expressed as an inclusion bound
    Eigen::VectorXd slo(4), shi(4);
    slo << -kInf, -kInf, -kInf, -kInf;
    shi << kInf, 2.5, kInf, kInf;
    c.safe_set.inclusions.push_back(Box{slo, shi});
    set_goal(c, {0, 1}, {3.0, 1.5});
    set_dense(c, {0, 1}, {3.0, 1.5});
    return c;
  }
  if (name == "obstacle4") {
    EnvironmentConfig c = obstacle_base(name, 1.0, 0.002);
    c.safe_set.exclusions.push_back(position_box(1.5, 2.0, 0.5, 2.0));
    c.safe_set.exclusions.push_back(position_box(1.5, 2.0, 2.5, 4.0));
    set_goal(c, {0, 1}, {3.0, 2.0});
    set_dense(c, {0, 1}, {3.0, 2.0});
    return c;
  }
  if (name == "road") {
    EnvironmentConfig c = road_base(name, 1, 0.001);
    set_goal(c, {0}, {3.0});
    set_dense(c, {0}, {3.0});
    return c;
  }
  if (name == "road_2d") {
    EnvironmentConfig c = road_base(name, 2, 0.0005);
    set_goal(c, {0, 1}, {3.0, 3.0});
    set_dense(c, {0, 1}, {3.0, 3.0});
    return c;
  }
  throw ConfigError("unknown environment name: " + name);
}

Environment::Environment(EnvironmentConfig config) : config_(std::move(config)) {
  const EnvironmentConfig& c = config_;
  if (c.state_dim <= 0 || c.action_dim <= 0) {
    throw ConfigError("environment " + c.name + ": dimensions must be positive");
  }
  if (c.state_space.dim() != c.state_dim ||
      c.action_space.dim() != c.action_dim) {
    throw ConfigError("environment " + c.name +
                      ": state/action space dimension mismatch");
  }
  if (c.obs_noise_var.size() != c.state_dim ||
      (c.obs_noise_var.array() < 0.0).any()) {
    throw ConfigError("environment " + c.name +
                      ": observation noise must be a nonnegative variance "
                      "per state dimension");
  }
  if (c.kind == EnvKind::PointMass && c.state_dim != 2 * c.pm_axes) {
    throw ConfigError("environment " + c.name +
                      ": point-mass state must hold positions then velocities");
  }
  if (c.init_kind == InitKind::FixedPoint) {
    if (c.init_point.size() != c.state_dim) {
      throw ConfigError("environment " + c.name + ": init point dimension");
    }
  } else if (c.init_box.dim() != c.state_dim) {
    throw ConfigError("environment " + c.name + ": init box dimension");
  }
  if (c.disturbance_box.dim() != disturbance_dim()) {
    throw ConfigError("environment " + c.name +
                      ": disturbance box dimension mismatch");
  }
}

int Environment::disturbance_dim() const {
  switch (config_.kind) {
    case EnvKind::Cartpole:
      return 2;
    case EnvKind::MountainCar:
      return 1;
    case EnvKind::PointMass:
      return config_.pm_axes;
  }
  return 0;
}

Eigen::VectorXd Environment::dynamics(const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& u,
                                      const Eigen::VectorXd& w) const {
  if (x.size() != config_.state_dim || u.size() != config_.action_dim ||
      w.size() != disturbance_dim()) {
    throw DomainError("environment dynamics: argument dimension mismatch");
  }
  const EnvironmentConfig& c = config_;
  Eigen::VectorXd next(c.state_dim);
  switch (c.kind) {
    case EnvKind::Cartpole: {
      const double angle = x(1), vel = x(2), angvel = x(3);
      const double force = c.cp_force * u(0);
      const double s = std::sin(angle), co = std::cos(angle);
      const double total_mass = c.cp_mass_cart + c.cp_mass_pole;
      const double pml = c.cp_mass_pole * c.cp_pole_length;
      const double temp = (force + pml * angvel * angvel * s) / total_mass;
      const double ang_acc =
          (c.cp_gravity * s - co * temp) /
          (c.cp_pole_length *
           (4.0 / 3.0 - c.cp_mass_pole * co * co / total_mass));
      const double lin_acc = temp - pml * ang_acc * co / total_mass;
      const double vel1 = vel + c.cp_tau * lin_acc + w(0);
      const double angvel1 = angvel + c.cp_tau * ang_acc + w(1);
      next << x(0) + c.cp_tau * vel1, angle + c.cp_tau * angvel1, vel1, angvel1;
      break;
    }
    case EnvKind::MountainCar: {
      const double vel1 = x(1) + c.mc_force * u(0) -
                          c.mc_gravity * std::cos(3.0 * x(0)) + w(0);
      next << x(0) + vel1, vel1;
      break;
    }
    case EnvKind::PointMass: {
      const int axes = c.pm_axes;
      for (int a = 0; a < axes; ++a) {
        const double vel1 = x(axes + a) + c.pm_accel_coef * u(a) + w(a);
        next(axes + a) = vel1;
        next(a) = x(a) + c.pm_pos_coef * vel1;
      }
      break;
    }
  }
  return next;
}

Eigen::VectorXd Environment::dynamics(const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& u) const {
  return dynamics(x, u, Eigen::VectorXd::Zero(disturbance_dim()));
}

Eigen::VectorXd Environment::draw_disturbance(RngStream& rng) const {
  const Box& box = config_.disturbance_box;
  Eigen::VectorXd w(box.dim());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    w(i) = rng.uniform(box.lo(i), box.hi(i));
  }
  return w;
}

Eigen::VectorXd Environment::observe(const Eigen::VectorXd& true_state,
                                     RngStream& rng) const {
  Eigen::VectorXd obs = true_state;
  for (Eigen::Index i = 0; i < obs.size(); ++i) {
    const double var = config_.obs_noise_var(i);
    if (var > 0.0) obs(i) += std::sqrt(var) * rng.gaussian();
  }
  return obs;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> Environment::reset(
    RngStream& rng) const {
  Eigen::VectorXd x;
  if (config_.init_kind == InitKind::FixedPoint) {
    x = config_.init_point;
  } else {
    x.resize(config_.state_dim);
    for (int i = 0; i < config_.state_dim; ++i) {
      x(i) = rng.uniform(config_.init_box.lo(i), config_.init_box.hi(i));
    }
  }
  Eigen::VectorXd obs = observe(x, rng);
  return {std::move(x), std::move(obs)};
}

Transition Environment::step(const Eigen::VectorXd& true_state,
                             const Eigen::VectorXd& action,
                             RngStream& rng) const {
  Transition t;
  t.state = true_state;
  t.action = config_.action_space.clamp(action);
  const Eigen::VectorXd w = draw_disturbance(rng);
  t.next_state = dynamics(true_state, t.action, w);
  t.observed = true_state;  // caller overwrites with its noisy view if needed
  t.next_observed = observe(t.next_state, rng);
  t.reward = reward(true_state, t.action, t.next_state);
  t.safe = is_safe(t.next_state);
  t.goal = goal_reached(t.next_state);
  t.terminal = (config_.terminate_on_goal && t.goal) ||
               (config_.terminate_on_violation && !t.safe);
  return t;
}

double Environment::reward(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                           const Eigen::VectorXd& next) const {
  const RewardSpec& r = config_.reward;
  switch (r.kind) {
    case RewardKind::SafePerStep:
      return is_safe(next) ? 1.0 : 0.0;
    case RewardKind::ThresholdBonus:
      return next(r.threshold_dim) >= r.threshold ? 1.0 : 0.0;
    case RewardKind::GoalWithActionCost:
      if (goal_reached(next)) return r.bonus;
      return -r.action_cost * u.norm();
    case RewardKind::GoalDense: {
      auto dist = [&](const Eigen::VectorXd& s) {
        double sq = 0.0;
        for (std::size_t i = 0; i < r.dense_dims.size(); ++i) {
          const double d = s(r.dense_dims[i]) - r.dense_target(i);
          sq += d * d;
        }
        return std::sqrt(sq);
      };
      double value = dist(x) - dist(next);
      if (goal_reached(next)) value += r.bonus;
      return value;
    }
  }
  return 0.0;
}

bool Environment::goal_reached(const Eigen::VectorXd& next) const {
  const RewardSpec& r = config_.reward;
  if (r.goal_dims.empty()) return false;
  for (std::size_t i = 0; i < r.goal_dims.size(); ++i) {
    if (!(next(r.goal_dims[i]) >= r.goal_min(i))) return false;
  }
  return true;
}

bool Environment::is_safe(const Eigen::VectorXd& x) const {
  return config_.safe_set.contains(x);
}

EpisodeResult run_episode(const Environment& env, const EpisodePolicy& policy,
                          RngStream& rng, int max_steps) {
  if (max_steps <= 0) max_steps = env.config().max_steps;
  EpisodeResult result;
  auto [state, observed] = env.reset(rng);
  for (int t = 0; t < max_steps; ++t) {
    auto [action, overridden] = policy(observed, t);
    Transition tr = env.step(state, action, rng);
    tr.observed = observed;
    result.total_return += tr.reward;
    result.overrides.push_back(overridden);
    if (!tr.safe && !result.violated) {
      result.violated = true;
      result.violation_step = t;
    }
    state = tr.next_state;
    observed = tr.next_observed;
    const bool done = tr.terminal;
    result.transitions.push_back(std::move(tr));
    if (done) break;
  }
  return result;
}

}  // namespace gpshield
