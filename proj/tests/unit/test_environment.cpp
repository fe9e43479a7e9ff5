#include "gpshield/environment.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "gpshield/errors.hpp"
#include "gpshield/rng.hpp"
#include "support/check.hpp"

namespace {

using gpshield::ConfigError;
using gpshield::DomainError;
using gpshield::Environment;
using gpshield::EnvironmentConfig;
using gpshield::EpisodeResult;
using gpshield::InitKind;
using gpshield::make_environment_config;
using gpshield::RngStream;
using gpshield::run_episode;
using gpshield::Transition;

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

void test_factory_names() {
  for (const char* name :
       {"cartpole", "cartpole2", "cartpole3", "mountain_car", "obstacle",
        "obstacle2", "obstacle3", "obstacle4", "road", "road_2d"}) {
    Environment env(make_environment_config(name));
    REQUIRE(env.name() == name, "factory name is preserved");
    REQUIRE(env.state_dim() > 0, "state dim set");
  }
  REQUIRE_THROWS_AS(make_environment_config("cartpole99"), ConfigError,
                    "unknown environment name");
  test_done("factory names");
}

void test_cartpole_dynamics() {
  Environment env(make_environment_config("cartpole"));
  const Eigen::VectorXd zero4 = Eigen::VectorXd::Zero(4);
  const Eigen::VectorXd u0 = Eigen::VectorXd::Zero(1);

  // upright equilibrium is an exact fixed point of the nominal dynamics
  Eigen::VectorXd next = env.dynamics(zero4, u0);
  REQUIRE(next.isZero(0.0), "origin is a fixed point");

  // frozen single-step values for the closed-form update
  next = env.dynamics(vec({0.0, 0.1, 0.0, 0.0}), u0);
  REQUIRE_NEAR(next(0), -2.8471326064199365e-05, 1e-12, "pos after one step");
  REQUIRE_NEAR(next(1), 0.10062951412192066, 1e-12, "angle after one step");
  REQUIRE_NEAR(next(2), -0.0014235663032099682, 1e-12, "vel after one step");
  REQUIRE_NEAR(next(3), 0.03147570609603252, 1e-12, "angvel after one step");

  next = env.dynamics(vec({0.3, -0.05, -0.1, 0.2}), vec({0.5}));
  REQUIRE_NEAR(next(0), 0.29996513889982296, 1e-12, "pos, forced step");
  REQUIRE_NEAR(next(1), -0.049237901997177334, 1e-12, "angle, forced step");
  REQUIRE_NEAR(next(2), -0.0017430550088502333, 1e-12, "vel, forced step");
  REQUIRE_NEAR(next(3), 0.03810490014113349, 1e-12, "angvel, forced step");

  // the disturbance enters the velocity update before positions integrate
  next = env.dynamics(zero4, u0, vec({0.01, -0.02}));
  REQUIRE_NEAR(next(2), 0.01, 1e-15, "w0 lands on velocity");
  REQUIRE_NEAR(next(3), -0.02, 1e-15, "w1 lands on angular velocity");
  REQUIRE_NEAR(next(0), 0.02 * 0.01, 1e-15, "position sees the new velocity");
  REQUIRE_NEAR(next(1), 0.02 * -0.02, 1e-15, "angle sees the new velocity");

  REQUIRE_THROWS_AS(env.dynamics(vec({0.0, 0.0}), u0), DomainError,
                    "state dimension checked");
  REQUIRE_THROWS_AS(env.dynamics(zero4, u0, vec({0.0})), DomainError,
                    "disturbance dimension checked");
  test_done("cartpole dynamics");
}

void test_mountain_car_dynamics() {
  Environment env(make_environment_config("mountain_car"));
  Eigen::VectorXd next =
      env.dynamics(Eigen::VectorXd::Zero(2), vec({1.0}), vec({0.0}));
  REQUIRE_NEAR(next(1), -0.00235, 1e-15, "velocity update at the origin");
  REQUIRE_NEAR(next(0), -0.00235, 1e-15, "position integrates new velocity");

  // cos(3 * -pi/6) = 0, so (-pi/6, 0) is a fixed point under u = 0
  const double pos_eq = -M_PI / 6.0;
  next = env.dynamics(vec({pos_eq, 0.0}), vec({0.0}), vec({0.0}));
  REQUIRE_NEAR(next(0), pos_eq, 1e-15, "hill-base position is stationary");
  REQUIRE_NEAR(next(1), 0.0, 1e-15, "hill-base velocity is stationary");

  // no state clipping: velocity may leave [-0.07, 0.07]
  next = env.dynamics(vec({0.0, 0.069}), vec({0.0}), vec({0.0}));
  REQUIRE_NEAR(next(1), 0.069 - 0.0025, 1e-15, "velocity not clamped");
  test_done("mountain car dynamics");
}

void test_point_mass_dynamics() {
  Environment obstacle(make_environment_config("obstacle"));
  Eigen::VectorXd next =
      obstacle.dynamics(Eigen::VectorXd::Zero(4), vec({1.0, -1.0}));
  REQUIRE_NEAR(next(2), 0.005, 1e-15, "obstacle x-velocity gain");
  REQUIRE_NEAR(next(3), -0.005, 1e-15, "obstacle y-velocity gain");
  REQUIRE_NEAR(next(0), 0.01, 1e-15, "obstacle position doubles velocity");
  REQUIRE_NEAR(next(1), -0.01, 1e-15, "obstacle position doubles velocity");

  Environment obstacle2(make_environment_config("obstacle2"));
  next = obstacle2.dynamics(Eigen::VectorXd::Zero(4), vec({1.0, 0.0}));
  REQUIRE_NEAR(next(2), 0.002, 1e-15, "obstacle2 velocity gain");
  REQUIRE_NEAR(next(0), 0.002, 1e-15, "obstacle2 unit position coefficient");

  Environment road(make_environment_config("road"));
  next = road.dynamics(Eigen::VectorXd::Zero(2), vec({2.0}));
  REQUIRE_NEAR(next(1), 0.002, 1e-15, "road velocity gain");
  REQUIRE_NEAR(next(0), 0.02, 1e-15, "road position coefficient 10");

  Environment road2(make_environment_config("road_2d"));
  next = road2.dynamics(Eigen::VectorXd::Zero(4), vec({2.0, 2.0}));
  REQUIRE_NEAR(next(2), 0.001, 1e-15, "road_2d velocity gain");
  REQUIRE_NEAR(next(0), 0.01, 1e-15, "road_2d position coefficient 10");
  test_done("point mass dynamics");
}

void test_resets() {
  RngStream rng = RngStream(2026).substream(0);

  Environment cartpole(make_environment_config("cartpole"));
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(4, 1e9);
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(4, -1e9);
  for (int i = 0; i < 10000; ++i) {
    auto [x, obs] = cartpole.reset(rng);
    lo = lo.cwiseMin(x);
    hi = hi.cwiseMax(x);
    REQUIRE((obs - x).cwiseAbs().maxCoeff() < 6e-3,
            "observation stays within a few noise sigmas of the true state");
  }
  for (int d = 0; d < 4; ++d) {
    REQUIRE(lo(d) >= -0.5 && lo(d) <= -0.45, "reset minimum near -0.5");
    REQUIRE(hi(d) <= 0.5 && hi(d) >= 0.45, "reset maximum near 0.5");
  }

  Environment car(make_environment_config("mountain_car"));
  double plo = 1e9, phi = -1e9;
  for (int i = 0; i < 10000; ++i) {
    auto [x, obs] = car.reset(rng);
    REQUIRE(x(1) == 0.0, "mountain car starts at rest");
    plo = std::min(plo, x(0));
    phi = std::max(phi, x(0));
  }
  REQUIRE(plo >= -0.6 && plo <= -0.58, "valley reset lower edge");
  REQUIRE(phi <= -0.4 && phi >= -0.42, "valley reset upper edge");

  Environment obstacle(make_environment_config("obstacle"));
  auto [x0, obs0] = obstacle.reset(rng);
  REQUIRE(x0.isZero(0.0), "obstacle starts exactly at the origin");
  test_done("reset distributions");
}

void test_disturbance_and_observation() {
  Environment env(make_environment_config("cartpole"));
  RngStream rng = RngStream(7).substream(1);
  Eigen::Vector2d wlo(1e9, 1e9), whi(-1e9, -1e9);
  for (int i = 0; i < 200000; ++i) {
    Eigen::VectorXd w = env.draw_disturbance(rng);
    REQUIRE(w.size() == 2, "cartpole disturbance is two dimensional");
    REQUIRE(w.cwiseAbs().maxCoeff() <= 0.001, "disturbance stays in its box");
    wlo = wlo.cwiseMin(Eigen::Vector2d(w));
    whi = whi.cwiseMax(Eigen::Vector2d(w));
  }
  REQUIRE(wlo.maxCoeff() < -0.00099 && whi.minCoeff() > 0.00099,
          "disturbance draws cover the box edges");

  // empirical observation noise standard deviation ~= 1e-3 per dimension
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(4);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(4);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    sq += env.observe(x, rng).cwiseAbs2();
  }
  for (int d = 0; d < 4; ++d) {
    REQUIRE_NEAR(std::sqrt(sq(d) / n), 1e-3, 5e-5,
                 "observation noise std matches the configured variance");
  }
  test_done("disturbance and observation noise");
}

void test_safety_and_goals() {
  Environment cartpole(make_environment_config("cartpole"));
  REQUIRE(cartpole.is_safe(vec({2.39, 0.0, 10.0, -3.0})),
          "velocities are unconstrained in the cartpole safe set");
  REQUIRE(!cartpole.is_safe(vec({2.5, 0.0, 0.0, 0.0})), "cart out of bounds");
  REQUIRE(!cartpole.is_safe(vec({0.0, 0.21, 0.0, 0.0})), "pole past the band");

  Environment obstacle(make_environment_config("obstacle"));
  REQUIRE(!obstacle.is_safe(vec({0.5, 2.5, 0.0, 0.0})),
          "point inside the obstacle footprint");
  REQUIRE(obstacle.is_safe(vec({1.5, 1.5, 0.0, 0.0})), "clear of the obstacle");
  REQUIRE(obstacle.goal_reached(vec({3.0, 0.0, 0.0, 0.0})),
          "goal needs x >= 3 and y >= 0");
  REQUIRE(!obstacle.goal_reached(vec({3.0, -0.1, 0.0, 0.0})),
          "negative y misses the goal");

  Environment obstacle3(make_environment_config("obstacle3"));
  REQUIRE(!obstacle3.is_safe(vec({0.5, 2.6, 0.0, 0.0})),
          "upper keep-out band is unsafe");
  REQUIRE(obstacle3.is_safe(vec({0.5, 2.4, 0.0, 0.0})), "below the band");
  REQUIRE(!obstacle3.is_safe(vec({1.7, 1.0, 0.0, 0.0})), "obstacle box");

  Environment obstacle4(make_environment_config("obstacle4"));
  REQUIRE(!obstacle4.is_safe(vec({1.7, 3.0, 0.0, 0.0})), "second box");
  REQUIRE(obstacle4.is_safe(vec({1.7, 2.2, 0.0, 0.0})),
          "corridor between the two boxes");

  Environment road(make_environment_config("road"));
  REQUIRE(road.is_safe(vec({100.0, 0.01, })), "any position at legal speed");
  REQUIRE(!road.is_safe(vec({0.0, 0.011})), "overspeed is unsafe");
  test_done("safety and goal predicates");
}

void test_rewards() {
  Environment car(make_environment_config("mountain_car"));
  REQUIRE_NEAR(car.reward(vec({0.0, 0.0}), vec({-0.5}), vec({0.1, 0.01})),
               -0.05, 1e-15, "action cost off the goal");
  REQUIRE_NEAR(car.reward(vec({0.4, 0.06}), vec({1.0}), vec({0.46, 0.06})),
               100.0, 1e-15, "goal bonus");

  Environment cartpole2(make_environment_config("cartpole2"));
  REQUIRE_NEAR(cartpole2.reward(vec({0.0, 0.0, 0.0, 0.0}), vec({0.0}),
                                vec({0.11, 0.0, 0.0, 0.0})),
               1.0, 1e-15, "threshold bonus on position");
  REQUIRE_NEAR(cartpole2.reward(vec({0.2, 0.0, 0.0, 0.0}), vec({0.0}),
                                vec({0.09, 0.0, 0.0, 0.0})),
               0.0, 1e-15, "below threshold pays nothing");

  // dense shaping is signed progress toward the target
  Environment road(make_environment_config("road"));
  REQUIRE_NEAR(road.reward(vec({0.0, 0.0}), vec({1.0}), vec({0.1, 0.005})),
               0.1, 1e-12, "moving toward the goal earns the distance gained");
  REQUIRE_NEAR(road.reward(vec({0.1, 0.0}), vec({-1.0}), vec({0.0, -0.005})),
               -0.1, 1e-12, "moving away loses the same amount");
  REQUIRE_NEAR(road.reward(vec({2.99, 0.0}), vec({1.0}), vec({3.01, 0.005})),
               20.0, 1e-12,
               "goal bonus; overshoot distance cancels the progress");

  Environment ob2(make_environment_config("obstacle2"));
  const double d0 = std::hypot(3.0, 3.0);
  const double d1 = std::hypot(2.9, 3.0);
  REQUIRE_NEAR(ob2.reward(vec({0.0, 0.0, 0.0, 0.0}), vec({1.0, 0.0}),
                          vec({0.1, 0.0, 0.002, 0.0})),
               d0 - d1, 1e-12, "planar shaping uses euclidean distance");
  test_done("reward functions");
}

void test_step_and_clipping() {
  Environment road(make_environment_config("road"));
  RngStream rng = RngStream(3).substream(0);
  Transition t = road.step(Eigen::VectorXd::Zero(2), vec({5.0}), rng);
  REQUIRE_NEAR(t.action(0), 2.0, 1e-15, "action clipped to the action space");
  REQUIRE_NEAR(t.next_state(1), 0.002, 1.1e-3,
               "velocity moves by the clipped action plus disturbance");
  REQUIRE(t.next_observed.size() == 2, "observation recorded");
  REQUIRE(!t.terminal, "no termination far from the goal");

  // the recorded reward/safety/goal flags are evaluated on true states
  Transition g = road.step(vec({2.999, 0.01}), vec({0.0}), rng);
  REQUIRE(g.goal && g.terminal, "road terminates on reaching the goal");
  REQUIRE(g.reward > 19.8 && g.reward < 20.1, "goal step pays the bonus");
  test_done("step and clipping");
}

void test_full_throttle_road_episode() {
  // zero out stochasticity to get a closed-form episode
  EnvironmentConfig cfg = make_environment_config("road");
  cfg.disturbance_box = gpshield::Box{vec({0.0}), vec({0.0})};
  cfg.obs_noise_var = Eigen::VectorXd::Zero(2);
  Environment env(cfg);
  RngStream rng = RngStream(5).substream(0);

  auto policy = [](const Eigen::VectorXd&, int) {
    return std::make_pair(vec({2.0}), false);
  };
  EpisodeResult ep = run_episode(env, policy, rng);

  // velocity 0.002k, position 0.02*k(k+1)/2 crosses 3 at k = 17
  REQUIRE(ep.transitions.size() == 17, "terminates on the goal step");
  REQUIRE(ep.transitions.back().goal && ep.transitions.back().terminal,
          "last step reaches the goal");
  REQUIRE_NEAR(ep.total_return, 20.0 + 3.0 - 0.06, 1e-9,
               "bonus plus telescoped shaping");
  REQUIRE(ep.violated && ep.violation_step == 5,
          "speed limit first broken at velocity 0.012");
  test_done("full throttle road episode");
}

void test_obstacle_goal_repeats() {
  EnvironmentConfig cfg = make_environment_config("obstacle");
  cfg.disturbance_box =
      gpshield::Box{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)};
  Environment env(cfg);
  RngStream rng = RngStream(6).substream(0);
  auto policy = [](const Eigen::VectorXd&, int) {
    return std::make_pair(vec({2.0, 0.0}), false);
  };
  EpisodeResult ep = run_episode(env, policy, rng);
  REQUIRE(ep.transitions.size() == 200,
          "no goal termination in the obstacle task by default");
  int goal_steps = 0;
  for (const Transition& t : ep.transitions) {
    if (t.goal) {
      ++goal_steps;
      // shaping subtracts the overshoot, at most ~4 per step here
      REQUIRE(t.reward > 25.0, "every goal step pays the bonus again");
    }
  }
  REQUIRE(goal_steps > 100, "goal condition holds from step 17 on");
  test_done("obstacle goal repeats");
}

void test_cartpole_episodes() {
  // exact equilibrium with all stochasticity removed holds for 200 steps
  EnvironmentConfig cfg = make_environment_config("cartpole");
  cfg.init_kind = InitKind::FixedPoint;
  cfg.init_point = Eigen::VectorXd::Zero(4);
  cfg.disturbance_box =
      gpshield::Box{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)};
  cfg.obs_noise_var = Eigen::VectorXd::Zero(4);
  Environment quiet(cfg);
  RngStream rng = RngStream(8).substream(0);
  auto zero_policy = [](const Eigen::VectorXd&, int) {
    return std::make_pair(vec({0.0}), false);
  };
  EpisodeResult ep = run_episode(quiet, zero_policy, rng);
  REQUIRE(ep.transitions.size() == 200 && !ep.violated,
          "undisturbed equilibrium is held");
  REQUIRE_NEAR(ep.total_return, 200.0, 0.0, "every step pays one");

  // a linear balance law holds the noisy system from a small start box
  EnvironmentConfig near_cfg = make_environment_config("cartpole");
  near_cfg.init_box = gpshield::Box{Eigen::VectorXd::Constant(4, -0.05),
                                    Eigen::VectorXd::Constant(4, 0.05)};
  Environment noisy(near_cfg);
  const Eigen::Vector4d gain(-0.7488, -7.2758, -1.2280, -1.7787);
  auto balance = [&gain](const Eigen::VectorXd& obs, int) {
    return std::make_pair(vec({-gain.dot(obs)}), false);
  };
  for (int trial = 0; trial < 5; ++trial) {
    RngStream trng = RngStream(9).substream(static_cast<std::uint64_t>(trial));
    EpisodeResult run = run_episode(noisy, balance, trng);
    REQUIRE(run.transitions.size() == 200 && !run.violated,
            "balance law keeps the pole up for a full episode");
    REQUIRE_NEAR(run.total_return, 200.0, 0.0, "full safe return");
  }

  // an aggressive push destabilizes and truncates the episode
  auto shove = [](const Eigen::VectorXd&, int) {
    return std::make_pair(vec({1.0}), false);
  };
  RngStream srng = RngStream(10).substream(0);
  EpisodeResult crash = run_episode(noisy, shove, srng);
  REQUIRE(crash.violated && crash.transitions.size() < 200,
          "constant push leaves the safe set early");
  const Transition& last = crash.transitions.back();
  REQUIRE(!last.safe && last.terminal, "episode ends on the violation");
  REQUIRE_NEAR(last.reward, 0.0, 0.0, "the violating step pays nothing");
  test_done("cartpole episodes");
}

void test_episode_bookkeeping() {
  Environment env(make_environment_config("road"));
  RngStream rng = RngStream(11).substream(0);
  auto policy = [](const Eigen::VectorXd&, int t) {
    return std::make_pair(vec({0.1}), t % 2 == 0);
  };
  EpisodeResult ep = run_episode(env, policy, rng, 6);
  REQUIRE(ep.transitions.size() == 6, "max step override respected");
  REQUIRE(ep.overrides.size() == 6, "one override flag per step");
  for (int t = 0; t < 6; ++t) {
    REQUIRE(ep.overrides[t] == (t % 2 == 0), "override flags pass through");
  }
  double sum = 0.0;
  for (const Transition& t : ep.transitions) sum += t.reward;
  REQUIRE_NEAR(sum, ep.total_return, 1e-15, "return matches summed rewards");
  test_done("episode bookkeeping");
}

void test_determinism() {
  Environment env(make_environment_config("cartpole"));
  auto policy = [](const Eigen::VectorXd& obs, int) {
    return std::make_pair(vec({obs(1) > 0 ? 0.3 : -0.3}), false);
  };
  RngStream a(42), b(42), c(43);
  EpisodeResult ra = run_episode(env, policy, a);
  EpisodeResult rb = run_episode(env, policy, b);
  EpisodeResult rc = run_episode(env, policy, c);
  REQUIRE(ra.transitions.size() == rb.transitions.size(),
          "same seed gives the same length");
  for (std::size_t i = 0; i < ra.transitions.size(); ++i) {
    REQUIRE(ra.transitions[i].next_state == rb.transitions[i].next_state,
            "same seed reproduces states bitwise");
    REQUIRE(ra.transitions[i].next_observed == rb.transitions[i].next_observed,
            "same seed reproduces observations bitwise");
  }
  bool differs = ra.transitions.size() != rc.transitions.size();
  for (std::size_t i = 0; !differs && i < ra.transitions.size(); ++i) {
    differs = ra.transitions[i].next_state != rc.transitions[i].next_state;
  }
  REQUIRE(differs, "different seeds diverge");
  test_done("episode determinism");
}

void test_config_validation() {
  EnvironmentConfig cfg = make_environment_config("road");
  cfg.obs_noise_var = Eigen::VectorXd::Zero(3);
  REQUIRE_THROWS_AS(Environment{cfg}, ConfigError, "noise dimension checked");

  EnvironmentConfig cfg2 = make_environment_config("road");
  cfg2.init_point = Eigen::VectorXd::Zero(5);
  REQUIRE_THROWS_AS(Environment{cfg2}, ConfigError, "init dimension checked");
  test_done("config validation");
}

}  // namespace

int main() {
  test_factory_names();
  test_cartpole_dynamics();
  test_mountain_car_dynamics();
  test_point_mass_dynamics();
  test_resets();
  test_disturbance_and_observation();
  test_safety_and_goals();
  test_rewards();
  test_step_and_clipping();
  test_full_throttle_road_episode();
  test_obstacle_goal_repeats();
  test_cartpole_episodes();
  test_episode_bookkeeping();
  test_determinism();
  test_config_validation();
  std::printf("all environment tests passed\n");
  return 0;
}
