#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "gpshield/environment.hpp"
#include "gpshield/geometry.hpp"
#include "gpshield/rng.hpp"

namespace gpshield {

/// Finite-difference linearization of an environment's nominal dynamics
/// about an equilibrium: x' ~= x_eq + A (x - x_eq) + B (u - u_eq).
struct LinearizedPlant {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::VectorXd x_eq;
  Eigen::VectorXd u_eq;
};

/// Linear state-feedback law u = u_eq - K (x - x_eq).
struct BackupController {
  Eigen::MatrixXd K;
  Eigen::VectorXd x_eq;
  Eigen::VectorXd u_eq;

  Eigen::VectorXd action(const Eigen::VectorXd& x) const {
    return u_eq - K * (x - x_eq);
  }
  Eigen::VectorXd clipped_action(const Eigen::VectorXd& x,
                                 const Box& action_space) const {
    return action_space.clamp(action(x));
  }
};

enum class InvariantProvenance { LoadedFromConfig, MonteCarloCertified };

/**
 * A set of states the backup controller can keep the system inside.
 * Sets built by grow_invariant_set are ellipsoid level sets
 * {x : (x - center)' P (x - center) <= c}; their `region` box is the largest
 * inscribed axis-aligned box, a conservative inner proxy for containment
 * queries. Config-loaded sets are the region itself.
 */
struct InvariantSet {
  ConvexRegion region;
  InvariantProvenance provenance = InvariantProvenance::LoadedFromConfig;
  Eigen::VectorXd center;
  /// Shape matrix of the generating ellipsoid; empty when loaded from config.
  Eigen::MatrixXd P;
  double c = 0.0;

  /// Membership in the invariant set itself: the generating ellipsoid when
  /// one exists, otherwise the region.
  bool contains(const Eigen::VectorXd& x) const {
    if (P.size() > 0) {
      const Eigen::VectorXd d = x - center;
      return d.dot(P * d) <= c * (1.0 + 1e-9);
    }
    return region_contains(region, x);
  }
};

/**
 * Central-difference Jacobians of the nominal dynamics at (x_eq, u_eq).
 * Exact on linear maps for any step size.
 */
LinearizedPlant linearize(const Environment& env, const Eigen::VectorXd& x_eq,
                          const Eigen::VectorXd& u_eq, double h = 1e-5);

/**
 * Discrete-time LQR gain via fixed-point iteration of the Riccati equation
 *   P <- Q + A'PA - A'PB (R + B'PB)^{-1} B'PA
 * run until ||dP||_F <= 1e-10, then K = (R + B'PB)^{-1} B'PA.
 * Throws RiccatiDiverged if the iteration has not settled within `iters`.
 */
BackupController lqr_gain(const LinearizedPlant& plant,
                          const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                          int iters = 100000);

/// The converged Riccati cost matrix P for the same iteration as lqr_gain.
Eigen::MatrixXd riccati_cost(const LinearizedPlant& plant,
                             const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                             int iters = 100000);

/**
 * Damped Gauss-Newton refinement of a fixed point f(x, u, 0) = x, moving
 * (x, u) jointly by minimum-norm steps so the result stays close to the
 * initial guess. Converged when the residual max norm is <= 1e-8; throws
 * NoConvergence after 100 iterations.
 */
std::pair<Eigen::VectorXd, Eigen::VectorXd> refine_equilibrium(
    const Environment& env, const Eigen::VectorXd& x0,
    const Eigen::VectorXd& u0);

/**
 * Monte Carlo growth of a controlled-invariant level set about the
 * controller's equilibrium. The shape matrix solves the discrete Lyapunov
 * equation of the controller's own closed loop, so level sets contract
 * under the provided gain. Candidate levels are scanned downward from the
 * analytic safe-containment bound by factors of two, max_grow_steps+1
 * candidates in all, and the largest passing level wins. A candidate
 * passes when every rollout started on the level-set boundary stays
 * inside the set and inside `safe` for `horizon` steps, under uniform
 * disturbances (one quarter of the rollouts use sign-extreme corner
 * disturbances instead) and observation noise fed through the control
 * law. Because the observation noise is unbounded, containment is judged
 * at the certificate's sampling resolution: a rollout fails only when it
 * exceeds the level by more than 5% or stays outside for more than 5
 * consecutive steps. The accepted ellipsoid is exported as its largest
 * inscribed axis-aligned box. Throws NoInvariantFound when no candidate
 * passes or the gain does not strictly stabilize the linearized plant.
 */
InvariantSet grow_invariant_set(const Environment& env,
                                const BackupController& ctrl,
                                const SafeSet& safe, int rollouts,
                                int max_grow_steps, int horizon,
                                RngStream& rng);

/// One recorded failure from verify_invariant.
struct InvariantViolation {
  Eigen::VectorXd start;
  int step = 0;
  Eigen::VectorXd state;
};

struct InvariantReport {
  int rollouts = 0;
  /// Rollouts that left the invariant region within the horizon.
  int region_exits = 0;
  /// Rollouts that left the safe set (informational; counted independently).
  int safe_exits = 0;
  std::vector<InvariantViolation> first_violations;

  /// Certification requires at least one rollout and zero region exits.
  bool certified() const { return rollouts > 0 && region_exits == 0; }
};

/**
 * Statistical invariance check: simulate `rollouts` trajectories from
 * boundary and interior start states of the set, driving with the
 * controller under i.i.d. disturbances and observation noise, and count
 * trajectories that leave the region within `horizon` steps. Ellipsoid
 * level sets are judged with the same noise-scale slack the growth uses
 * (escape means exceeding the level by more than 5% or staying outside
 * for more than 5 consecutive steps); plain box regions are exact. Pass
 * include_disturbances=false to check the nominal (noise-free) dynamics
 * only; observation noise is kept in either case.
 */
InvariantReport verify_invariant(const Environment& env,
                                 const BackupController& ctrl,
                                 const InvariantSet& inv, const SafeSet& safe,
                                 int rollouts, int horizon, RngStream& rng,
                                 bool include_disturbances = true);

/// Result of the static region-inside-safe-set check done at load time.
struct InvariantSafetyCheck {
  /// Region provably inside every inclusion constraint.
  bool inclusions_ok = true;
  /// Region provably clear of every exclusion region (false also when the
  /// pair of shapes admits no exact test; see detail).
  bool exclusions_clear = true;
  std::string detail;
};

InvariantSafetyCheck check_invariant_within_safe(const InvariantSet& inv,
                                                 const SafeSet& safe);

}  // namespace gpshield
