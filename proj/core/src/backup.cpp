#include "gpshield/backup.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gpshield/errors.hpp"

namespace gpshield {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd unit_sphere(int n, RngStream& rng) {
  Eigen::VectorXd s(n);
  double norm = 0.0;
  do {
    for (int i = 0; i < n; ++i) s(i) = rng.gaussian();
    norm = s.norm();
  } while (norm < 1e-12);
  return s / norm;
}

/// Solve P - A^T P A = I for the closed-loop matrix A. Level sets of
/// x^T P x then shrink strictly along the undisturbed closed loop.
Eigen::MatrixXd closed_loop_lyapunov(const Eigen::MatrixXd& A_cl) {
  const Eigen::Index n = A_cl.rows();
  const double rho = A_cl.eigenvalues().cwiseAbs().maxCoeff();
  if (!(rho < 1.0)) {
    throw NoInvariantFound(
        "backup law does not strictly stabilize the linearized plant");
  }
  // vec(P) - kron(A^T, A^T) vec(P) = vec(I)
  Eigen::MatrixXd lhs =
      Eigen::MatrixXd::Identity(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      lhs.block(i * n, j * n, n, n) -= A_cl(j, i) * A_cl.transpose();
    }
  }
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd vec_p =
      lhs.partialPivLu().solve(Eigen::Map<Eigen::VectorXd>(rhs.data(), n * n));
  Eigen::MatrixXd P = Eigen::Map<const Eigen::MatrixXd>(vec_p.data(), n, n);
  P = 0.5 * (P + P.transpose()).eval();
  if (!P.allFinite()) {
    throw NoInvariantFound("closed-loop Lyapunov solve produced non-finite values");
  }
  return P;
}

/// Factor M with E(P, c) = {x_eq + sqrt(c) M s : |s| <= 1}, i.e. M = P^{-1/2}.
Eigen::MatrixXd inverse_sqrt(const Eigen::MatrixXd& P) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0) {
    throw NotPositiveDefinite("level-set shape matrix is not positive definite");
  }
  return es.eigenvectors() *
         es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

/// Largest level c with the ellipsoid support inside every inclusion
/// constraint of the safe set. Infinite box sides impose nothing.
double max_level_inside_inclusions(const Eigen::VectorXd& center,
                                   const Eigen::MatrixXd& P_inv,
                                   const SafeSet& safe) {
  double c_max = kInf;
  auto clamp_side = [&](double margin, double spread) {
    if (!std::isfinite(margin)) return;
    if (margin < 0.0) {
      c_max = -1.0;  // center already outside
      return;
    }
    if (spread <= 0.0) return;
    c_max = std::min(c_max, margin * margin / spread);
  };
  for (const ConvexRegion& region : safe.inclusions) {
    if (const Box* box = std::get_if<Box>(&region)) {
      for (Eigen::Index i = 0; i < box->dim(); ++i) {
        clamp_side(box->hi(i) - center(i), P_inv(i, i));
        clamp_side(center(i) - box->lo(i), P_inv(i, i));
      }
    } else {
      const ConvexPolytope& poly = std::get<ConvexPolytope>(region);
      for (Eigen::Index r = 0; r < poly.A.rows(); ++r) {
        const Eigen::VectorXd a = poly.A.row(r).transpose();
        clamp_side(poly.b(r) - a.dot(center), a.dot(P_inv * a));
      }
    }
  }
  return c_max;
}

bool level_set_clear_of_exclusions(const Eigen::VectorXd& center,
                                   const Eigen::MatrixXd& P_inv, double c,
                                   const SafeSet& safe) {
  if (safe.exclusions.empty()) return true;
  const Ellipsoid ell(center, P_inv, std::sqrt(c));
  for (const ConvexRegion& region : safe.exclusions) {
    if (!ellipsoid_disjoint_from(ell, region)) return false;
  }
  return true;
}

/// Simulate the closed loop from one start; true when every visited state
/// Containment is judged at the resolution a sampled certificate can
/// resolve: the observation noise is unbounded, so about one boundary
/// start in a hundred gets kicked marginally outside an exact level set
/// for a step before the contraction pulls it back. A rollout fails the
/// level check only when it exceeds the level by more than kLevelSlack or
/// stays outside for more than kExcursionSteps consecutive steps; grazing
/// within those limits is noise-scale jitter, not an escape.
constexpr double kLevelSlack = 0.05;
constexpr int kExcursionSteps = 5;

/// Tracks level-set membership of a trajectory under the slack rules.
class LevelTracker {
 public:
  LevelTracker(const Eigen::VectorXd& center, const Eigen::MatrixXd& P,
               double c)
      : center_(center), P_(P), c_(c) {}

  /// Feed the next state; returns true once the trajectory has left the
  /// level set for good (hard exceedance or an overlong excursion).
  bool escaped(const Eigen::VectorXd& x) {
    const Eigen::VectorXd d = x - center_;
    const double quad = d.dot(P_ * d);
    if (quad > c_ * (1.0 + kLevelSlack)) return true;
    if (quad > c_ * (1.0 + 1e-9)) {
      ++outside_run_;
      return outside_run_ > kExcursionSteps;
    }
    outside_run_ = 0;
    return false;
  }

 private:
  const Eigen::VectorXd& center_;
  const Eigen::MatrixXd& P_;
  double c_;
  int outside_run_ = 0;
};

/// stays within the level set and the safe set for the whole horizon.
bool rollout_stays_inside(const Environment& env, const BackupController& ctrl,
                          const Eigen::VectorXd& start,
                          const Eigen::MatrixXd& P, double c,
                          const SafeSet& safe, int horizon, bool corner_noise,
                          RngStream& rng) {
  const Box& wbox = env.config().disturbance_box;
  LevelTracker level(ctrl.x_eq, P, c);
  Eigen::VectorXd x = start;
  for (int t = 0; t < horizon; ++t) {
    const Eigen::VectorXd obs = env.observe(x, rng);
    const Eigen::VectorXd u =
        ctrl.clipped_action(obs, env.config().action_space);
    Eigen::VectorXd w(wbox.dim());
    if (corner_noise) {
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        w(i) = rng.sign() > 0 ? wbox.hi(i) : wbox.lo(i);
      }
    } else {
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        w(i) = rng.uniform(wbox.lo(i), wbox.hi(i));
      }
    }
    x = env.dynamics(x, u, w);
    if (level.escaped(x)) return false;
    if (!safe.contains(x)) return false;
  }
  return true;
}

/// Largest axis-aligned box x_eq +- t inscribed in E(P, c), found by
/// scaling the ellipsoid's bounding-box half-widths and checking all
/// corners of the candidate box.
Box inscribed_box(const Eigen::VectorXd& center, const Eigen::MatrixXd& P,
                  const Eigen::MatrixXd& P_inv, double c) {
  const int n = static_cast<int>(center.size());
  const Eigen::VectorXd h = (c * P_inv.diagonal()).cwiseSqrt();
  auto corners_inside = [&](double tau) {
    const Eigen::VectorXd t = tau * h;
    for (int mask = 0; mask < (1 << n); ++mask) {
      Eigen::VectorXd v(n);
      for (int i = 0; i < n; ++i) v(i) = (mask >> i & 1) ? t(i) : -t(i);
      if (v.dot(P * v) > c * (1.0 + 1e-12)) return false;
    }
    return true;
  };
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (corners_inside(mid) ? lo : hi) = mid;
  }
  const Eigen::VectorXd t = lo * h;
  return Box{center - t, center + t};
}

/// Draw a start state for verification: within the region, alternating
/// between boundary-heavy and interior samples where the shape allows it.
Eigen::VectorXd sample_invariant_start(const InvariantSet& inv,
                                       const Box& state_space, bool boundary,
                                       RngStream& rng) {
  const int n = static_cast<int>(state_space.dim());
  if (inv.P.size() > 0) {
    const Eigen::MatrixXd M = inverse_sqrt(inv.P);
    const Eigen::VectorXd s = unit_sphere(n, rng);
    const double radius =
        boundary ? 1.0 : std::pow(rng.uniform(), 1.0 / static_cast<double>(n));
    return inv.center + std::sqrt(inv.c) * radius * (M * s);
  }
  if (const Box* box = std::get_if<Box>(&inv.region)) {
    Eigen::VectorXd x(n);
    std::vector<int> finite_axes;
    for (int i = 0; i < n; ++i) {
      const double lo = std::isfinite(box->lo(i))
                            ? box->lo(i)
                            : std::max(state_space.lo(i), -1e6);
      const double hi = std::isfinite(box->hi(i))
                            ? box->hi(i)
                            : std::min(state_space.hi(i), 1e6);
      x(i) = rng.uniform(lo, hi);
      if (std::isfinite(box->lo(i)) || std::isfinite(box->hi(i))) {
        finite_axes.push_back(i);
      }
    }
    if (boundary && !finite_axes.empty()) {
      const int axis = finite_axes[static_cast<std::size_t>(
          rng.uniform_index(finite_axes.size()))];
      const bool upper = std::isfinite(box->hi(axis)) &&
                         (!std::isfinite(box->lo(axis)) || rng.sign() > 0);
      x(axis) = upper ? box->hi(axis) : box->lo(axis);
    }
    return x;
  }
  // polytope region: rejection sampling from the state box
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) {
      x(i) = rng.uniform(state_space.lo(i), state_space.hi(i));
    }
    if (inv.contains(x)) return x;
  }
  throw NoConvergence(
      "could not sample a start state inside the invariant region");
}

}  // namespace

LinearizedPlant linearize(const Environment& env, const Eigen::VectorXd& x_eq,
                          const Eigen::VectorXd& u_eq, double h) {
  const int n = env.state_dim();
  const int m = env.action_dim();
  if (x_eq.size() != n || u_eq.size() != m) {
    throw DomainError("linearize: equilibrium dimension mismatch");
  }
  LinearizedPlant plant;
  plant.A.resize(n, n);
  plant.B.resize(n, m);
  plant.x_eq = x_eq;
  plant.u_eq = u_eq;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd xp = x_eq, xm = x_eq;
    xp(i) += h;
    xm(i) -= h;
    plant.A.col(i) = (env.dynamics(xp, u_eq) - env.dynamics(xm, u_eq)) / (2 * h);
  }
  for (int j = 0; j < m; ++j) {
    Eigen::VectorXd up = u_eq, um = u_eq;
    up(j) += h;
    um(j) -= h;
    plant.B.col(j) = (env.dynamics(x_eq, up) - env.dynamics(x_eq, um)) / (2 * h);
  }
  return plant;
}

Eigen::MatrixXd riccati_cost(const LinearizedPlant& plant,
                             const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                             int iters) {
  const Eigen::MatrixXd& A = plant.A;
  const Eigen::MatrixXd& B = plant.B;
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(B.cols());
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n ||
      R.rows() != m || R.cols() != m) {
    throw DomainError("riccati: weight or plant dimension mismatch");
  }
  Eigen::MatrixXd P = Q;
  for (int it = 0; it < iters; ++it) {
    const Eigen::MatrixXd BtP = B.transpose() * P;
    const Eigen::MatrixXd gain =
        (R + BtP * B).ldlt().solve(BtP * A);  // (R + B'PB)^{-1} B'PA
    const Eigen::MatrixXd P_next =
        Q + A.transpose() * P * (A - B * gain);
    const double delta = (P_next - P).norm();
    P = 0.5 * (P_next + P_next.transpose());
    if (!P.allFinite()) {
      throw RiccatiDiverged("Riccati iteration produced non-finite values");
    }
    if (delta <= 1e-10) return P;
  }
  throw RiccatiDiverged("Riccati iteration did not converge");
}

BackupController lqr_gain(const LinearizedPlant& plant,
                          const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                          int iters) {
  const Eigen::MatrixXd P = riccati_cost(plant, Q, R, iters);
  const Eigen::MatrixXd BtP = plant.B.transpose() * P;
  BackupController ctrl;
  ctrl.K = (R + BtP * plant.B).ldlt().solve(BtP * plant.A);
  ctrl.x_eq = plant.x_eq;
  ctrl.u_eq = plant.u_eq;
  return ctrl;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> refine_equilibrium(
    const Environment& env, const Eigen::VectorXd& x0,
    const Eigen::VectorXd& u0) {
  const int n = env.state_dim();
  const int m = env.action_dim();
  if (x0.size() != n || u0.size() != m) {
    throw DomainError("refine_equilibrium: guess dimension mismatch");
  }
  const double h = 1e-5;
  const double tol = 1e-8;
  Eigen::VectorXd x = x0, u = u0;
  Eigen::VectorXd r = env.dynamics(x, u) - x;
  double lambda = 1e-8;
  for (int it = 0; it < 100; ++it) {
    if (r.lpNorm<Eigen::Infinity>() <= tol) return {x, u};
    const LinearizedPlant plant = linearize(env, x, u, h);
    Eigen::MatrixXd J(n, n + m);
    J.leftCols(n) = plant.A - Eigen::MatrixXd::Identity(n, n);
    J.rightCols(m) = plant.B;
    // minimum-norm Gauss-Newton step with Levenberg damping
    bool improved = false;
    for (int attempt = 0; attempt < 20 && !improved; ++attempt) {
      const Eigen::MatrixXd JJt =
          J * J.transpose() + lambda * Eigen::MatrixXd::Identity(n, n);
      const Eigen::VectorXd delta = -J.transpose() * JJt.ldlt().solve(r);
      const Eigen::VectorXd x_try = x + delta.head(n);
      const Eigen::VectorXd u_try = u + delta.tail(m);
      const Eigen::VectorXd r_try = env.dynamics(x_try, u_try) - x_try;
      if (r_try.norm() < r.norm()) {
        x = x_try;
        u = u_try;
        r = r_try;
        lambda = std::max(lambda * 0.25, 1e-12);
        improved = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (!improved) break;
  }
  if (r.lpNorm<Eigen::Infinity>() <= tol) return {x, u};
  throw NoConvergence("equilibrium refinement did not reach tolerance");
}

InvariantSet grow_invariant_set(const Environment& env,
                                const BackupController& ctrl,
                                const SafeSet& safe, int rollouts,
                                int max_grow_steps, int horizon,
                                RngStream& rng) {
  if (rollouts <= 0 || horizon <= 0 || max_grow_steps < 0) {
    throw DomainError("grow_invariant_set: counts must be positive");
  }
  const int n = env.state_dim();
  const LinearizedPlant plant = linearize(env, ctrl.x_eq, ctrl.u_eq);
  // shape matrix: Lyapunov certificate for the controller's own closed loop,
  // so level sets contract under the provided gain, not just the LQR one
  const Eigen::MatrixXd P =
      closed_loop_lyapunov(plant.A - plant.B * ctrl.K);
  const Eigen::MatrixXd P_inv = P.llt().solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd M = inverse_sqrt(P);

  const double c_safe = max_level_inside_inclusions(ctrl.x_eq, P_inv, safe);
  if (!(c_safe > 0.0)) {
    throw NoInvariantFound("equilibrium is not strictly inside the safe set");
  }
  const double c_cap = std::isfinite(c_safe) ? c_safe : 1.0;

  // scan levels from the analytic containment bound downward by factors of
  // two and keep the largest one whose rollouts all stay inside; the
  // smallest levels can legitimately fail because the disturbance has a
  // fixed size while the set shrinks
  double accepted = -1.0;
  for (int k = 0; k <= max_grow_steps && accepted < 0.0; ++k) {
    const double c = c_cap * std::pow(2.0, static_cast<double>(-k));
    if (!level_set_clear_of_exclusions(ctrl.x_eq, P_inv, c, safe)) continue;
    bool all_ok = true;
    RngStream round_rng = rng.substream(static_cast<std::uint64_t>(k));
    const int corner_count = rollouts / 4;
    for (int i = 0; i < rollouts && all_ok; ++i) {
      RngStream roll_rng = round_rng.substream(static_cast<std::uint64_t>(i));
      const Eigen::VectorXd start =
          ctrl.x_eq + std::sqrt(c) * (M * unit_sphere(n, roll_rng));
      all_ok = rollout_stays_inside(env, ctrl, start, P, c, safe, horizon,
                                    i < corner_count, roll_rng);
    }
    if (all_ok) accepted = c;
  }
  if (accepted < 0.0) {
    throw NoInvariantFound("no level set passed the rollout check");
  }

  InvariantSet inv;
  inv.region = inscribed_box(ctrl.x_eq, P, P_inv, accepted);
  inv.provenance = InvariantProvenance::MonteCarloCertified;
  inv.center = ctrl.x_eq;
  inv.P = P;
  inv.c = accepted;
  return inv;
}

InvariantReport verify_invariant(const Environment& env,
                                 const BackupController& ctrl,
                                 const InvariantSet& inv, const SafeSet& safe,
                                 int rollouts, int horizon, RngStream& rng,
                                 bool include_disturbances) {
  InvariantReport report;
  if (rollouts <= 0) return report;
  const Box& wbox = env.config().disturbance_box;
  const bool has_level = inv.P.size() > 0;
  for (int i = 0; i < rollouts; ++i) {
    RngStream roll_rng = rng.substream(static_cast<std::uint64_t>(i));
    const Eigen::VectorXd start = sample_invariant_start(
        inv, env.config().state_space, i % 2 == 0, roll_rng);
    ++report.rollouts;
    Eigen::VectorXd x = start;
    LevelTracker level(inv.center, inv.P, inv.c);
    bool exited = false;
    bool left_safe = false;
    for (int t = 0; t < horizon && !exited; ++t) {
      const Eigen::VectorXd obs = env.observe(x, roll_rng);
      const Eigen::VectorXd u =
          ctrl.clipped_action(obs, env.config().action_space);
      Eigen::VectorXd w = Eigen::VectorXd::Zero(wbox.dim());
      if (include_disturbances) {
        for (Eigen::Index d = 0; d < w.size(); ++d) {
          w(d) = roll_rng.uniform(wbox.lo(d), wbox.hi(d));
        }
      }
      x = env.dynamics(x, u, w);
      if (!safe.contains(x)) left_safe = true;
      // level sets are judged with the noise-scale slack of the sampled
      // certificate; plain box regions are exact
      exited = has_level ? level.escaped(x)
                         : !region_contains(inv.region, x);
      if (exited && report.first_violations.size() < 10) {
        report.first_violations.push_back({start, t + 1, x});
      }
    }
    if (exited) ++report.region_exits;
    if (left_safe) ++report.safe_exits;
  }
  return report;
}

InvariantSafetyCheck check_invariant_within_safe(const InvariantSet& inv,
                                                 const SafeSet& safe) {
  InvariantSafetyCheck result;
  const Box* box = std::get_if<Box>(&inv.region);

  auto box_support = [&](const Eigen::VectorXd& a) {
    // sup over the region box of a'x; 0 coefficients ignore infinite sides
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      if (a(i) == 0.0) continue;
      s += a(i) * (a(i) > 0.0 ? box->hi(i) : box->lo(i));
    }
    return s;
  };

  for (const ConvexRegion& incl : safe.inclusions) {
    if (box != nullptr) {
      if (const Box* ib = std::get_if<Box>(&incl)) {
        for (Eigen::Index i = 0; i < ib->dim(); ++i) {
          if (box->lo(i) < ib->lo(i) || box->hi(i) > ib->hi(i)) {
            result.inclusions_ok = false;
            result.detail += "region leaves an inclusion box; ";
            break;
          }
        }
      } else {
        const ConvexPolytope& poly = std::get<ConvexPolytope>(incl);
        for (Eigen::Index r = 0; r < poly.A.rows(); ++r) {
          if (box_support(poly.A.row(r).transpose()) > poly.b(r) + 1e-12) {
            result.inclusions_ok = false;
            result.detail += "region leaves an inclusion halfspace; ";
            break;
          }
        }
      }
    } else {
      result.inclusions_ok = false;
      result.detail += "polytope region containment not checked exactly; ";
    }
  }

  for (const ConvexRegion& excl : safe.exclusions) {
    const Box* eb = std::get_if<Box>(&excl);
    if (box != nullptr && eb != nullptr) {
      bool disjoint = false;
      for (Eigen::Index i = 0; i < eb->dim() && !disjoint; ++i) {
        disjoint = box->hi(i) < eb->lo(i) || box->lo(i) > eb->hi(i);
      }
      if (!disjoint) {
        result.exclusions_clear = false;
        result.detail += "region overlaps an exclusion box; ";
      }
    } else {
      result.exclusions_clear = false;
      result.detail += "exclusion overlap not checked for this shape pair; ";
    }
  }
  return result;
}

}  // namespace gpshield
