#pragma once

#include <Eigen/Dense>
#include <variant>
#include <vector>

#include "gpshield/numerics.hpp"

namespace gpshield {

/// Axis-aligned box.  Entries may be +/- infinity for unbounded sides.
struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  Box() = default;
  Box(Eigen::VectorXd lower, Eigen::VectorXd upper);

  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(const Eigen::VectorXd& x, double tol = 0.0) const;
  /// Componentwise clamp into the box; unbounded sides pass through.
  Eigen::VectorXd clamp(const Eigen::VectorXd& x) const;
};

/// Halfspace intersection {x : A x <= b}.  Zero rows in A are rejected.
struct ConvexPolytope {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;

  ConvexPolytope() = default;
  ConvexPolytope(Eigen::MatrixXd a, Eigen::VectorXd rhs);

  int dim() const { return static_cast<int>(A.cols()); }
  bool contains(const Eigen::VectorXd& x, double tol = 0.0) const;
};

using ConvexRegion = std::variant<Box, ConvexPolytope>;

bool region_contains(const ConvexRegion& region, const Eigen::VectorXd& x,
                     double tol = 0.0);
int region_dim(const ConvexRegion& region);

/// Intersection of inclusion regions minus a union of exclusion regions.
struct SafeSet {
  std::vector<ConvexRegion> inclusions;
  std::vector<ConvexRegion> exclusions;

  bool contains(const Eigen::VectorXd& x) const;
};

/// Confidence ellipsoid {x : (x - mean)^T cov^-1 (x - mean) <= z^2}.
/// The covariance may be semi-definite; degenerate directions collapse the
/// set onto the affine subspace spanned by the nonzero eigenvectors.
struct Ellipsoid {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  double z = 1.0;

  Ellipsoid() = default;
  Ellipsoid(Eigen::VectorXd mu, Eigen::MatrixXd sigma, double scale);
  static Ellipsoid from_belief(const GaussianBelief& belief, double scale);

  int dim() const { return static_cast<int>(mean.size()); }
};

/// Membership of a single point in the safe set.
bool contains_point(const SafeSet& set, const Eigen::VectorXd& x);

/// Exact per-axis interval check: mean_i +/- z sqrt(cov_ii) within the box.
/// Unbounded box sides never cause failure.
bool ellipsoid_in_box(const Ellipsoid& e, const Box& box);

/// Exact support function check per halfspace row:
/// a^T mean + z sqrt(a^T cov a) <= b.
bool ellipsoid_in_polytope(const Ellipsoid& e, const ConvexPolytope& p);

/// Dispatch to the box or polytope containment check.
bool ellipsoid_in_region(const Ellipsoid& e, const ConvexRegion& region);

/// True only when the ellipsoid provably misses the obstacle.
///
/// Decided through the dual of the whitened projection problem
/// min ||y||^2 s.t. G y <= h: coordinate ascent (Hildreth) maintains a dual
/// feasible point whose objective lower-bounds the true squared Mahalanobis
/// distance to the obstacle, so a positive verdict is a certificate and an
/// unconverged solve degrades to "possibly intersecting", never the reverse.
bool ellipsoid_disjoint_from(const Ellipsoid& e, const ConvexRegion& obstacle);

/// Containment in every inclusion region plus disjointness from every
/// exclusion region.
bool ellipsoid_in_safe_set(const Ellipsoid& e, const SafeSet& set);

}  // namespace gpshield
