#include "gpshield/geometry.hpp"

#include <cmath>
#include <limits>
#include <utility>

namespace gpshield {

namespace {

// Finite halfspaces of a region, rows of (A, b) with A x <= b.
void region_halfspaces(const ConvexRegion& region, Eigen::MatrixXd& A,
                       Eigen::VectorXd& b) {
  if (std::holds_alternative<Box>(region)) {
    const Box& box = std::get<Box>(region);
    const int n = box.dim();
    std::vector<std::pair<int, double>> rows;  // (signed axis, bound)
    for (int i = 0; i < n; ++i) {
      if (std::isfinite(box.hi(i))) rows.emplace_back(i + 1, box.hi(i));
      if (std::isfinite(box.lo(i))) rows.emplace_back(-(i + 1), -box.lo(i));
    }
    A = Eigen::MatrixXd::Zero(static_cast<int>(rows.size()), n);
    b.resize(static_cast<int>(rows.size()));
    for (int r = 0; r < static_cast<int>(rows.size()); ++r) {
      const int axis = std::abs(rows[r].first) - 1;
      A(r, axis) = rows[r].first > 0 ? 1.0 : -1.0;
      b(r) = rows[r].second;
    }
  } else {
    const ConvexPolytope& p = std::get<ConvexPolytope>(region);
    A = p.A;
    b = p.b;
  }
}

}  // namespace

Box::Box(Eigen::VectorXd lower, Eigen::VectorXd upper)
    : lo(std::move(lower)), hi(std::move(upper)) {
  if (lo.size() != hi.size()) throw DomainError("Box: bound sizes differ");
  for (int i = 0; i < lo.size(); ++i) {
    if (std::isnan(lo(i)) || std::isnan(hi(i))) throw DomainError("Box: NaN bound");
    if (lo(i) > hi(i)) throw DomainError("Box: lower bound exceeds upper bound");
  }
}

bool Box::contains(const Eigen::VectorXd& x, double tol) const {
  if (x.size() != lo.size()) throw DomainError("Box::contains: dimension mismatch");
  for (int i = 0; i < lo.size(); ++i) {
    // written so that NaN coordinates fail closed
    if (!(x(i) >= lo(i) - tol) || !(x(i) <= hi(i) + tol)) return false;
  }
  return true;
}

Eigen::VectorXd Box::clamp(const Eigen::VectorXd& x) const {
  if (x.size() != lo.size()) throw DomainError("Box::clamp: dimension mismatch");
  return x.cwiseMax(lo).cwiseMin(hi);
}

ConvexPolytope::ConvexPolytope(Eigen::MatrixXd a, Eigen::VectorXd rhs)
    : A(std::move(a)), b(std::move(rhs)) {
  if (A.rows() != b.size()) throw DomainError("ConvexPolytope: A and b row counts differ");
  if (!A.allFinite() || !b.allFinite()) throw DomainError("ConvexPolytope: non-finite entries");
  for (int r = 0; r < A.rows(); ++r) {
    if (A.row(r).norm() == 0.0) throw DomainError("ConvexPolytope: zero row in A");
  }
}

bool ConvexPolytope::contains(const Eigen::VectorXd& x, double tol) const {
  if (x.size() != A.cols()) throw DomainError("ConvexPolytope::contains: dimension mismatch");
  for (int r = 0; r < A.rows(); ++r) {
    if (!(A.row(r).dot(x) <= b(r) + tol)) return false;
  }
  return true;
}

bool region_contains(const ConvexRegion& region, const Eigen::VectorXd& x,
                     double tol) {
  return std::visit([&](const auto& r) { return r.contains(x, tol); }, region);
}

int region_dim(const ConvexRegion& region) {
  return std::visit([](const auto& r) { return r.dim(); }, region);
}

bool SafeSet::contains(const Eigen::VectorXd& x) const {
  for (const ConvexRegion& r : inclusions) {
    if (!region_contains(r, x)) return false;
  }
  for (const ConvexRegion& r : exclusions) {
    if (region_contains(r, x)) return false;
  }
  return true;
}

Ellipsoid::Ellipsoid(Eigen::VectorXd mu, Eigen::MatrixXd sigma, double scale) {
  GaussianBelief checked(std::move(mu), std::move(sigma));
  mean = std::move(checked.mean);
  cov = std::move(checked.cov);
  if (!(scale >= 0.0) || !std::isfinite(scale)) {
    throw DomainError("Ellipsoid: z must be finite and nonnegative");
  }
  z = scale;
}

Ellipsoid Ellipsoid::from_belief(const GaussianBelief& belief, double scale) {
  return Ellipsoid(belief.mean, belief.cov, scale);
}

bool contains_point(const SafeSet& set, const Eigen::VectorXd& x) {
  return set.contains(x);
}

bool ellipsoid_in_box(const Ellipsoid& e, const Box& box) {
  if (e.dim() != box.dim()) throw DomainError("ellipsoid_in_box: dimension mismatch");
  for (int i = 0; i < e.dim(); ++i) {
    const double s = e.z * std::sqrt(std::max(e.cov(i, i), 0.0));
    if (std::isfinite(box.lo(i)) && !(e.mean(i) - s >= box.lo(i))) return false;
    if (std::isfinite(box.hi(i)) && !(e.mean(i) + s <= box.hi(i))) return false;
  }
  return true;
}

bool ellipsoid_in_polytope(const Ellipsoid& e, const ConvexPolytope& p) {
  if (e.dim() != p.dim()) throw DomainError("ellipsoid_in_polytope: dimension mismatch");
  for (int r = 0; r < p.A.rows(); ++r) {
    const Eigen::VectorXd a = p.A.row(r).transpose();
    const double spread = e.z * std::sqrt(std::max(a.dot(e.cov * a), 0.0));
    if (!(a.dot(e.mean) + spread <= p.b(r))) return false;
  }
  return true;
}

bool ellipsoid_disjoint_from(const Ellipsoid& e, const ConvexRegion& obstacle) {
  if (region_dim(obstacle) != e.dim()) {
    throw DomainError("ellipsoid_disjoint_from: dimension mismatch");
  }
  if (!e.mean.allFinite()) return false;
  if (region_contains(obstacle, e.mean)) return false;

  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  region_halfspaces(obstacle, A, b);
  if (A.rows() == 0) return false;  // the obstacle covers the whole space

  // whiten; degenerate directions get a small eigenvalue floor
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(e.cov);
  if (es.info() != Eigen::Success) return false;
  const double lmax = std::max(es.eigenvalues().maxCoeff(), 0.0);
  const double floor = 1e-12 * std::max(lmax, 1.0);
  const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(floor);
  const Eigen::MatrixXd sqrt_cov = es.eigenvectors() *
                                   lam.cwiseSqrt().asDiagonal() *
                                   es.eigenvectors().transpose();

  const Eigen::MatrixXd G = A * sqrt_cov;
  const Eigen::VectorXd h = b - A * e.mean;

  // Hildreth coordinate ascent on the dual.  Any dual feasible lambda gives a
  // lower bound on the squared Mahalanobis distance to the obstacle.
  const int k = static_cast<int>(G.rows());
  const Eigen::MatrixXd M = G * G.transpose();
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(k);
  const double z2 = e.z * e.z;
  const double margin = z2 * (1.0 + 1e-9) + 1e-300;
  double best = 0.0;
  for (int sweep = 0; sweep < 2000; ++sweep) {
    double delta = 0.0;
    for (int j = 0; j < k; ++j) {
      const double d = M(j, j);
      if (d <= 1e-300) continue;
      const double rest = M.row(j).dot(lambda) - d * lambda(j);
      const double updated = std::max(0.0, (-2.0 * h(j) - rest) / d);
      delta = std::max(delta, std::abs(updated - lambda(j)));
      lambda(j) = updated;
    }
    const double value = -0.25 * lambda.dot(M * lambda) - lambda.dot(h);
    if (!std::isfinite(value)) return false;
    best = std::max(best, value);
    if (best > margin) return true;
    if (delta <= 1e-14 * (1.0 + lambda.cwiseAbs().maxCoeff())) break;
  }
  return best > margin;
}

bool ellipsoid_in_region(const Ellipsoid& e, const ConvexRegion& region) {
  return std::holds_alternative<Box>(region)
             ? ellipsoid_in_box(e, std::get<Box>(region))
             : ellipsoid_in_polytope(e, std::get<ConvexPolytope>(region));
}

bool ellipsoid_in_safe_set(const Ellipsoid& e, const SafeSet& set) {
  for (const ConvexRegion& r : set.inclusions) {
    if (!ellipsoid_in_region(e, r)) return false;
  }
  for (const ConvexRegion& r : set.exclusions) {
    if (!ellipsoid_disjoint_from(e, r)) return false;
  }
  return true;
}

}  // namespace gpshield
