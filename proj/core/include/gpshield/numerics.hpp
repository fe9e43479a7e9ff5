#pragma once

#include <Eigen/Dense>

#include "gpshield/errors.hpp"
#include "gpshield/rng.hpp"

namespace gpshield {

struct CholeskyResult {
  Eigen::MatrixXd L;    // lower triangular factor of m + jitter * I
  double jitter = 0.0;  // diagonal amount that was actually added
};

/// Lower Cholesky factor with escalating diagonal jitter.
///
/// Tries jitter levels {0, 1e-10, 1e-8, 1e-6} scaled by the mean diagonal,
/// skipping levels above jitter_max, and returns the first factorization that
/// succeeds together with the jitter used.  Throws NotPositiveDefinite when
/// every admissible level fails.
CholeskyResult cholesky_factor(const Eigen::MatrixXd& m, double jitter_max = 1e-4);

/// Standard normal CDF.
double std_normal_cdf(double x);

/// Inverse standard normal CDF.  p must lie strictly in (0, 1), otherwise
/// DomainError.  Accurate to better than 1e-10 absolute across the tails.
double std_normal_quantile(double p);

/// Regularized lower incomplete gamma function P(a, x).
double gamma_p(double a, double x);

/// Chi-square CDF with k degrees of freedom.
double chi_square_cdf(double x, double k);

/// Chi-square quantile.  p in (0, 1), k > 0.
double chi_square_quantile(double p, double k);

/// Gaussian state estimate.
///
/// Construction enforces symmetry (1e-12 relative tolerance, then stores the
/// symmetrized matrix) and rejects covariances whose smallest eigenvalue is
/// below -1e-9 times the largest.
struct GaussianBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  GaussianBelief() = default;
  GaussianBelief(Eigen::VectorXd mu, Eigen::MatrixXd sigma);

  int dim() const { return static_cast<int>(mean.size()); }
};

/// Squared Mahalanobis distance of x under the belief.  Throws
/// SingularCovariance when the covariance cannot be factored even with jitter,
/// and DomainError on dimension mismatch.
double mahalanobis_sq(const Eigen::VectorXd& x, const GaussianBelief& belief);

/// Draw from N(mean, cov).  An exactly zero covariance returns the mean.
/// Positive semi-definite covariances are handled through an eigendecomposition
/// fallback; indefinite ones throw NotPositiveDefinite.
Eigen::VectorXd sample_mvn(const GaussianBelief& belief, RngStream& rng);

/// (m + m^T) / 2.
Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m);

/// Nearest symmetric matrix with eigenvalues clamped at floor.
Eigen::MatrixXd psd_floor(const Eigen::MatrixXd& m, double floor = 0.0);

}  // namespace gpshield
