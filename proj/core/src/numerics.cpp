#include "gpshield/numerics.hpp"

#include <cmath>

namespace gpshield {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Acklam's rational approximation for the lower-tail quantile, q in (0, 0.5].
double acklam_initial(double q) {
  if (q < 0.02425) {
    const double u = std::sqrt(-2.0 * std::log(q));
    return (((((-7.784894002430293e-03 * u - 3.223964580411365e-01) * u -
               2.400758277161838e+00) *
                  u -
              2.549732539343734e+00) *
                 u +
             4.374664141464968e+00) *
                u +
            2.938163982698783e+00) /
           ((((7.784695709041462e-03 * u + 3.224671290700398e-01) * u +
              2.445134137142996e+00) *
                 u +
             3.754408661907416e+00) *
                u +
            1.0);
  }
  const double s = q - 0.5;
  const double r = s * s;
  return (((((-3.969683028665376e+01 * r + 2.209460984245205e+02) * r -
             2.759285104469687e+02) *
                r +
            1.383577518672690e+02) *
               r -
           3.066479806614716e+01) *
              r +
          2.506628277459239e+00) *
         s /
         (((((-5.447609879822406e+01 * r + 1.615858368580409e+02) * r -
             1.556989798598866e+02) *
                r +
            6.680131188771972e+01) *
               r -
           1.328068155288572e+01) *
              r +
          1.0);
}

}  // namespace

CholeskyResult cholesky_factor(const Eigen::MatrixXd& m, double jitter_max) {
  if (m.rows() != m.cols()) {
    throw DomainError("cholesky_factor: matrix must be square");
  }
  if (!m.allFinite()) {
    throw DomainError("cholesky_factor: matrix has non-finite entries");
  }
  const double scale = m.rows() > 0 ? m.diagonal().mean() : 0.0;
  const double levels[] = {0.0, 1e-10, 1e-8, 1e-6};
  for (double level : levels) {
    const double jitter = level * scale;
    if (jitter > jitter_max) break;
    Eigen::MatrixXd a = m;
    if (jitter > 0.0) a.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) {
      return {Eigen::MatrixXd(llt.matrixL()), jitter};
    }
  }
  throw NotPositiveDefinite(
      "cholesky_factor: matrix is not positive definite after jitter escalation");
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double std_normal_quantile(double p) {
  if (!(p > 0.0) || !(p < 1.0)) {
    throw DomainError("std_normal_quantile: p must lie strictly in (0, 1)");
  }
  const bool upper = p > 0.5;
  const double q = upper ? 1.0 - p : p;
  double z = acklam_initial(q);
  // Newton refinement against the lower tail, where erfc is relatively
  // accurate even for very small q.
  for (int it = 0; it < 4; ++it) {
    const double cdf_low = 0.5 * std::erfc(-z * kInvSqrt2);
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * z * z);
    if (!(pdf > 0.0) || !std::isfinite(cdf_low)) break;
    const double step = (cdf_low - q) / pdf;
    z -= step;
    if (std::abs(step) < 1e-14 * std::max(1.0, std::abs(z))) break;
  }
  return upper ? -z : z;
}

double gamma_p(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) {
    throw DomainError("gamma_p: requires a > 0 and x >= 0");
  }
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) {
    // series expansion of P(a, x)
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 2000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-16) {
        return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
      }
    }
    throw NoConvergence("gamma_p: series did not converge");
  }
  // modified Lentz continued fraction for Q(a, x)
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 2000; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) {
      const double q = std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
      return 1.0 - q;
    }
  }
  throw NoConvergence("gamma_p: continued fraction did not converge");
}

double chi_square_cdf(double x, double k) {
  if (!(k > 0.0)) throw DomainError("chi_square_cdf: k must be positive");
  if (x <= 0.0) return 0.0;
  return gamma_p(0.5 * k, 0.5 * x);
}

double chi_square_quantile(double p, double k) {
  if (!(p > 0.0) || !(p < 1.0)) {
    throw DomainError("chi_square_quantile: p must lie strictly in (0, 1)");
  }
  if (!(k > 0.0)) throw DomainError("chi_square_quantile: k must be positive");
  double lo = 0.0;
  double hi = k + 10.0 * std::sqrt(2.0 * k) + 10.0;
  for (int it = 0; it < 200 && chi_square_cdf(hi, k) < p; ++it) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (chi_square_cdf(mid, k) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

GaussianBelief::GaussianBelief(Eigen::VectorXd mu, Eigen::MatrixXd sigma)
    : mean(std::move(mu)), cov(std::move(sigma)) {
  if (cov.rows() != cov.cols() || cov.rows() != mean.size()) {
    throw DomainError("GaussianBelief: dimension mismatch between mean and covariance");
  }
  if (!mean.allFinite() || !cov.allFinite()) {
    throw DomainError("GaussianBelief: non-finite entries");
  }
  if (mean.size() == 0) return;
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  const double asym = (cov - cov.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * scale) {
    throw DomainError("GaussianBelief: covariance is not symmetric");
  }
  cov = symmetrized(cov);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  const double lmax = std::max(0.0, es.eigenvalues().maxCoeff());
  if (es.eigenvalues().minCoeff() < -1e-9 * std::max(lmax, 1e-300)) {
    throw NotPositiveDefinite("GaussianBelief: covariance has a significantly negative eigenvalue");
  }
}

double mahalanobis_sq(const Eigen::VectorXd& x, const GaussianBelief& belief) {
  if (x.size() != belief.mean.size()) {
    throw DomainError("mahalanobis_sq: dimension mismatch");
  }
  Eigen::MatrixXd L;
  try {
    L = cholesky_factor(belief.cov).L;
  } catch (const NotPositiveDefinite&) {
    throw SingularCovariance("mahalanobis_sq: covariance is singular");
  }
  const Eigen::VectorXd d = x - belief.mean;
  const Eigen::VectorXd y = L.triangularView<Eigen::Lower>().solve(d);
  return y.squaredNorm();
}

Eigen::VectorXd sample_mvn(const GaussianBelief& belief, RngStream& rng) {
  const int n = belief.dim();
  if (n == 0) return belief.mean;
  if (belief.cov.isZero(0.0)) return belief.mean;
  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) z(i) = rng.gaussian();
  try {
    // no jitter here: a semi-definite covariance should take the eigen path
    // below and keep its null space exact
    const CholeskyResult chol = cholesky_factor(belief.cov, 0.0);
    return belief.mean + chol.L * z;
  } catch (const NotPositiveDefinite&) {
    // semi-definite fallback through the eigendecomposition
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(belief.cov);
    const double lmax = std::max(0.0, es.eigenvalues().maxCoeff());
    if (es.eigenvalues().minCoeff() < -1e-9 * std::max(lmax, 1e-300)) {
      throw NotPositiveDefinite("sample_mvn: covariance is indefinite");
    }
    const Eigen::VectorXd s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return belief.mean + es.eigenvectors() * (s.asDiagonal() * z);
  }
}

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

Eigen::MatrixXd psd_floor(const Eigen::MatrixXd& m, double floor) {
  Eigen::MatrixXd s = symmetrized(m);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  if (es.info() != Eigen::Success) {
    throw SingularCovariance("psd_floor: eigendecomposition failed");
  }
  if (es.eigenvalues().minCoeff() >= floor) return s;
  const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(floor);
  return symmetrized(es.eigenvectors() * lam.asDiagonal() *
                     es.eigenvectors().transpose());
}

}  // namespace gpshield
