#pragma once

#include <deque>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gpshield/numerics.hpp"
#include "gpshield/rng.hpp"

namespace gpshield {

/**
 * Hyperparameters of a squared-exponential kernel
 * k(a, b) = signal_variance * exp(-1/2 (a-b)' diag(length_scales^2)^-1 (a-b)),
 * plus the observation noise variance added to the Gram diagonal. All values
 * strictly positive; the optimizer works in log space so positivity is
 * structural.
 */
struct RbfHyperparams {
  double signal_variance = 1.0;
  Eigen::VectorXd length_scales;
  double noise_variance = 0.1;
};

/// Kernel evaluation. Dimensions of a, b, and length_scales must agree.
double rbf_kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                  const RbfHyperparams& h);

/// Gaussian over the joint (state, action) input of the dynamics model.
struct JointInputBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Output of predict_uncertain: moments of the state delta under a Gaussian
/// input, plus the input-delta cross covariance the propagation step needs.
struct UncertainPrediction {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  /// cov[input, delta], (input_dim) x (output_dim).
  Eigen::MatrixXd input_output_cross;
};

struct PropagateOptions {
  /// Diagonal process noise added to the propagated covariance; empty means
  /// none. Callers that train on differences of noisy observations pass the
  /// learned noise variance with the observation share subtracted.
  Eigen::VectorXd process_noise;
};

/**
 * Per-output-dimension exact Gaussian process regression of next-step state
 * deltas on (state, action) inputs, over a bounded FIFO buffer.
 *
 * Data points enter through add(); predictions are served from a snapshot of
 * the buffer taken by fit() or refresh(), so a fitted model answers queries
 * consistently (and from const methods, safely across threads) while new
 * data accumulates for the next fit.
 */
class GpModel {
 public:
  GpModel(int input_dim, int output_dim, int capacity = 1000);

  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }
  int capacity() const { return capacity_; }
  /// Points currently buffered (the oldest is evicted once full).
  int size() const { return static_cast<int>(buffer_.size()); }
  /// Points backing predictions (buffer size at the last fit/refresh).
  int fitted_size() const { return static_cast<int>(inputs_.rows()); }

  /// Append one (input, target) pair, evicting the oldest when full.
  void add(const Eigen::VectorXd& input, const Eigen::VectorXd& target);

  const RbfHyperparams& hyperparams(int output) const;
  /// Replace one output dimension's hyperparameters. Takes effect on the
  /// next refresh() or fit().
  void set_hyperparams(int output, const RbfHyperparams& h);

  /// Snapshot the buffer and rebuild the cached Gram factorizations with the
  /// current hyperparameters.
  void refresh();

  /**
   * Evidence maximization: snapshot the buffer, then run per-output
   * gradient ascent on the log marginal likelihood in log-hyperparameter
   * space with backtracking (only improving steps are accepted), and leave
   * the cache at the optimized values. Length scales start at the per-input
   * standard deviation and signal variance at the target variance whenever
   * hyperparameters have not been set. Requires at least two buffered
   * points; iters = 0 only refreshes.
   */
  void fit(int iters = 100, double learning_rate = 0.01);

  /// Log marginal likelihood of one output at the snapshot.
  double log_marginal_likelihood(int output) const;

  /**
   * Log marginal likelihood and its gradient with respect to
   * (log signal_variance, log length_scales..., log noise_variance),
   * evaluated on the snapshot with the given hyperparameters. Exposed so
   * the gradient can be checked against finite differences.
   */
  std::pair<double, Eigen::VectorXd> evidence_and_gradient(
      int output, const RbfHyperparams& h) const;

  /**
   * Posterior at a known input: per-dimension mean k*' beta and noise-free
   * latent variance k** - k*' (K + noise I)^-1 k*, diagonal covariance.
   * With no fitted data this is the prior: zero mean, signal variance.
   */
  GaussianBelief predict_deterministic(const Eigen::VectorXd& input) const;

  /**
   * Moments of the state delta when the input itself is Gaussian: exact
   * Gaussian integrals of the kernel against the input density give the
   * mean, full covariance across output dimensions, and the input-delta
   * cross covariance. With zero input covariance this reduces to
   * predict_deterministic at the input mean. Throws NotPositiveDefinite
   * when the blended lengthscale matrix cannot be factored.
   */
  UncertainPrediction predict_uncertain(const JointInputBelief& input) const;

  /// Inputs backing predictions, one row per point (fitted_size x input_dim).
  const Eigen::MatrixXd& snapshot_inputs() const { return inputs_; }
  /// Targets backing predictions (fitted_size x output_dim).
  const Eigen::MatrixXd& snapshot_targets() const { return targets_; }

  /// Solve (K + noise I) z = rhs for one output against the cached factor.
  Eigen::VectorXd gram_solve(int output, const Eigen::VectorXd& rhs) const;
  /// k(X, x) between the snapshot inputs and a query, for one output.
  Eigen::VectorXd kernel_vector(int output, const Eigen::VectorXd& input) const;
  /// Cached (K + noise I)^-1 y for one output.
  const Eigen::VectorXd& beta(int output) const;

  /**
   * Serialize hyperparameters and the buffer in insertion order to a small
   * self-describing binary file. load_checkpoint reconstructs the model and
   * rebuilds the predictive cache, reproducing predictions bit for bit.
   */
  void save_checkpoint(const std::string& path) const;
  static GpModel load_checkpoint(const std::string& path);

 private:
  struct OutputCache {
    Eigen::MatrixXd chol;     // lower factor of K + noise I
    Eigen::VectorXd beta;     // (K + noise I)^-1 y
    Eigen::MatrixXd gram_inv; // (K + noise I)^-1
    double log_lik = 0.0;
  };

  void check_output(int output) const;
  void build_cache();

  int input_dim_ = 0;
  int output_dim_ = 0;
  int capacity_ = 0;
  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> buffer_;
  std::vector<RbfHyperparams> hypers_;
  bool hypers_initialized_ = false;

  // prediction snapshot
  Eigen::MatrixXd inputs_;   // D x input_dim
  Eigen::MatrixXd targets_;  // D x output_dim
  std::vector<OutputCache> cache_;
};

/**
 * One-step belief propagation through the model under a linear control law
 * u = u_eq - K (x - x_eq): the joint (state, action) Gaussian has
 * action covariance K Sigma K' and cross covariance -Sigma K', both exact
 * for a linear law. The next-state belief is
 * mean + delta mean, Sigma + delta cov + cross + cross' (+ process noise),
 * symmetrized and eigenvalue-floored at zero.
 */
GaussianBelief propagate_state(const GpModel& model,
                               const GaussianBelief& state,
                               const Eigen::MatrixXd& K,
                               const Eigen::VectorXd& x_eq,
                               const Eigen::VectorXd& u_eq,
                               const PropagateOptions& options = {});

/// Same propagation with a fixed (deterministic) action: the action block of
/// the joint input has zero covariance and zero cross covariance.
GaussianBelief propagate_state(const GpModel& model,
                               const GaussianBelief& state,
                               const Eigen::VectorXd& action,
                               const PropagateOptions& options = {});

/**
 * One draw from the posterior over dynamics functions, cheap to evaluate
 * anywhere: a random cosine-feature expansion of the kernel provides the
 * prior draw, and a data-space correction solved against the cached Gram
 * factor pins it to the training data. Evaluation cost is independent of
 * how many queries were answered before, and repeated evaluation at the
 * same input returns the identical value. With no fitted data the draw is
 * from the prior.
 */
class RffPosteriorSample {
 public:
  RffPosteriorSample(const GpModel& model, int m_features, RngStream& rng);

  /// Sampled delta for every output dimension at one input.
  Eigen::VectorXd value(const Eigen::VectorXd& input) const;
  /// Sampled delta for a single output dimension.
  double value(int output, const Eigen::VectorXd& input) const;

  int feature_count() const { return m_features_; }

 private:
  int m_features_ = 0;
  Eigen::MatrixXd train_inputs_;  // copy of the model snapshot
  std::vector<RbfHyperparams> hypers_;
  std::vector<Eigen::MatrixXd> freq_;       // per output, m x input_dim
  std::vector<Eigen::VectorXd> phase_;      // per output, m
  std::vector<Eigen::VectorXd> feat_w_;     // per output, m
  std::vector<Eigen::VectorXd> data_w_;     // per output, fitted_size
};

/// Convenience spelling of the draw.
RffPosteriorSample sample_posterior_function(const GpModel& model,
                                             int m_features, RngStream& rng);

}  // namespace gpshield
