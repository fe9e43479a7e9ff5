#pragma once

#include <Eigen/Dense>

#include "gpshield/rng.hpp"

namespace gpshield {

/**
 * Fully connected network with two tanh hidden layers and a linear head.
 * Parameters live in named matrices but are exposed as one flat vector
 * (layer order, column-major weights before biases) for the optimizer,
 * finite-difference checks, and serialization.
 */
class Mlp {
 public:
  /// Weights start at Glorot-uniform values drawn from `rng`; biases at 0.
  Mlp(int input_dim, int hidden_units, int output_dim, RngStream& rng);

  int input_dim() const { return static_cast<int>(w1_.cols()); }
  int hidden_units() const { return static_cast<int>(w1_.rows()); }
  int output_dim() const { return static_cast<int>(w3_.rows()); }
  int param_count() const;

  Eigen::VectorXd params() const;
  void set_params(const Eigen::VectorXd& flat);

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;

  /// Activations kept by the forward pass for the matching backward pass.
  struct Workspace {
    Eigen::VectorXd input;
    Eigen::VectorXd h1;
    Eigen::VectorXd h2;
  };
  Eigen::VectorXd forward(const Eigen::VectorXd& x, Workspace& ws) const;

  /**
   * Backpropagate the output gradient `dy` through the pass recorded in
   * `ws`, adding parameter gradients into `grad` (length param_count(),
   * same layout as params()).  Returns the input gradient.
   */
  Eigen::VectorXd backward(const Workspace& ws, const Eigen::VectorXd& dy,
                           Eigen::VectorXd& grad) const;

 private:
  Eigen::MatrixXd w1_, w2_, w3_;
  Eigen::VectorXd b1_, b2_, b3_;
};

/**
 * Adaptive-moment optimizer on a flat parameter vector with the usual
 * defaults (beta1 0.9, beta2 0.999, eps 1e-8) and bias-corrected moments.
 */
class Adam {
 public:
  Adam(int dim, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  /// One descent step in place.
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);

  int dim() const { return static_cast<int>(m_.size()); }
  double learning_rate() const { return lr_; }
  int steps_taken() const { return t_; }

  /// Moment access for checkpointing.
  const Eigen::VectorXd& first_moment() const { return m_; }
  const Eigen::VectorXd& second_moment() const { return v_; }
  void restore(const Eigen::VectorXd& m, const Eigen::VectorXd& v, int t);

 private:
  double lr_, beta1_, beta2_, eps_;
  Eigen::VectorXd m_, v_;
  int t_ = 0;
};

/**
 * Scale `grad` in place so its Euclidean norm is at most `max_norm`;
 * returns the pre-clip norm.  Throws NonFiniteGradient on non-finite
 * entries.
 */
double clip_grad_norm(Eigen::VectorXd& grad, double max_norm);

}  // namespace gpshield
