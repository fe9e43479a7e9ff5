#include <cmath>
#include <numbers>

#include "gpshield/errors.hpp"
#include "gpshield/gp.hpp"

namespace gpshield {

RffPosteriorSample::RffPosteriorSample(const GpModel& model, int m_features,
                                       RngStream& rng)
    : m_features_(m_features) {
  if (m_features <= 0) {
    throw DomainError("RffPosteriorSample: feature count must be positive");
  }
  const int d = model.input_dim();
  const int n = model.output_dim();
  const int D = model.fitted_size();
  train_inputs_ = model.snapshot_inputs();
  hypers_.reserve(static_cast<std::size_t>(n));
  freq_.resize(static_cast<std::size_t>(n));
  phase_.resize(static_cast<std::size_t>(n));
  feat_w_.resize(static_cast<std::size_t>(n));
  data_w_.resize(static_cast<std::size_t>(n));

  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const RbfHyperparams& h = model.hyperparams(i);
    hypers_.push_back(h);

    // prior draw: frequencies from the kernel's spectral density (Gaussian
    // with per-axis scale 1/lengthscale), uniform phases, normal weights
    Eigen::MatrixXd freq(m_features, d);
    Eigen::VectorXd phase(m_features);
    Eigen::VectorXd theta(m_features);
    for (int k = 0; k < m_features; ++k) {
      for (int c = 0; c < d; ++c) {
        freq(k, c) = rng.gaussian() / h.length_scales(c);
      }
      phase(k) = rng.uniform(0.0, 2.0 * std::numbers::pi);
      theta(k) = rng.gaussian();
    }
    freq_[ui] = std::move(freq);
    phase_[ui] = std::move(phase);
    feat_w_[ui] =
        std::sqrt(2.0 * h.signal_variance / m_features) * theta;

    if (D == 0) {
      data_w_[ui] = Eigen::VectorXd();
      continue;
    }
    // pin the draw to the data: solve against the prior draw's residual at
    // the training inputs, with fresh noise on the targets
    Eigen::VectorXd prior_at_train(D);
    for (int a = 0; a < D; ++a) {
      const Eigen::VectorXd row = train_inputs_.row(a).transpose();
      prior_at_train(a) =
          feat_w_[ui].dot(((freq_[ui] * row) + phase_[ui]).array().cos().matrix());
    }
    Eigen::VectorXd noisy_targets = model.snapshot_targets().col(i);
    const double noise_std = std::sqrt(h.noise_variance);
    for (int a = 0; a < D; ++a) {
      noisy_targets(a) -= prior_at_train(a) + noise_std * rng.gaussian();
    }
    data_w_[ui] = model.gram_solve(i, noisy_targets);
  }
}

double RffPosteriorSample::value(int output, const Eigen::VectorXd& input) const {
  if (output < 0 || output >= static_cast<int>(hypers_.size())) {
    throw DomainError("RffPosteriorSample: output dimension out of range");
  }
  if (input.size() != train_inputs_.cols()) {
    throw DomainError("RffPosteriorSample: input dimension mismatch");
  }
  const auto ui = static_cast<std::size_t>(output);
  double v = feat_w_[ui].dot(
      ((freq_[ui] * input) + phase_[ui]).array().cos().matrix());
  const int D = static_cast<int>(data_w_[ui].size());
  if (D > 0) {
    const RbfHyperparams& h = hypers_[ui];
    for (int a = 0; a < D; ++a) {
      const double d2 = (train_inputs_.row(a).transpose() - input)
                            .cwiseQuotient(h.length_scales)
                            .squaredNorm();
      v += data_w_[ui](a) * h.signal_variance * std::exp(-0.5 * d2);
    }
  }
  return v;
}

Eigen::VectorXd RffPosteriorSample::value(const Eigen::VectorXd& input) const {
  Eigen::VectorXd out(static_cast<int>(hypers_.size()));
  for (int i = 0; i < out.size(); ++i) out(i) = value(i, input);
  return out;
}

RffPosteriorSample sample_posterior_function(const GpModel& model,
                                             int m_features, RngStream& rng) {
  return RffPosteriorSample(model, m_features, rng);
}

}  // namespace gpshield
