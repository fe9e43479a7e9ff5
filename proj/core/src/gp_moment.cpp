#include <cmath>
#include <vector>

#include "gpshield/errors.hpp"
#include "gpshield/gp.hpp"

namespace gpshield {

UncertainPrediction GpModel::predict_uncertain(
    const JointInputBelief& input) const {
  const int d = input_dim_;
  const int n = output_dim_;
  if (input.mean.size() != d || input.cov.rows() != d ||
      input.cov.cols() != d) {
    throw DomainError("predict_uncertain: input dimension mismatch");
  }
  if (!input.mean.allFinite() || !input.cov.allFinite()) {
    throw DomainError("predict_uncertain: non-finite input belief");
  }
  const Eigen::MatrixXd Sigma = symmetrized(input.cov);
  const int D = fitted_size();

  UncertainPrediction out;
  out.mean = Eigen::VectorXd::Zero(n);
  out.cov = Eigen::MatrixXd::Zero(n, n);
  out.input_output_cross = Eigen::MatrixXd::Zero(d, n);
  if (D == 0) {
    for (int i = 0; i < n; ++i) {
      out.cov(i, i) = hypers_[static_cast<std::size_t>(i)].signal_variance;
    }
    return out;
  }

  // centered inputs and per-output ingredients of the Gaussian integrals
  const Eigen::MatrixXd V =
      inputs_.rowwise() - input.mean.transpose();  // D x d
  std::vector<Eigen::VectorXd> inv_sq_ls(static_cast<std::size_t>(n));
  std::vector<Eigen::MatrixXd> scaled(static_cast<std::size_t>(n));  // V Lam^-1
  std::vector<Eigen::VectorXd> log_k_mu(static_cast<std::size_t>(n));
  std::vector<Eigen::VectorXd> q(static_cast<std::size_t>(n));
  std::vector<Eigen::VectorXd> beta_q(static_cast<std::size_t>(n));

  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const RbfHyperparams& h = hypers_[ui];
    inv_sq_ls[ui] =
        h.length_scales.cwiseProduct(h.length_scales).cwiseInverse();
    scaled[ui] = V * inv_sq_ls[ui].asDiagonal();
    log_k_mu[ui] =
        (std::log(h.signal_variance) -
         0.5 * (V.cwiseProduct(scaled[ui])).rowwise().sum().array())
            .matrix();

    // q_a = alpha^2 |Sigma Lam^-1 + I|^-1/2 exp(-1/2 v_a' (Sigma+Lam)^-1 v_a)
    Eigen::MatrixXd blended = Sigma;
    blended.diagonal() +=
        h.length_scales.cwiseProduct(h.length_scales);
    const Eigen::LLT<Eigen::MatrixXd> blended_llt(blended);
    if (blended_llt.info() != Eigen::Success) {
      throw NotPositiveDefinite(
          "predict_uncertain: input covariance plus squared length scales "
          "failed to factor");
    }
    const Eigen::MatrixXd G = blended_llt.solve(V.transpose());  // d x D
    const Eigen::VectorXd quad =
        (V.transpose().cwiseProduct(G)).colwise().sum().transpose();
    const double log_det_ratio =
        2.0 * Eigen::MatrixXd(blended_llt.matrixL())
                  .diagonal()
                  .array()
                  .log()
                  .sum() -
        2.0 * h.length_scales.array().log().sum();
    q[ui] = (h.signal_variance *
             (-0.5 * (quad.array() + log_det_ratio)).exp())
                .matrix();

    const OutputCache& cache = cache_[ui];
    out.mean(i) = cache.beta.dot(q[ui]);
    beta_q[ui] = cache.beta.cwiseProduct(q[ui]);
    out.input_output_cross.col(i) = Sigma * (G * beta_q[ui]);
  }

  // second moments: pairwise Gaussian integrals assembled in log space with
  // one dense exp per output pair
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    for (int j = i; j < n; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      Eigen::MatrixXd R =
          Sigma * (inv_sq_ls[ui] + inv_sq_ls[uj]).asDiagonal();
      R.diagonal().array() += 1.0;
      const Eigen::PartialPivLU<Eigen::MatrixXd> R_lu(R);
      const double det_R = R_lu.determinant();
      if (!(det_R > 0.0) || !std::isfinite(det_R)) {
        throw NotPositiveDefinite(
            "predict_uncertain: pairwise lengthscale blend failed to factor");
      }
      const Eigen::MatrixXd T = symmetrized(R_lu.solve(Sigma));

      const Eigen::MatrixXd left = scaled[ui] * T;   // D x d
      const Eigen::MatrixXd right = scaled[uj] * T;  // D x d
      const Eigen::VectorXd self_i =
          (left.cwiseProduct(scaled[ui])).rowwise().sum();
      const Eigen::VectorXd self_j =
          (right.cwiseProduct(scaled[uj])).rowwise().sum();
      Eigen::MatrixXd log_Q =
          (left * scaled[uj].transpose()).eval();  // cross terms, D x D
      log_Q.colwise() += log_k_mu[ui] + 0.5 * self_i;
      log_Q.rowwise() +=
          (log_k_mu[uj] + 0.5 * self_j).transpose();
      log_Q.array() -= 0.5 * std::log(det_R);
      const Eigen::MatrixXd Q = log_Q.array().exp().matrix();

      const OutputCache& ci = cache_[ui];
      const OutputCache& cj = cache_[uj];
      double s = ci.beta.dot(Q * cj.beta) - out.mean(i) * out.mean(j);
      if (i == j) {
        // expected latent variance under the input distribution
        s += hypers_[ui].signal_variance -
             (ci.gram_inv.cwiseProduct(Q)).sum();
      }
      out.cov(i, j) = s;
      out.cov(j, i) = s;
    }
  }
  return out;
}

namespace {

GaussianBelief assemble_next_state(const GpModel& model,
                                   const GaussianBelief& state,
                                   const JointInputBelief& joint,
                                   const PropagateOptions& options) {
  const int n = model.output_dim();
  const UncertainPrediction pred = model.predict_uncertain(joint);
  const Eigen::MatrixXd cross = pred.input_output_cross.topRows(n);
  Eigen::MatrixXd cov =
      state.cov + pred.cov + cross + cross.transpose();
  if (options.process_noise.size() > 0) {
    if (options.process_noise.size() != n) {
      throw DomainError("propagate_state: process noise dimension mismatch");
    }
    cov += Eigen::MatrixXd(options.process_noise.asDiagonal());
  }
  cov = psd_floor(cov, 0.0);
  return GaussianBelief(state.mean + pred.mean, cov);
}

}  // namespace

GaussianBelief propagate_state(const GpModel& model,
                               const GaussianBelief& state,
                               const Eigen::MatrixXd& K,
                               const Eigen::VectorXd& x_eq,
                               const Eigen::VectorXd& u_eq,
                               const PropagateOptions& options) {
  const int n = model.output_dim();
  const int m = model.input_dim() - n;
  if (state.dim() != n || K.rows() != m || K.cols() != n ||
      x_eq.size() != n || u_eq.size() != m) {
    throw DomainError("propagate_state: control law dimension mismatch");
  }
  JointInputBelief joint;
  joint.mean.resize(n + m);
  joint.mean.head(n) = state.mean;
  joint.mean.tail(m) = u_eq - K * (state.mean - x_eq);
  // exact joint moments for a linear law: cov[x, u] = -Sigma K'
  const Eigen::MatrixXd cross_xu = -state.cov * K.transpose();
  joint.cov = Eigen::MatrixXd::Zero(n + m, n + m);
  joint.cov.topLeftCorner(n, n) = state.cov;
  joint.cov.topRightCorner(n, m) = cross_xu;
  joint.cov.bottomLeftCorner(m, n) = cross_xu.transpose();
  joint.cov.bottomRightCorner(m, m) = K * state.cov * K.transpose();
  return assemble_next_state(model, state, joint, options);
}

GaussianBelief propagate_state(const GpModel& model,
                               const GaussianBelief& state,
                               const Eigen::VectorXd& action,
                               const PropagateOptions& options) {
  const int n = model.output_dim();
  const int m = model.input_dim() - n;
  if (state.dim() != n || action.size() != m) {
    throw DomainError("propagate_state: action dimension mismatch");
  }
  JointInputBelief joint;
  joint.mean.resize(n + m);
  joint.mean.head(n) = state.mean;
  joint.mean.tail(m) = action;
  joint.cov = Eigen::MatrixXd::Zero(n + m, n + m);
  joint.cov.topLeftCorner(n, n) = state.cov;
  return assemble_next_state(model, state, joint, options);
}

}  // namespace gpshield
