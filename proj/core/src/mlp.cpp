#include "gpshield/mlp.hpp"

#include <cmath>

#include "gpshield/errors.hpp"

namespace gpshield {

namespace {

void glorot_fill(Eigen::MatrixXd& w, RngStream& rng) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      w(r, c) = rng.uniform(-limit, limit);
    }
  }
}

}  // namespace

Mlp::Mlp(int input_dim, int hidden_units, int output_dim, RngStream& rng) {
  if (input_dim <= 0 || hidden_units <= 0 || output_dim <= 0) {
    throw DomainError("network dimensions must be positive");
  }
  w1_.resize(hidden_units, input_dim);
  w2_.resize(hidden_units, hidden_units);
  w3_.resize(output_dim, hidden_units);
  glorot_fill(w1_, rng);
  glorot_fill(w2_, rng);
  glorot_fill(w3_, rng);
  b1_ = Eigen::VectorXd::Zero(hidden_units);
  b2_ = Eigen::VectorXd::Zero(hidden_units);
  b3_ = Eigen::VectorXd::Zero(output_dim);
}

int Mlp::param_count() const {
  return static_cast<int>(w1_.size() + b1_.size() + w2_.size() + b2_.size() +
                          w3_.size() + b3_.size());
}

Eigen::VectorXd Mlp::params() const {
  Eigen::VectorXd flat(param_count());
  Eigen::Index at = 0;
  const auto put = [&](const auto& block) {
    flat.segment(at, block.size()) =
        Eigen::Map<const Eigen::VectorXd>(block.data(), block.size());
    at += block.size();
  };
  put(w1_);
  put(b1_);
  put(w2_);
  put(b2_);
  put(w3_);
  put(b3_);
  return flat;
}

void Mlp::set_params(const Eigen::VectorXd& flat) {
  if (flat.size() != param_count()) {
    throw DomainError("parameter vector has the wrong length");
  }
  Eigen::Index at = 0;
  const auto take = [&](auto& block) {
    Eigen::Map<Eigen::VectorXd>(block.data(), block.size()) =
        flat.segment(at, block.size());
    at += block.size();
  };
  take(w1_);
  take(b1_);
  take(w2_);
  take(b2_);
  take(w3_);
  take(b3_);
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  Workspace ws;
  return forward(x, ws);
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x, Workspace& ws) const {
  if (x.size() != w1_.cols()) {
    throw DomainError("network input has the wrong dimension");
  }
  ws.input = x;
  ws.h1 = (w1_ * x + b1_).array().tanh().matrix();
  ws.h2 = (w2_ * ws.h1 + b2_).array().tanh().matrix();
  return w3_ * ws.h2 + b3_;
}

Eigen::VectorXd Mlp::backward(const Workspace& ws, const Eigen::VectorXd& dy,
                              Eigen::VectorXd& grad) const {
  if (dy.size() != w3_.rows() || grad.size() != param_count()) {
    throw DomainError("gradient buffers have the wrong dimension");
  }
  Eigen::Index at = 0;
  const auto block = [&](const auto& shape) {
    auto seg = grad.segment(at, shape.size());
    at += shape.size();
    return seg;
  };
  auto g_w1 = block(w1_);
  auto g_b1 = block(b1_);
  auto g_w2 = block(w2_);
  auto g_b2 = block(b2_);
  auto g_w3 = block(w3_);
  auto g_b3 = block(b3_);

  const Eigen::VectorXd dh2 = w3_.transpose() * dy;
  const Eigen::VectorXd dz2 =
      (dh2.array() * (1.0 - ws.h2.array().square())).matrix();
  const Eigen::VectorXd dh1 = w2_.transpose() * dz2;
  const Eigen::VectorXd dz1 =
      (dh1.array() * (1.0 - ws.h1.array().square())).matrix();

  Eigen::Map<Eigen::MatrixXd>(g_w3.data(), w3_.rows(), w3_.cols()) +=
      dy * ws.h2.transpose();
  g_b3 += dy;
  Eigen::Map<Eigen::MatrixXd>(g_w2.data(), w2_.rows(), w2_.cols()) +=
      dz2 * ws.h1.transpose();
  g_b2 += dz2;
  Eigen::Map<Eigen::MatrixXd>(g_w1.data(), w1_.rows(), w1_.cols()) +=
      dz1 * ws.input.transpose();
  g_b1 += dz1;
  return w1_.transpose() * dz1;
}

Adam::Adam(int dim, double learning_rate, double beta1, double beta2,
           double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (dim <= 0) throw DomainError("optimizer dimension must be positive");
  if (!(learning_rate > 0.0)) {
    throw DomainError("learning rate must be positive");
  }
  m_ = Eigen::VectorXd::Zero(dim);
  v_ = Eigen::VectorXd::Zero(dim);
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw DomainError("optimizer buffers have the wrong dimension");
  }
  if (!grad.allFinite()) {
    throw NonFiniteGradient("gradient contains non-finite entries");
  }
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = (beta2_ * v_.array() + (1.0 - beta2_) * grad.array().square()).matrix();
  const double correction1 = 1.0 - std::pow(beta1_, t_);
  const double correction2 = 1.0 - std::pow(beta2_, t_);
  params.array() -= lr_ * (m_.array() / correction1) /
                    ((v_.array() / correction2).sqrt() + eps_);
}

void Adam::restore(const Eigen::VectorXd& m, const Eigen::VectorXd& v, int t) {
  if (m.size() != m_.size() || v.size() != v_.size() || t < 0) {
    throw DomainError("optimizer state has the wrong shape");
  }
  m_ = m;
  v_ = v;
  t_ = t;
}

double clip_grad_norm(Eigen::VectorXd& grad, double max_norm) {
  if (!grad.allFinite()) {
    throw NonFiniteGradient("gradient contains non-finite entries");
  }
  if (!(max_norm > 0.0)) throw DomainError("clip norm must be positive");
  const double norm = grad.norm();
  if (norm > max_norm) grad *= max_norm / norm;
  return norm;
}

}  // namespace gpshield
