#include "gpshield/gp.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

#include "gpshield/errors.hpp"

namespace gpshield {

namespace {

void check_hyper_values(const RbfHyperparams& h, int input_dim) {
  if (!(h.signal_variance > 0.0) || !(h.noise_variance > 0.0)) {
    throw DomainError("rbf hyperparameters must be strictly positive");
  }
  if (h.length_scales.size() != input_dim ||
      (h.length_scales.array() <= 0.0).any()) {
    throw DomainError("need one strictly positive length scale per input");
  }
  if (!std::isfinite(h.signal_variance) || !std::isfinite(h.noise_variance) ||
      !h.length_scales.allFinite()) {
    throw DomainError("rbf hyperparameters must be finite");
  }
}

/// Gram matrix of the signal part only (no noise on the diagonal).
Eigen::MatrixXd signal_gram(const Eigen::MatrixXd& X,
                            const RbfHyperparams& h) {
  const Eigen::MatrixXd Z =
      X * h.length_scales.cwiseInverse().asDiagonal();
  const Eigen::VectorXd sq = Z.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = sq.replicate(1, Z.rows()) +
                       sq.transpose().replicate(Z.rows(), 1) -
                       2.0 * Z * Z.transpose();
  d2 = d2.cwiseMax(0.0);
  return h.signal_variance * (-0.5 * d2).array().exp().matrix();
}

}  // namespace

double rbf_kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                  const RbfHyperparams& h) {
  if (a.size() != b.size() || a.size() != h.length_scales.size()) {
    throw DomainError("rbf_kernel: dimension mismatch");
  }
  const double d2 =
      (a - b).cwiseQuotient(h.length_scales).squaredNorm();
  return h.signal_variance * std::exp(-0.5 * d2);
}

GpModel::GpModel(int input_dim, int output_dim, int capacity)
    : input_dim_(input_dim), output_dim_(output_dim), capacity_(capacity) {
  if (input_dim <= 0 || output_dim <= 0 || capacity <= 0) {
    throw DomainError("GpModel: dimensions and capacity must be positive");
  }
  hypers_.resize(output_dim_);
  for (RbfHyperparams& h : hypers_) {
    h.length_scales = Eigen::VectorXd::Ones(input_dim_);
  }
  inputs_.resize(0, input_dim_);
  targets_.resize(0, output_dim_);
  cache_.resize(output_dim_);
}

void GpModel::add(const Eigen::VectorXd& input, const Eigen::VectorXd& target) {
  if (input.size() != input_dim_ || target.size() != output_dim_) {
    throw DomainError("GpModel::add: dimension mismatch");
  }
  if (!input.allFinite() || !target.allFinite()) {
    throw DomainError("GpModel::add: non-finite data point");
  }
  if (static_cast<int>(buffer_.size()) == capacity_) buffer_.pop_front();
  buffer_.emplace_back(input, target);
}

void GpModel::check_output(int output) const {
  if (output < 0 || output >= output_dim_) {
    throw DomainError("GpModel: output dimension out of range");
  }
}

const RbfHyperparams& GpModel::hyperparams(int output) const {
  check_output(output);
  return hypers_[static_cast<std::size_t>(output)];
}

void GpModel::set_hyperparams(int output, const RbfHyperparams& h) {
  check_output(output);
  check_hyper_values(h, input_dim_);
  hypers_[static_cast<std::size_t>(output)] = h;
  hypers_initialized_ = true;
}

void GpModel::refresh() {
  const int D = static_cast<int>(buffer_.size());
  inputs_.resize(D, input_dim_);
  targets_.resize(D, output_dim_);
  for (int a = 0; a < D; ++a) {
    inputs_.row(a) = buffer_[static_cast<std::size_t>(a)].first.transpose();
    targets_.row(a) = buffer_[static_cast<std::size_t>(a)].second.transpose();
  }
  build_cache();
}

void GpModel::build_cache() {
  const int D = static_cast<int>(inputs_.rows());
  for (int i = 0; i < output_dim_; ++i) {
    OutputCache& c = cache_[static_cast<std::size_t>(i)];
    if (D == 0) {
      c = OutputCache{};
      continue;
    }
    const RbfHyperparams& h = hypers_[static_cast<std::size_t>(i)];
    Eigen::MatrixXd A = signal_gram(inputs_, h);
    A.diagonal().array() += h.noise_variance;
    c.chol = cholesky_factor(A).L;
    const Eigen::VectorXd y = targets_.col(i);
    c.beta = c.chol.transpose().triangularView<Eigen::Upper>().solve(
        c.chol.triangularView<Eigen::Lower>().solve(y));
    c.gram_inv = c.chol.transpose().triangularView<Eigen::Upper>().solve(
        c.chol.triangularView<Eigen::Lower>().solve(
            Eigen::MatrixXd::Identity(D, D)));
    c.log_lik = -0.5 * y.dot(c.beta) -
                c.chol.diagonal().array().log().sum() -
                0.5 * D * std::log(2.0 * std::numbers::pi);
  }
}

double GpModel::log_marginal_likelihood(int output) const {
  check_output(output);
  if (fitted_size() == 0) {
    throw EmptyBuffer("log marginal likelihood needs fitted data");
  }
  return cache_[static_cast<std::size_t>(output)].log_lik;
}

std::pair<double, Eigen::VectorXd> GpModel::evidence_and_gradient(
    int output, const RbfHyperparams& h) const {
  check_output(output);
  check_hyper_values(h, input_dim_);
  const int D = static_cast<int>(inputs_.rows());
  if (D == 0) {
    throw EmptyBuffer("evidence_and_gradient needs fitted data");
  }
  const Eigen::MatrixXd Kf = signal_gram(inputs_, h);
  Eigen::MatrixXd A = Kf;
  A.diagonal().array() += h.noise_variance;
  const Eigen::MatrixXd L = cholesky_factor(A).L;
  const Eigen::VectorXd y = targets_.col(output);
  const Eigen::VectorXd beta =
      L.transpose().triangularView<Eigen::Upper>().solve(
          L.triangularView<Eigen::Lower>().solve(y));
  const Eigen::MatrixXd A_inv =
      L.transpose().triangularView<Eigen::Upper>().solve(
          L.triangularView<Eigen::Lower>().solve(
              Eigen::MatrixXd::Identity(D, D)));
  const double lik = -0.5 * y.dot(beta) -
                     L.diagonal().array().log().sum() -
                     0.5 * D * std::log(2.0 * std::numbers::pi);

  // d lik / d theta = 1/2 tr((beta beta' - A^-1) dA/d theta), with all
  // hyperparameters in log space
  const Eigen::MatrixXd W = beta * beta.transpose() - A_inv;
  Eigen::VectorXd grad(input_dim_ + 2);
  grad(0) = 0.5 * (W.cwiseProduct(Kf)).sum();
  for (int d = 0; d < input_dim_; ++d) {
    const Eigen::VectorXd col = inputs_.col(d);
    const Eigen::MatrixXd diff =
        col.replicate(1, D) - col.transpose().replicate(D, 1);
    const double l2 = h.length_scales(d) * h.length_scales(d);
    grad(1 + d) =
        0.5 * (W.cwiseProduct(Kf).cwiseProduct(diff.cwiseAbs2()) / l2).sum();
  }
  grad(input_dim_ + 1) = 0.5 * h.noise_variance * W.trace();
  return {lik, grad};
}

void GpModel::fit(int iters, double learning_rate) {
  if (iters < 0 || !(learning_rate > 0.0)) {
    throw DomainError("GpModel::fit: bad iteration count or learning rate");
  }
  const int D = static_cast<int>(buffer_.size());
  if (iters > 0 && D < 2) {
    throw DomainError("GpModel::fit needs at least two data points");
  }

  // snapshot first so the fit sees the current buffer
  inputs_.resize(D, input_dim_);
  targets_.resize(D, output_dim_);
  for (int a = 0; a < D; ++a) {
    inputs_.row(a) = buffer_[static_cast<std::size_t>(a)].first.transpose();
    targets_.row(a) = buffer_[static_cast<std::size_t>(a)].second.transpose();
  }

  if (!hypers_initialized_ && D >= 2) {
    // data-scale initialization: length scales from the input spread,
    // signal from the target variance, noise a tenth of the signal
    const Eigen::RowVectorXd in_mean = inputs_.colwise().mean();
    const Eigen::VectorXd in_std =
        ((inputs_.rowwise() - in_mean).colwise().squaredNorm() / D)
            .cwiseSqrt()
            .transpose();
    for (int i = 0; i < output_dim_; ++i) {
      RbfHyperparams& h = hypers_[static_cast<std::size_t>(i)];
      h.length_scales = in_std.cwiseMax(1e-3);
      const double mean = targets_.col(i).mean();
      const double var =
          (targets_.col(i).array() - mean).square().sum() / D;
      h.signal_variance = std::max(var, 1e-8);
      h.noise_variance = 0.1 * h.signal_variance;
    }
    hypers_initialized_ = true;
  }

  if (iters > 0) {
    for (int i = 0; i < output_dim_; ++i) {
      RbfHyperparams& h = hypers_[static_cast<std::size_t>(i)];
      Eigen::VectorXd theta(input_dim_ + 2);
      theta(0) = std::log(h.signal_variance);
      theta.segment(1, input_dim_) = h.length_scales.array().log();
      theta(input_dim_ + 1) = std::log(h.noise_variance);

      auto unpack = [&](const Eigen::VectorXd& t) {
        RbfHyperparams out;
        out.signal_variance = std::exp(t(0));
        out.length_scales = t.segment(1, input_dim_).array().exp();
        out.noise_variance = std::exp(t(input_dim_ + 1));
        return out;
      };
      auto evaluate = [&](const Eigen::VectorXd& t,
                          double& lik, Eigen::VectorXd& grad) {
        try {
          std::tie(lik, grad) = evidence_and_gradient(i, unpack(t));
          return std::isfinite(lik) && grad.allFinite();
        } catch (const NotPositiveDefinite&) {
          return false;
        }
      };

      double lik = 0.0;
      Eigen::VectorXd grad;
      if (!evaluate(theta, lik, grad)) {
        throw NotPositiveDefinite(
            "GpModel::fit: Gram factorization failed at the initial "
            "hyperparameters");
      }
      for (int it = 0; it < iters; ++it) {
        double step = learning_rate;
        bool improved = false;
        for (int halve = 0; halve < 25 && !improved; ++halve) {
          // keep log parameters in a sane range; exp(+-23) ~ 1e+-10
          const Eigen::VectorXd trial =
              (theta + step * grad).cwiseMax(-23.0).cwiseMin(23.0);
          double trial_lik = 0.0;
          Eigen::VectorXd trial_grad;
          if (evaluate(trial, trial_lik, trial_grad) && trial_lik > lik) {
            theta = trial;
            lik = trial_lik;
            grad = trial_grad;
            improved = true;
          } else {
            step *= 0.5;
          }
        }
        if (!improved) break;
      }
      h = unpack(theta);
    }
  }
  build_cache();
}

GaussianBelief GpModel::predict_deterministic(
    const Eigen::VectorXd& input) const {
  if (input.size() != input_dim_) {
    throw DomainError("predict_deterministic: input dimension mismatch");
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(output_dim_);
  Eigen::VectorXd var(output_dim_);
  const int D = fitted_size();
  for (int i = 0; i < output_dim_; ++i) {
    const RbfHyperparams& h = hypers_[static_cast<std::size_t>(i)];
    if (D == 0) {
      var(i) = h.signal_variance;
      continue;
    }
    const OutputCache& c = cache_[static_cast<std::size_t>(i)];
    const Eigen::VectorXd ks = kernel_vector(i, input);
    mean(i) = ks.dot(c.beta);
    const Eigen::VectorXd v =
        c.chol.triangularView<Eigen::Lower>().solve(ks);
    var(i) = std::max(h.signal_variance - v.squaredNorm(), 0.0);
  }
  return GaussianBelief(mean, Eigen::MatrixXd(var.asDiagonal()));
}

Eigen::VectorXd GpModel::gram_solve(int output,
                                    const Eigen::VectorXd& rhs) const {
  check_output(output);
  const OutputCache& c = cache_[static_cast<std::size_t>(output)];
  if (fitted_size() == 0) {
    throw EmptyBuffer("gram_solve needs fitted data");
  }
  return c.chol.transpose().triangularView<Eigen::Upper>().solve(
      c.chol.triangularView<Eigen::Lower>().solve(rhs));
}

Eigen::VectorXd GpModel::kernel_vector(int output,
                                       const Eigen::VectorXd& input) const {
  check_output(output);
  const RbfHyperparams& h = hypers_[static_cast<std::size_t>(output)];
  const int D = fitted_size();
  Eigen::VectorXd ks(D);
  for (int a = 0; a < D; ++a) {
    const double d2 = (inputs_.row(a).transpose() - input)
                          .cwiseQuotient(h.length_scales)
                          .squaredNorm();
    ks(a) = h.signal_variance * std::exp(-0.5 * d2);
  }
  return ks;
}

const Eigen::VectorXd& GpModel::beta(int output) const {
  check_output(output);
  return cache_[static_cast<std::size_t>(output)].beta;
}

namespace {

constexpr char kCheckpointMagic[8] = {'G', 'P', 'S', 'M', '0', '0', '0', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_doubles(std::ostream& out, const double* p, std::size_t count) {
  out.write(reinterpret_cast<const char*>(p),
            static_cast<std::streamsize>(count * sizeof(double)));
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void read_doubles(std::istream& in, double* p, std::size_t count) {
  in.read(reinterpret_cast<char*>(p),
          static_cast<std::streamsize>(count * sizeof(double)));
}

}  // namespace

void GpModel::save_checkpoint(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw ConfigError("cannot open checkpoint file for writing: " + path);
  }
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_u64(out, static_cast<std::uint64_t>(input_dim_));
  write_u64(out, static_cast<std::uint64_t>(output_dim_));
  write_u64(out, static_cast<std::uint64_t>(capacity_));
  write_u64(out, hypers_initialized_ ? 1 : 0);
  for (const RbfHyperparams& h : hypers_) {
    write_doubles(out, &h.signal_variance, 1);
    write_doubles(out, h.length_scales.data(),
                  static_cast<std::size_t>(h.length_scales.size()));
    write_doubles(out, &h.noise_variance, 1);
  }
  write_u64(out, buffer_.size());
  for (const auto& [x, y] : buffer_) {
    write_doubles(out, x.data(), static_cast<std::size_t>(x.size()));
    write_doubles(out, y.data(), static_cast<std::size_t>(y.size()));
  }
  if (!out) {
    throw ConfigError("short write while saving checkpoint: " + path);
  }
}

GpModel GpModel::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot open checkpoint file: " + path);
  }
  char magic[8] = {};
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw ConfigError("not a model checkpoint: " + path);
  }
  const auto input_dim = static_cast<int>(read_u64(in));
  const auto output_dim = static_cast<int>(read_u64(in));
  const auto capacity = static_cast<int>(read_u64(in));
  const bool initialized = read_u64(in) != 0;
  if (!in || input_dim <= 0 || output_dim <= 0 || capacity <= 0) {
    throw ConfigError("corrupt checkpoint header: " + path);
  }
  GpModel model(input_dim, output_dim, capacity);
  for (int i = 0; i < output_dim; ++i) {
    RbfHyperparams h;
    h.length_scales.resize(input_dim);
    read_doubles(in, &h.signal_variance, 1);
    read_doubles(in, h.length_scales.data(),
                 static_cast<std::size_t>(input_dim));
    read_doubles(in, &h.noise_variance, 1);
    model.hypers_[static_cast<std::size_t>(i)] = h;
  }
  const std::uint64_t count = read_u64(in);
  if (!in || count > static_cast<std::uint64_t>(capacity)) {
    throw ConfigError("corrupt checkpoint buffer count: " + path);
  }
  for (std::uint64_t a = 0; a < count; ++a) {
    Eigen::VectorXd x(input_dim), y(output_dim);
    read_doubles(in, x.data(), static_cast<std::size_t>(input_dim));
    read_doubles(in, y.data(), static_cast<std::size_t>(output_dim));
    model.buffer_.emplace_back(std::move(x), std::move(y));
  }
  if (!in) {
    throw ConfigError("short read while loading checkpoint: " + path);
  }
  model.hypers_initialized_ = initialized;
  model.refresh();
  return model;
}

}  // namespace gpshield
