#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include <Eigen/Dense>

#include "gpshield/errors.hpp"
#include "gpshield/gp.hpp"
#include "gpshield/numerics.hpp"
#include "gpshield/rng.hpp"
#include "support/check.hpp"

namespace {

using gpshield::GaussianBelief;
using gpshield::GpModel;
using gpshield::JointInputBelief;
using gpshield::PropagateOptions;
using gpshield::RbfHyperparams;
using gpshield::RffPosteriorSample;
using gpshield::RngStream;
using gpshield::UncertainPrediction;

Eigen::VectorXd vec(std::initializer_list<double> values) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

RbfHyperparams make_hypers(double signal, std::initializer_list<double> ls,
                           double noise) {
  RbfHyperparams h;
  h.signal_variance = signal;
  h.length_scales = vec(ls);
  h.noise_variance = noise;
  return h;
}

/// Model with 3 inputs (2 state + 1 action) and 2 outputs on smooth seeded
/// data; hyperparameters are set directly so tests are deterministic.
GpModel make_seeded_model(int points = 30) {
  GpModel model(3, 2, 1000);
  RngStream rng(401);
  for (int a = 0; a < points; ++a) {
    Eigen::VectorXd x(3);
    for (int c = 0; c < 3; ++c) x(c) = rng.uniform(-2.0, 2.0);
    Eigen::VectorXd y(2);
    y(0) = 0.6 * std::sin(1.3 * x(0)) * std::cos(0.7 * x(1)) + 0.2 * x(2) +
           0.01 * rng.gaussian();
    y(1) = 0.4 * std::tanh(x(0) + 0.5 * x(1) - 0.3 * x(2)) +
           0.01 * rng.gaussian();
    model.add(x, y);
  }
  model.set_hyperparams(0, make_hypers(1.0, {1.0, 0.8, 1.2}, 1e-4));
  model.set_hyperparams(1, make_hypers(0.8, {0.9, 1.1, 1.0}, 1e-4));
  model.refresh();
  return model;
}

double standard_error(const Eigen::VectorXd& samples) {
  const double mean = samples.mean();
  const double var =
      (samples.array() - mean).square().sum() /
      static_cast<double>(samples.size() - 1);
  return std::sqrt(var / static_cast<double>(samples.size()));
}

template <typename A, typename B>
bool same_bits(const A& a, const B& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.array() == b.array()).all();
}

void test_kernel() {
  const RbfHyperparams h = make_hypers(2.5, {1.0, 1.0}, 0.01);
  REQUIRE_NEAR(gpshield::rbf_kernel(vec({0.3, -1.2}), vec({0.3, -1.2}), h),
               2.5, 1e-15, "zero distance returns the signal variance");

  const RbfHyperparams unit = make_hypers(1.0, {1.0, 1.0}, 0.01);
  REQUIRE_NEAR(gpshield::rbf_kernel(vec({0.0, 0.0}), vec({1.0, 0.0}), unit),
               std::exp(-0.5), 1e-12, "unit separation gives exp(-1/2)");

  RngStream rng(402);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd a(2), b(2);
    for (int i = 0; i < 2; ++i) {
      a(i) = rng.uniform(-3.0, 3.0);
      b(i) = rng.uniform(-3.0, 3.0);
    }
    REQUIRE(gpshield::rbf_kernel(a, b, h) == gpshield::rbf_kernel(b, a, h),
            "kernel is symmetric in its arguments");
  }

  REQUIRE_THROWS_AS(gpshield::rbf_kernel(vec({1.0}), vec({1.0, 2.0}), h),
                    gpshield::DomainError, "dimension mismatch rejected");
  test_done("rbf kernel");
}

void test_cached_beta_matches_direct_solve() {
  GpModel model = make_seeded_model(25);
  for (int output = 0; output < 2; ++output) {
    const RbfHyperparams& h = model.hyperparams(output);
    const Eigen::MatrixXd& X = model.snapshot_inputs();
    const int D = model.fitted_size();
    Eigen::MatrixXd K(D, D);
    for (int a = 0; a < D; ++a) {
      for (int b = 0; b < D; ++b) {
        K(a, b) = gpshield::rbf_kernel(X.row(a).transpose(),
                                       X.row(b).transpose(), h);
      }
    }
    K.diagonal().array() += h.noise_variance;
    const Eigen::VectorXd direct =
        K.inverse() * model.snapshot_targets().col(output);
    const double rel = (model.beta(output) - direct).norm() /
                       std::max(direct.norm(), 1e-30);
    REQUIRE(rel <= 1e-9, "cached beta reproduces the direct solve");
  }
  test_done("cached beta against explicit inverse");
}

void test_evidence_gradient_finite_difference() {
  GpModel model(2, 1, 100);
  RngStream rng(403);
  for (int a = 0; a < 20; ++a) {
    const Eigen::VectorXd x = vec({rng.uniform(-2.0, 2.0),
                                   rng.uniform(-2.0, 2.0)});
    model.add(x, vec({std::sin(x(0)) + 0.3 * x(1) + 0.05 * rng.gaussian()}));
  }
  model.set_hyperparams(0, make_hypers(0.9, {0.8, 1.3}, 0.02));
  model.refresh();

  const RbfHyperparams h0 = model.hyperparams(0);
  const auto [lik, grad] = model.evidence_and_gradient(0, h0);
  REQUIRE(std::isfinite(lik), "likelihood is finite");

  Eigen::VectorXd theta(4);
  theta << std::log(h0.signal_variance), std::log(h0.length_scales(0)),
      std::log(h0.length_scales(1)), std::log(h0.noise_variance);
  auto eval_at = [&](const Eigen::VectorXd& t) {
    RbfHyperparams h;
    h.signal_variance = std::exp(t(0));
    h.length_scales = vec({std::exp(t(1)), std::exp(t(2))});
    h.noise_variance = std::exp(t(3));
    return model.evidence_and_gradient(0, h).first;
  };
  const double step = 1e-5;
  for (int k = 0; k < 4; ++k) {
    Eigen::VectorXd up = theta, down = theta;
    up(k) += step;
    down(k) -= step;
    const double fd = (eval_at(up) - eval_at(down)) / (2.0 * step);
    const double rel =
        std::abs(grad(k) - fd) / std::max(std::abs(fd), 1.0);
    REQUIRE(rel <= 1e-4, "analytic gradient matches central differences");
  }
  test_done("evidence gradient against finite differences");
}

void test_fit_recovers_known_hyperparameters() {
  // data drawn from a GP with signal 1, unit length scales, noise 0.01
  const int D = 200;
  RngStream rng(404);
  Eigen::MatrixXd X(D, 2);
  for (int a = 0; a < D; ++a) {
    X(a, 0) = rng.uniform(-2.0, 2.0);
    X(a, 1) = rng.uniform(-2.0, 2.0);
  }
  const RbfHyperparams truth = make_hypers(1.0, {1.0, 1.0}, 0.01);
  Eigen::MatrixXd K(D, D);
  for (int a = 0; a < D; ++a) {
    for (int b = 0; b < D; ++b) {
      K(a, b) = gpshield::rbf_kernel(X.row(a).transpose(),
                                     X.row(b).transpose(), truth);
    }
  }
  K.diagonal().array() += 1e-10;
  const Eigen::MatrixXd L = gpshield::cholesky_factor(K).L;
  Eigen::VectorXd z(D);
  for (int a = 0; a < D; ++a) z(a) = rng.gaussian();
  const Eigen::VectorXd f = L * z;

  GpModel model(2, 1, 1000);
  for (int a = 0; a < D; ++a) {
    model.add(X.row(a).transpose(),
              vec({f(a) + 0.1 * rng.gaussian()}));
  }
  model.fit(100, 0.01);

  const RbfHyperparams& fitted = model.hyperparams(0);
  REQUIRE_NEAR(std::log(fitted.signal_variance), 0.0, 0.5,
               "signal variance recovered in log space");
  REQUIRE_NEAR(std::log(fitted.length_scales(0)), 0.0, 0.5,
               "first length scale recovered");
  REQUIRE_NEAR(std::log(fitted.length_scales(1)), 0.0, 0.5,
               "second length scale recovered");
  REQUIRE_NEAR(std::log(fitted.noise_variance), std::log(0.01), 0.5,
               "noise variance recovered");
  test_done("fit recovers generating hyperparameters");
}

void test_fit_noop_and_validation() {
  GpModel model(2, 1, 10);
  model.add(vec({0.0, 0.0}), vec({1.0}));
  model.add(vec({1.0, 0.5}), vec({0.5}));
  const RbfHyperparams before = make_hypers(0.7, {1.1, 0.9}, 0.05);
  model.set_hyperparams(0, before);
  model.fit(0, 0.01);
  const RbfHyperparams& after = model.hyperparams(0);
  REQUIRE(after.signal_variance == before.signal_variance &&
              after.noise_variance == before.noise_variance &&
              same_bits(after.length_scales, before.length_scales),
          "zero iterations leave hyperparameters unchanged");
  REQUIRE(model.fitted_size() == 2, "zero-iteration fit still snapshots");

  // accepted steps never decrease the evidence
  const double before_lik = model.log_marginal_likelihood(0);
  model.fit(20, 0.01);
  REQUIRE(model.log_marginal_likelihood(0) >= before_lik - 1e-12,
          "fit does not decrease the evidence");

  GpModel tiny(2, 1, 10);
  tiny.add(vec({0.0, 0.0}), vec({1.0}));
  REQUIRE_THROWS_AS(tiny.fit(10, 0.01), gpshield::DomainError,
                    "fitting a single point is rejected");
  REQUIRE_THROWS_AS(model.fit(10, -1.0), gpshield::DomainError,
                    "negative learning rate rejected");
  test_done("fit no-op and validation");
}

void test_predict_deterministic() {
  // single noiseless point: interpolation with vanishing variance
  GpModel one(2, 2, 10);
  one.add(vec({0.4, -0.2}), vec({0.7, -0.3}));
  one.set_hyperparams(0, make_hypers(1.3, {1.0, 1.0}, 1e-12));
  one.set_hyperparams(1, make_hypers(0.9, {1.0, 1.0}, 1e-12));
  one.refresh();
  const GaussianBelief at_train = one.predict_deterministic(vec({0.4, -0.2}));
  REQUIRE_NEAR(at_train.mean(0), 0.7, 1e-9, "interpolates the first target");
  REQUIRE_NEAR(at_train.mean(1), -0.3, 1e-9, "interpolates the second target");
  REQUIRE(at_train.cov(0, 0) <= 1e-9 && at_train.cov(1, 1) <= 1e-9,
          "variance collapses at a noiseless training point");

  // empty model: zero-mean prior with signal variance
  GpModel empty(2, 1, 10);
  empty.set_hyperparams(0, make_hypers(1.7, {1.0, 2.0}, 0.01));
  empty.refresh();
  const GaussianBelief prior = empty.predict_deterministic(vec({3.0, -1.0}));
  REQUIRE(prior.mean(0) == 0.0, "prior mean is zero");
  REQUIRE_NEAR(prior.cov(0, 0), 1.7, 1e-15, "prior variance is the signal");

  // seeded model against a direct transcription with an explicit inverse
  GpModel model = make_seeded_model(50);
  RngStream rng(405);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd x(3);
    for (int c = 0; c < 3; ++c) x(c) = rng.uniform(-2.0, 2.0);
    const GaussianBelief pred = model.predict_deterministic(x);
    for (int output = 0; output < 2; ++output) {
      const RbfHyperparams& h = model.hyperparams(output);
      const Eigen::MatrixXd& X = model.snapshot_inputs();
      const int D = model.fitted_size();
      Eigen::MatrixXd K(D, D);
      Eigen::VectorXd ks(D);
      for (int a = 0; a < D; ++a) {
        ks(a) = gpshield::rbf_kernel(X.row(a).transpose(), x, h);
        for (int b = 0; b < D; ++b) {
          K(a, b) = gpshield::rbf_kernel(X.row(a).transpose(),
                                         X.row(b).transpose(), h);
        }
      }
      K.diagonal().array() += h.noise_variance;
      const Eigen::MatrixXd K_inv = K.inverse();
      const double mean =
          ks.dot(K_inv * model.snapshot_targets().col(output));
      const double var = h.signal_variance - ks.dot(K_inv * ks);
      REQUIRE_NEAR(pred.mean(output), mean, 1e-8,
                   "posterior mean matches the transcription");
      REQUIRE_NEAR(pred.cov(output, output), var, 1e-8,
                   "posterior variance matches the transcription");
    }
    REQUIRE(pred.cov(0, 1) == 0.0,
            "output dimensions are conditionally independent");
  }
  test_done("deterministic prediction");
}

void test_uncertain_reduces_to_deterministic() {
  GpModel model = make_seeded_model();
  const Eigen::VectorXd x = vec({0.3, -0.8, 0.5});
  const GaussianBelief det = model.predict_deterministic(x);

  JointInputBelief sharp;
  sharp.mean = x;
  sharp.cov = Eigen::MatrixXd::Zero(3, 3);
  const UncertainPrediction exact = model.predict_uncertain(sharp);
  for (int i = 0; i < 2; ++i) {
    REQUIRE_NEAR(exact.mean(i), det.mean(i), 1e-10,
                 "zero input covariance mean reduction");
    REQUIRE_NEAR(exact.cov(i, i), det.cov(i, i), 1e-10,
                 "zero input covariance variance reduction");
  }
  REQUIRE_NEAR(exact.cov(0, 1), 0.0, 1e-10, "off-diagonal vanishes");
  REQUIRE(exact.input_output_cross.norm() <= 1e-12,
          "no input spread means no cross covariance");

  sharp.cov = 1e-12 * Eigen::MatrixXd::Identity(3, 3);
  const UncertainPrediction nearly = model.predict_uncertain(sharp);
  REQUIRE((nearly.mean - det.mean).cwiseAbs().maxCoeff() <= 1e-6,
          "tiny input covariance stays within 1e-6 of deterministic");
  test_done("uncertain prediction reduction");
}

void test_uncertain_against_monte_carlo() {
  GpModel model = make_seeded_model();
  JointInputBelief input;
  input.mean = vec({0.4, -0.5, 0.2});
  Eigen::MatrixXd S(3, 3);
  S << 0.30, 0.05, -0.02,
       0.02, 0.25, 0.04,
      -0.03, 0.01, 0.20;
  input.cov = S * S.transpose();

  const UncertainPrediction analytic = model.predict_uncertain(input);

  const int N = 100000;
  RngStream rng(406);
  const GaussianBelief belief(input.mean, input.cov);
  Eigen::MatrixXd means(N, 2);
  Eigen::MatrixXd vars(N, 2);
  Eigen::MatrixXd draws(N, 3);
  for (int s = 0; s < N; ++s) {
    const Eigen::VectorXd x = gpshield::sample_mvn(belief, rng);
    const GaussianBelief pred = model.predict_deterministic(x);
    draws.row(s) = x.transpose();
    means.row(s) = pred.mean.transpose();
    vars.row(s) << pred.cov(0, 0), pred.cov(1, 1);
  }

  for (int i = 0; i < 2; ++i) {
    const double se = standard_error(means.col(i));
    REQUIRE_NEAR(analytic.mean(i), means.col(i).mean(), 3.0 * se,
                 "mean within three Monte Carlo standard errors");
  }

  // law of total covariance: cov of means plus (diagonal) mean of variances
  const Eigen::RowVector2d mean_hat = means.colwise().mean();
  for (int i = 0; i < 2; ++i) {
    for (int j = i; j < 2; ++j) {
      Eigen::VectorXd contrib =
          ((means.col(i).array() - mean_hat(i)) *
           (means.col(j).array() - mean_hat(j)))
              .matrix();
      if (i == j) contrib += vars.col(i);
      const double se = standard_error(contrib);
      REQUIRE_NEAR(analytic.cov(i, j), contrib.mean(), 3.0 * se + 1e-12,
                   "covariance within three Monte Carlo standard errors");
    }
  }

  // input-delta cross covariance
  const Eigen::RowVector3d in_hat = draws.colwise().mean();
  for (int a = 0; a < 3; ++a) {
    for (int i = 0; i < 2; ++i) {
      const Eigen::VectorXd contrib =
          ((draws.col(a).array() - in_hat(a)) *
           (means.col(i).array() - mean_hat(i)))
              .matrix();
      const double se = standard_error(contrib);
      REQUIRE_NEAR(analytic.input_output_cross(a, i), contrib.mean(),
                   3.0 * se + 1e-12,
                   "cross covariance within three standard errors");
    }
  }
  test_done("uncertain prediction against Monte Carlo");
}

void test_uncertain_error_path() {
  GpModel model(2, 1, 10);
  RngStream rng(407);
  for (int a = 0; a < 5; ++a) {
    model.add(vec({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)}),
              vec({rng.gaussian()}));
  }
  model.set_hyperparams(0, make_hypers(1.0, {0.1, 0.1}, 0.01));
  model.refresh();
  JointInputBelief bad;
  bad.mean = vec({0.0, 0.0});
  bad.cov.resize(2, 2);
  bad.cov << 1.0, 2.0, 2.0, 1.0;  // indefinite
  REQUIRE_THROWS_AS(model.predict_uncertain(bad),
                    gpshield::NotPositiveDefinite,
                    "indefinite input covariance cannot factor");
  test_done("uncertain prediction error path");
}

void test_propagate_fixed_point_and_options() {
  // a model whose targets are exactly zero learns the zero delta
  GpModel still(3, 2, 50);
  RngStream rng(408);
  for (int a = 0; a < 20; ++a) {
    still.add(vec({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                   rng.uniform(-1.0, 1.0)}),
              vec({0.0, 0.0}));
  }
  still.set_hyperparams(0, make_hypers(1.0, {1.0, 1.0, 1.0}, 1e-6));
  still.set_hyperparams(1, make_hypers(1.0, {1.0, 1.0, 1.0}, 1e-6));
  still.refresh();

  const GaussianBelief state(vec({0.2, -0.1}),
                             Eigen::MatrixXd::Zero(2, 2));
  const GaussianBelief next =
      gpshield::propagate_state(still, state, vec({0.3}));
  REQUIRE(same_bits(next.mean, state.mean), "zero-delta model keeps the mean");

  // a fixed action equals the linear law with zero gain
  GpModel model = make_seeded_model();
  Eigen::MatrixXd S(2, 2);
  S << 0.2, 0.03, 0.03, 0.15;
  const GaussianBelief spread(vec({0.1, -0.4}), S * S.transpose());
  const GaussianBelief via_fixed =
      gpshield::propagate_state(model, spread, vec({0.25}));
  const GaussianBelief via_law = gpshield::propagate_state(
      model, spread, Eigen::MatrixXd::Zero(1, 2), vec({0.0, 0.0}),
      vec({0.25}));
  REQUIRE((via_fixed.mean - via_law.mean).norm() <= 1e-12 &&
              (via_fixed.cov - via_law.cov).norm() <= 1e-12,
          "zero-gain law and fixed action agree");

  // explicit process noise adds to the diagonal
  PropagateOptions options;
  options.process_noise = vec({0.02, 0.01});
  const GaussianBelief with_noise =
      gpshield::propagate_state(model, spread, vec({0.25}), options);
  Eigen::MatrixXd expected = via_fixed.cov;
  expected(0, 0) += 0.02;
  expected(1, 1) += 0.01;
  REQUIRE((with_noise.cov - expected).norm() <= 1e-12,
          "process noise lands on the diagonal");
  REQUIRE_THROWS_AS(
      gpshield::propagate_state(model, spread, vec({0.25}),
                                PropagateOptions{vec({0.1})}),
      gpshield::DomainError, "process noise dimension checked");
  test_done("propagation fixed points and options");
}

void test_propagate_against_monte_carlo() {
  GpModel model = make_seeded_model();
  Eigen::MatrixXd S(2, 2);
  S << 0.25, 0.04, -0.02, 0.20;
  const GaussianBelief state(vec({0.3, -0.2}), S * S.transpose());
  Eigen::MatrixXd K(1, 2);
  K << 0.4, -0.3;
  const Eigen::VectorXd x_eq = vec({0.1, 0.0});
  const Eigen::VectorXd u_eq = vec({0.05});

  const GaussianBelief analytic =
      gpshield::propagate_state(model, state, K, x_eq, u_eq);

  const int N = 100000;
  RngStream rng(409);
  Eigen::MatrixXd nexts(N, 2);
  for (int s = 0; s < N; ++s) {
    const Eigen::VectorXd x = gpshield::sample_mvn(state, rng);
    const Eigen::VectorXd u = u_eq - K * (x - x_eq);
    Eigen::VectorXd joint(3);
    joint << x, u;
    const GaussianBelief pred = model.predict_deterministic(joint);
    Eigen::VectorXd delta(2);
    for (int i = 0; i < 2; ++i) {
      delta(i) = pred.mean(i) +
                 std::sqrt(std::max(pred.cov(i, i), 0.0)) * rng.gaussian();
    }
    nexts.row(s) = (x + delta).transpose();
  }

  const Eigen::RowVector2d mean_hat = nexts.colwise().mean();
  for (int i = 0; i < 2; ++i) {
    const double se = standard_error(nexts.col(i));
    REQUIRE_NEAR(analytic.mean(i), mean_hat(i), 3.0 * se,
                 "propagated mean within three standard errors");
  }
  for (int i = 0; i < 2; ++i) {
    for (int j = i; j < 2; ++j) {
      const Eigen::VectorXd contrib =
          ((nexts.col(i).array() - mean_hat(i)) *
           (nexts.col(j).array() - mean_hat(j)))
              .matrix();
      const double se = standard_error(contrib);
      REQUIRE_NEAR(analytic.cov(i, j), contrib.mean(), 3.0 * se + 1e-12,
                   "propagated covariance within three standard errors");
    }
  }
  test_done("propagation against Monte Carlo");
}

void test_rff_prior_covariance() {
  GpModel empty(2, 1, 10);
  empty.set_hyperparams(0, make_hypers(1.2, {1.0, 0.8}, 0.01));
  empty.refresh();
  const Eigen::VectorXd x1 = vec({0.0, 0.0});
  const Eigen::VectorXd x2 = vec({0.9, 0.4});
  const double k11 = gpshield::rbf_kernel(x1, x1, empty.hyperparams(0));
  const double k12 = gpshield::rbf_kernel(x1, x2, empty.hyperparams(0));

  const int S = 2000;
  RngStream rng(410);
  Eigen::VectorXd v1(S), v2(S);
  for (int s = 0; s < S; ++s) {
    RngStream draw = rng.substream(static_cast<std::uint64_t>(s));
    const RffPosteriorSample sample(empty, 500, draw);
    v1(s) = sample.value(0, x1);
    v2(s) = sample.value(0, x2);
  }
  const double m1 = v1.mean();
  const double m2 = v2.mean();
  const double c11 = ((v1.array() - m1) * (v1.array() - m1)).mean();
  const double c12 = ((v1.array() - m1) * (v2.array() - m2)).mean();
  REQUIRE_NEAR(c11, k11, 0.1 * k11, "prior variance within 10 percent");
  REQUIRE_NEAR(c12, k12, 0.1 * k11, "prior covariance within 10 percent");
  test_done("posterior sample prior covariance");
}

void test_rff_posterior_concentration() {
  GpModel model(2, 1, 50);
  RngStream data_rng(411);
  for (int a = 0; a < 20; ++a) {
    const Eigen::VectorXd x = vec({data_rng.uniform(-2.0, 2.0),
                                   data_rng.uniform(-2.0, 2.0)});
    model.add(x, vec({std::sin(x(0)) * std::cos(x(1))}));
  }
  model.set_hyperparams(0, make_hypers(1.0, {1.0, 1.0}, 1e-4));
  model.refresh();

  const Eigen::VectorXd probe = model.snapshot_inputs().row(7).transpose();
  const double target = model.snapshot_targets()(7, 0);
  const GaussianBelief post = model.predict_deterministic(probe);
  const double post_std = std::sqrt(std::max(post.cov(0, 0), 1e-12));

  const int S = 500;
  RngStream rng(412);
  Eigen::VectorXd values(S);
  for (int s = 0; s < S; ++s) {
    RngStream draw = rng.substream(static_cast<std::uint64_t>(s));
    const RffPosteriorSample sample(model, 500, draw);
    values(s) = sample.value(0, probe);
  }
  const double mean = values.mean();
  const double stddev = std::sqrt(
      (values.array() - mean).square().sum() / static_cast<double>(S - 1));
  REQUIRE_NEAR(mean, target, 3.0 * (stddev / std::sqrt(double(S))) + 3.0 * post_std,
               "samples center on the training target");
  REQUIRE(stddev <= 3.0 * post_std,
          "sample spread stays within three posterior deviations");
  test_done("posterior sample concentration at data");
}

void test_rff_determinism_and_mean() {
  GpModel model = make_seeded_model();
  RngStream rng(413);
  const RffPosteriorSample sample(model, 300, rng);
  const Eigen::VectorXd x = vec({0.2, 0.4, -0.1});
  REQUIRE(sample.value(0, x) == sample.value(0, x),
          "one sample is a fixed function");
  const Eigen::VectorXd both = sample.value(x);
  REQUIRE(both(0) == sample.value(0, x) && both(1) == sample.value(1, x),
          "vector evaluation matches per-output evaluation");

  // the average over many draws recovers the posterior mean
  const int S = 2000;
  RngStream many(414);
  Eigen::MatrixXd values(S, 2);
  for (int s = 0; s < S; ++s) {
    RngStream draw = many.substream(static_cast<std::uint64_t>(s));
    const RffPosteriorSample f(model, 500, draw);
    values.row(s) = f.value(x).transpose();
  }
  const GaussianBelief post = model.predict_deterministic(x);
  for (int i = 0; i < 2; ++i) {
    const double se = standard_error(values.col(i));
    REQUIRE_NEAR(values.col(i).mean(), post.mean(i), 3.0 * se + 0.01,
                 "sample average matches the posterior mean");
  }
  test_done("posterior sample determinism and mean");
}

void test_checkpoint_roundtrip() {
  GpModel model = make_seeded_model(25);
  model.fit(10, 0.01);
  const std::string path = "test_gp_checkpoint.bin";
  model.save_checkpoint(path);
  const GpModel loaded = GpModel::load_checkpoint(path);

  REQUIRE(loaded.input_dim() == 3 && loaded.output_dim() == 2 &&
              loaded.capacity() == 1000,
          "dimensions survive the round trip");
  REQUIRE(loaded.size() == model.size() &&
              loaded.fitted_size() == model.fitted_size(),
          "buffer contents survive the round trip");
  REQUIRE(same_bits(loaded.snapshot_inputs(), model.snapshot_inputs()) &&
              same_bits(loaded.snapshot_targets(), model.snapshot_targets()),
          "snapshot is bit-identical");
  for (int i = 0; i < 2; ++i) {
    const RbfHyperparams& a = model.hyperparams(i);
    const RbfHyperparams& b = loaded.hyperparams(i);
    REQUIRE(a.signal_variance == b.signal_variance &&
                a.noise_variance == b.noise_variance &&
                same_bits(a.length_scales, b.length_scales),
            "hyperparameters are bit-identical");
  }

  RngStream rng(415);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd x(3);
    for (int c = 0; c < 3; ++c) x(c) = rng.uniform(-2.0, 2.0);
    const GaussianBelief a = model.predict_deterministic(x);
    const GaussianBelief b = loaded.predict_deterministic(x);
    REQUIRE(same_bits(a.mean, b.mean) && same_bits(a.cov, b.cov),
            "deterministic predictions are bit-identical");
  }
  JointInputBelief belief;
  belief.mean = vec({0.1, 0.2, -0.3});
  belief.cov = 0.04 * Eigen::MatrixXd::Identity(3, 3);
  const UncertainPrediction ua = model.predict_uncertain(belief);
  const UncertainPrediction ub = loaded.predict_uncertain(belief);
  REQUIRE(same_bits(ua.mean, ub.mean) && same_bits(ua.cov, ub.cov) &&
              same_bits(ua.input_output_cross, ub.input_output_cross),
          "uncertain predictions are bit-identical");

  std::remove(path.c_str());
  REQUIRE_THROWS_AS(GpModel::load_checkpoint(path), gpshield::ConfigError,
                    "missing checkpoint file is reported");
  std::ofstream(path) << "not a checkpoint";
  REQUIRE_THROWS_AS(GpModel::load_checkpoint(path), gpshield::ConfigError,
                    "garbage checkpoint is rejected");
  std::remove(path.c_str());
  test_done("checkpoint round trip");
}

void test_buffer_and_validation() {
  GpModel model(2, 1, 5);
  for (int a = 0; a < 7; ++a) {
    model.add(vec({double(a), 0.0}), vec({double(a)}));
  }
  REQUIRE(model.size() == 5, "buffer evicts beyond capacity");
  model.set_hyperparams(0, make_hypers(1.0, {1.0, 1.0}, 0.01));
  model.refresh();
  REQUIRE(model.snapshot_inputs()(0, 0) == 2.0,
          "the oldest points were dropped first");

  // data added after a snapshot does not change predictions until refresh
  const GaussianBelief before = model.predict_deterministic(vec({10.0, 0.0}));
  model.add(vec({10.0, 0.0}), vec({42.0}));
  const GaussianBelief after = model.predict_deterministic(vec({10.0, 0.0}));
  REQUIRE(same_bits(before.mean, after.mean) &&
              same_bits(before.cov, after.cov),
          "predictions bind to the snapshot");
  model.refresh();
  const GaussianBelief fresh = model.predict_deterministic(vec({10.0, 0.0}));
  REQUIRE(std::abs(fresh.mean(0) - 42.0) < 1.0,
          "refresh exposes the new data");

  REQUIRE_THROWS_AS(model.add(vec({1.0}), vec({0.0})), gpshield::DomainError,
                    "input dimension checked");
  REQUIRE_THROWS_AS(
      model.add(vec({std::nan(""), 0.0}), vec({0.0})), gpshield::DomainError,
      "non-finite data rejected");
  REQUIRE_THROWS_AS(model.hyperparams(3), gpshield::DomainError,
                    "output index checked");
  RbfHyperparams bad = make_hypers(1.0, {1.0, -1.0}, 0.01);
  REQUIRE_THROWS_AS(model.set_hyperparams(0, bad), gpshield::DomainError,
                    "negative length scale rejected");

  GpModel hollow(2, 1, 5);
  hollow.refresh();
  REQUIRE_THROWS_AS(hollow.log_marginal_likelihood(0), gpshield::EmptyBuffer,
                    "likelihood needs data");
  REQUIRE_THROWS_AS(hollow.gram_solve(0, Eigen::VectorXd::Zero(0)),
                    gpshield::EmptyBuffer, "gram solve needs data");
  test_done("buffer semantics and validation");
}

}  // namespace

int main() {
  test_kernel();
  test_cached_beta_matches_direct_solve();
  test_evidence_gradient_finite_difference();
  test_fit_recovers_known_hyperparameters();
  test_fit_noop_and_validation();
  test_predict_deterministic();
  test_uncertain_reduces_to_deterministic();
  test_uncertain_against_monte_carlo();
  test_uncertain_error_path();
  test_propagate_fixed_point_and_options();
  test_propagate_against_monte_carlo();
  test_rff_prior_covariance();
  test_rff_determinism_and_mean();
  test_rff_posterior_concentration();
  test_checkpoint_roundtrip();
  test_buffer_and_validation();
  std::cout << "all gp tests passed" << std::endl;
  return 0;
}
