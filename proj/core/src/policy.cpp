#include "gpshield/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <utility>

#include "gpshield/errors.hpp"

namespace gpshield {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

}  // namespace

double symlog(double x) {
  return x >= 0.0 ? std::log1p(x) : -std::log1p(-x);
}

double symexp(double z) {
  return z >= 0.0 ? std::expm1(z) : -std::expm1(-z);
}

GaeResult gae(const Eigen::VectorXd& rewards, const Eigen::VectorXd& values,
              double bootstrap_value, double gamma, double lambda) {
  const Eigen::Index n = rewards.size();
  if (values.size() != n) {
    throw DomainError("rewards and values must have equal length");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0) || !(lambda >= 0.0 && lambda <= 1.0)) {
    throw DomainError("gamma and lambda must lie in [0, 1]");
  }
  if (!std::isfinite(bootstrap_value)) {
    throw DomainError("bootstrap value must be finite");
  }
  GaeResult out;
  out.advantages.resize(n);
  double next_value = bootstrap_value;
  double next_adv = 0.0;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const double delta = rewards(t) + gamma * next_value - values(t);
    next_adv = delta + gamma * lambda * next_adv;
    out.advantages(t) = next_adv;
    next_value = values(t);
  }
  out.returns = out.advantages + values;
  return out;
}

GaussianPolicy::GaussianPolicy(int state_dim, const Box& action_space,
                               int hidden_units, RngStream& rng)
    : net_(state_dim, hidden_units, std::max(action_space.dim(), 1), rng),
      action_space_(action_space) {
  const int m = action_space.dim();
  if (m <= 0) throw DomainError("action space must not be empty");
  log_std_.resize(m);
  for (int d = 0; d < m; ++d) {
    const double lo = action_space.lo(d);
    const double hi = action_space.hi(d);
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(hi > lo)) {
      throw DomainError("policy needs finite action bounds");
    }
    log_std_(d) = std::log(0.5 * (hi - lo));
  }
}

Eigen::VectorXd GaussianPolicy::mean(const Eigen::VectorXd& state) const {
  return net_.forward(state);
}

PolicyAction GaussianPolicy::act(const Eigen::VectorXd& state,
                                 RngStream& rng) const {
  const Eigen::VectorXd mu = net_.forward(state);
  const Eigen::ArrayXd sigma = log_std_.array().exp();
  Eigen::VectorXd noise(action_dim());
  for (int d = 0; d < action_dim(); ++d) noise(d) = rng.gaussian();
  PolicyAction out;
  out.raw = mu + (sigma * noise.array()).matrix();
  out.clipped = action_space_.clamp(out.raw);
  const Eigen::ArrayXd standardized = (out.raw - mu).array() / sigma;
  out.log_prob = -0.5 * action_dim() * kLog2Pi - log_std_.sum() -
                 0.5 * standardized.square().sum();
  return out;
}

double GaussianPolicy::log_prob(const Eigen::VectorXd& state,
                                const Eigen::VectorXd& raw_action) const {
  if (raw_action.size() != action_dim()) {
    throw DomainError("action has the wrong dimension");
  }
  const Eigen::VectorXd mu = net_.forward(state);
  const Eigen::ArrayXd standardized =
      (raw_action - mu).array() / log_std_.array().exp();
  return -0.5 * action_dim() * kLog2Pi - log_std_.sum() -
         0.5 * standardized.square().sum();
}

double GaussianPolicy::entropy() const {
  return log_std_.sum() + 0.5 * action_dim() * (1.0 + kLog2Pi);
}

Eigen::VectorXd GaussianPolicy::params() const {
  Eigen::VectorXd flat(param_count());
  flat.head(net_.param_count()) = net_.params();
  flat.tail(action_dim()) = log_std_;
  return flat;
}

void GaussianPolicy::set_params(const Eigen::VectorXd& flat) {
  if (flat.size() != param_count()) {
    throw DomainError("parameter vector has the wrong length");
  }
  net_.set_params(flat.head(net_.param_count()));
  log_std_ = flat.tail(action_dim());
}

ValueCritic::ValueCritic(int state_dim, int hidden_units, RngStream& rng)
    : net_(state_dim, hidden_units, 1, rng) {}

double ValueCritic::value(const Eigen::VectorXd& state) const {
  return net_.forward(state)(0);
}

ReplayBuffer::ReplayBuffer(int capacity, const Box& state_space,
                           int bins_per_dim)
    : capacity_(capacity), bins_(bins_per_dim), space_(state_space) {
  if (capacity <= 0) throw DomainError("replay capacity must be positive");
  if (bins_per_dim < 1) throw DomainError("bins per dimension must be >= 1");
  if (space_.dim() == 0) throw DomainError("state space must not be empty");
  bool all_finite = true;
  for (int d = 0; d < space_.dim(); ++d) {
    if (!std::isfinite(space_.lo(d)) || !std::isfinite(space_.hi(d))) {
      all_finite = false;
    }
  }
  if (all_finite) {
    edge_lo_ = space_.lo;
    edge_hi_ = space_.hi;
    frozen_ = true;
  }
}

void ReplayBuffer::add(const Transition& t) {
  if (t.state.size() != space_.dim()) {
    throw DomainError("transition state has the wrong dimension");
  }
  if (static_cast<int>(data_.size()) < capacity_) {
    data_.push_back(t);
  } else {
    data_[static_cast<std::size_t>(next_)] = t;
    next_ = (next_ + 1) % capacity_;
  }
  ++added_;
  if (frozen_) ++visits_[bin_of(t.state)];
}

const Transition& ReplayBuffer::at(int i) const {
  if (i < 0 || i >= size()) throw IndexError("replay index out of range");
  return data_[static_cast<std::size_t>(i)];
}

long ReplayBuffer::bin_of(const Eigen::VectorXd& x) const {
  long id = 0;
  for (int d = 0; d < space_.dim(); ++d) {
    const double lo = edge_lo_(d);
    const double hi = edge_hi_(d);
    int b;
    if (x(d) < lo) {
      b = 0;
    } else if (x(d) > hi) {
      b = bins_ + 1;
    } else {
      const double width = hi - lo;
      b = width > 0.0
              ? 1 + std::min(bins_ - 1,
                             static_cast<int>((x(d) - lo) / width * bins_))
              : 1;
    }
    id = id * (bins_ + 2) + b;
  }
  return id;
}

void ReplayBuffer::freeze_edges() {
  if (frozen_) return;
  edge_lo_ = space_.lo;
  edge_hi_ = space_.hi;
  for (int d = 0; d < space_.dim(); ++d) {
    if (std::isfinite(edge_lo_(d)) && std::isfinite(edge_hi_(d))) continue;
    double lo = data_.front().state(d);
    double hi = lo;
    for (const Transition& t : data_) {
      lo = std::min(lo, t.state(d));
      hi = std::max(hi, t.state(d));
    }
    if (!(hi > lo)) {
      lo -= 0.5;
      hi += 0.5;
    }
    edge_lo_(d) = lo;
    edge_hi_(d) = hi;
  }
  frozen_ = true;
  visits_.clear();
  for (const Transition& t : data_) ++visits_[bin_of(t.state)];
}

Eigen::VectorXd ReplayBuffer::sampling_weights() {
  if (empty()) throw EmptyBuffer("replay buffer is empty");
  freeze_edges();
  Eigen::VectorXd w(size());
  for (int i = 0; i < size(); ++i) {
    w(i) = 1.0 /
           static_cast<double>(visits_.at(bin_of(data_[static_cast<std::size_t>(i)].state)));
  }
  w /= w.sum();
  return w;
}

std::vector<Eigen::VectorXd> ReplayBuffer::sample_starts(int count,
                                                         RngStream& rng) {
  if (count < 0) throw DomainError("sample count must be non-negative");
  if (empty()) throw EmptyBuffer("replay buffer is empty");
  const Eigen::VectorXd w = sampling_weights();
  Eigen::VectorXd cum(w.size());
  double run = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    run += w(i);
    cum(i) = run;
  }
  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const double u = rng.uniform() * run;
    const double* hit = std::upper_bound(cum.data(), cum.data() + cum.size(), u);
    Eigen::Index idx = hit - cum.data();
    if (idx >= cum.size()) idx = cum.size() - 1;
    out.push_back(data_[static_cast<std::size_t>(idx)].state);
  }
  return out;
}

double ImaginedRollout::reward_sum() const {
  double total = 0.0;
  for (const ImaginedStep& s : steps) total += s.reward;
  return total;
}

std::vector<ImaginedRollout> imagine_rollouts(
    const GpModel& model, const GaussianPolicy& policy, const Environment& env,
    const std::vector<Eigen::VectorXd>& starts, const SafeSet& safe,
    const ImagineOptions& options, RngStream& rng) {
  if (options.horizon < 0) throw DomainError("imagination horizon must be >= 0");
  if (options.posterior_samples < 1) {
    throw DomainError("need at least one posterior sample");
  }
  if (options.rff_features < 1) {
    throw DomainError("need at least one random feature");
  }
  const int n = env.state_dim();
  const int m = env.action_dim();
  if (model.input_dim() != n + m || model.output_dim() != n) {
    throw DomainError("dynamics model does not match the environment");
  }
  if (policy.state_dim() != n || policy.action_dim() != m) {
    throw DomainError("policy does not match the environment");
  }

  std::vector<ImaginedRollout> out;
  out.reserve(starts.size() * static_cast<std::size_t>(options.posterior_samples));
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const Eigen::VectorXd& s0 = starts[i];
    if (s0.size() != n) throw DomainError("start state has the wrong dimension");
    for (int p = 0; p < options.posterior_samples; ++p) {
      ImaginedRollout rollout;
      rollout.start = s0;
      if (!safe.contains(s0)) {
        rollout.final_state = s0;
        rollout.truncated_unsafe = true;
        out.push_back(std::move(rollout));
        continue;
      }
      std::optional<RffPosteriorSample> path;
      if (!options.mean_propagation) {
        RngStream f_rng = rng.substream({static_cast<std::uint64_t>(i),
                                         static_cast<std::uint64_t>(p), 0});
        path.emplace(model, options.rff_features, f_rng);
      }
      RngStream a_rng = rng.substream({static_cast<std::uint64_t>(i),
                                       static_cast<std::uint64_t>(p), 1});
      Eigen::VectorXd x = s0;
      Eigen::VectorXd input(n + m);
      for (int t = 0; t < options.horizon; ++t) {
        const PolicyAction action = policy.act(x, a_rng);
        input << x, action.clipped;
        const Eigen::VectorXd delta = options.mean_propagation
                                          ? model.predict_deterministic(input).mean
                                          : path->value(input);
        const Eigen::VectorXd next = x + delta;
        const bool ok = next.allFinite() && safe.contains(next);
        ImaginedStep step;
        step.state = x;
        step.action = action.raw;
        step.reward = ok ? env.reward(x, action.clipped, next) : 0.0;
        step.next_safe = ok;
        rollout.steps.push_back(std::move(step));
        x = next;
        if (!ok) {
          rollout.truncated_unsafe = true;
          break;
        }
      }
      rollout.final_state = x;
      out.push_back(std::move(rollout));
    }
  }
  return out;
}

double actor_loss_and_grad(const GaussianPolicy& policy,
                           const ActorBatch& batch, double entropy_coef,
                           Eigen::VectorXd& grad) {
  const std::size_t count = batch.states.size();
  if (count == 0 || batch.actions.size() != count ||
      batch.advantages.size() != static_cast<Eigen::Index>(count)) {
    throw DomainError("actor batch is empty or inconsistent");
  }
  if (entropy_coef < 0.0) throw DomainError("entropy coefficient must be >= 0");
  const double batch_size = static_cast<double>(count);
  const int net_params = policy.net().param_count();
  const int m = policy.action_dim();
  const Eigen::ArrayXd log_sigma = policy.log_std().array();
  const Eigen::ArrayXd inv_var = (-2.0 * log_sigma).exp();

  Eigen::VectorXd net_grad = Eigen::VectorXd::Zero(net_params);
  Eigen::ArrayXd std_grad = Eigen::ArrayXd::Zero(m);
  double weighted_logp = 0.0;
  Mlp::Workspace ws;
  for (std::size_t b = 0; b < count; ++b) {
    const Eigen::VectorXd mu = policy.net().forward(batch.states[b], ws);
    const Eigen::ArrayXd diff = (batch.actions[b] - mu).array();
    const double adv = batch.advantages(static_cast<Eigen::Index>(b));
    const double logp = -0.5 * m * kLog2Pi - log_sigma.sum() -
                        0.5 * (diff.square() * inv_var).sum();
    weighted_logp += adv * logp;
    const Eigen::VectorXd dmu = (-adv / batch_size) * (diff * inv_var).matrix();
    policy.net().backward(ws, dmu, net_grad);
    std_grad += (-adv / batch_size) * (diff.square() * inv_var - 1.0);
  }
  std_grad -= entropy_coef;

  grad.resize(policy.param_count());
  grad.head(net_params) = net_grad;
  grad.tail(m) = std_grad.matrix();
  return -weighted_logp / batch_size - entropy_coef * policy.entropy();
}

double critic_loss_and_grad(const ValueCritic& critic, const CriticBatch& batch,
                            double reg_coef, Eigen::VectorXd& grad) {
  const std::size_t count = batch.states.size();
  if (count == 0 ||
      batch.targets.size() != static_cast<Eigen::Index>(count) ||
      batch.reg_targets.size() != static_cast<Eigen::Index>(count)) {
    throw DomainError("critic batch is empty or inconsistent");
  }
  if (reg_coef < 0.0) throw DomainError("regularizer coefficient must be >= 0");
  const double batch_size = static_cast<double>(count);

  grad = Eigen::VectorXd::Zero(critic.param_count());
  double loss = 0.0;
  Mlp::Workspace ws;
  Eigen::VectorXd dy(1);
  for (std::size_t b = 0; b < count; ++b) {
    const double v = critic.net().forward(batch.states[b], ws)(0);
    const double fit_err = v - batch.targets(static_cast<Eigen::Index>(b));
    const double reg_err = v - batch.reg_targets(static_cast<Eigen::Index>(b));
    loss += (fit_err * fit_err + reg_coef * reg_err * reg_err) / batch_size;
    dy(0) = 2.0 * (fit_err + reg_coef * reg_err) / batch_size;
    critic.net().backward(ws, dy, grad);
  }
  return loss;
}

namespace {

void validate_update_config(const UpdateConfig& c) {
  if (!(c.gamma > 0.0 && c.gamma <= 1.0)) {
    throw DomainError("gamma must lie in (0, 1]");
  }
  if (!(c.lambda >= 0.0 && c.lambda <= 1.0)) {
    throw DomainError("lambda must lie in [0, 1]");
  }
  if (!(c.entropy_coef >= 0.0) || !(c.critic_reg >= 0.0)) {
    throw DomainError("loss coefficients must be >= 0");
  }
  if (!(c.clip_norm > 0.0)) throw DomainError("clip norm must be positive");
  if (!(c.polyak_tau > 0.0 && c.polyak_tau <= 1.0)) {
    throw DomainError("polyak tau must lie in (0, 1]");
  }
  if (c.iterations < 1) throw DomainError("need at least one iteration");
}

}  // namespace

A2cTrainer::A2cTrainer(GaussianPolicy policy, ValueCritic critic,
                       UpdateConfig config)
    : policy_(std::move(policy)),
      critic_(std::move(critic)),
      target_(critic_),
      config_(config),
      actor_opt_(policy_.param_count(), config.actor_lr),
      critic_opt_(critic_.param_count(), config.critic_lr) {
  validate_update_config(config_);
  if (policy_.state_dim() != critic_.state_dim()) {
    throw DomainError("policy and critic disagree on the state dimension");
  }
}

UpdateReport A2cTrainer::update(const std::vector<ImaginedRollout>& rollouts) {
  if (rollouts.empty()) throw DomainError("update needs at least one rollout");
  int transitions = 0;
  double return_sum = 0.0;
  for (const ImaginedRollout& r : rollouts) {
    transitions += static_cast<int>(r.steps.size());
    return_sum += r.reward_sum();
  }
  if (transitions == 0) {
    throw DomainError("imagined rollouts contain no transitions");
  }

  UpdateReport report;
  report.transitions = transitions;
  report.mean_return = return_sum / static_cast<double>(rollouts.size());

  ActorBatch actor_batch;
  CriticBatch critic_batch;
  actor_batch.states.reserve(static_cast<std::size_t>(transitions));
  actor_batch.actions.reserve(static_cast<std::size_t>(transitions));
  critic_batch.states.reserve(static_cast<std::size_t>(transitions));
  std::vector<double> advantages, targets, reg_targets;
  advantages.reserve(static_cast<std::size_t>(transitions));
  targets.reserve(static_cast<std::size_t>(transitions));
  reg_targets.reserve(static_cast<std::size_t>(transitions));

  for (int iter = 0; iter < config_.iterations; ++iter) {
    actor_batch.states.clear();
    actor_batch.actions.clear();
    critic_batch.states.clear();
    advantages.clear();
    targets.clear();
    reg_targets.clear();

    for (const ImaginedRollout& r : rollouts) {
      const Eigen::Index length = static_cast<Eigen::Index>(r.steps.size());
      if (length == 0) continue;
      Eigen::VectorXd rewards(length), values(length);
      for (Eigen::Index t = 0; t < length; ++t) {
        rewards(t) = r.steps[static_cast<std::size_t>(t)].reward;
        values(t) =
            symexp(critic_.value(r.steps[static_cast<std::size_t>(t)].state));
      }
      const double bootstrap =
          r.truncated_unsafe ? 0.0 : symexp(critic_.value(r.final_state));
      const GaeResult g =
          gae(rewards, values, bootstrap, config_.gamma, config_.lambda);
      for (Eigen::Index t = 0; t < length; ++t) {
        const ImaginedStep& step = r.steps[static_cast<std::size_t>(t)];
        actor_batch.states.push_back(step.state);
        actor_batch.actions.push_back(step.action);
        critic_batch.states.push_back(step.state);
        advantages.push_back(g.advantages(t));
        targets.push_back(symlog(g.returns(t)));
        reg_targets.push_back(target_.value(step.state));
      }
    }

    actor_batch.advantages = Eigen::Map<const Eigen::VectorXd>(
        advantages.data(), static_cast<Eigen::Index>(advantages.size()));
    critic_batch.targets = Eigen::Map<const Eigen::VectorXd>(
        targets.data(), static_cast<Eigen::Index>(targets.size()));
    critic_batch.reg_targets = Eigen::Map<const Eigen::VectorXd>(
        reg_targets.data(), static_cast<Eigen::Index>(reg_targets.size()));

    Eigen::VectorXd actor_grad, critic_grad;
    report.actor_loss = actor_loss_and_grad(policy_, actor_batch,
                                            config_.entropy_coef, actor_grad);
    report.critic_loss = critic_loss_and_grad(critic_, critic_batch,
                                              config_.critic_reg, critic_grad);
    report.actor_grad_norm = clip_grad_norm(actor_grad, config_.clip_norm);
    report.critic_grad_norm = clip_grad_norm(critic_grad, config_.clip_norm);

    Eigen::VectorXd actor_params = policy_.params();
    actor_opt_.step(actor_params, actor_grad);
    policy_.set_params(actor_params);
    Eigen::VectorXd critic_params = critic_.params();
    critic_opt_.step(critic_params, critic_grad);
    critic_.set_params(critic_params);
    target_.set_params(config_.polyak_tau * critic_.params() +
                       (1.0 - config_.polyak_tau) * target_.params());
  }
  report.entropy = policy_.entropy();
  return report;
}

namespace {

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_vec(std::ostream& out, const Eigen::VectorXd& v) {
  write_u64(out, static_cast<std::uint64_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw ConfigError("checkpoint truncated");
  return v;
}

Eigen::VectorXd read_vec(std::istream& in, std::uint64_t expected) {
  const std::uint64_t size = read_u64(in);
  if (size != expected) throw ConfigError("checkpoint vector size mismatch");
  Eigen::VectorXd v(static_cast<Eigen::Index>(size));
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(size * sizeof(double)));
  if (!in) throw ConfigError("checkpoint truncated");
  return v;
}

constexpr char kCheckpointMagic[8] = {'A', '2', 'C', 'T', '0', '0', '0', '1'};

}  // namespace

void A2cTrainer::save_checkpoint(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open checkpoint for writing: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_u64(out, static_cast<std::uint64_t>(policy_.state_dim()));
  write_u64(out, static_cast<std::uint64_t>(policy_.action_dim()));
  write_u64(out, static_cast<std::uint64_t>(policy_.net().hidden_units()));
  write_vec(out, policy_.action_space().lo);
  write_vec(out, policy_.action_space().hi);
  write_vec(out, policy_.params());
  write_vec(out, critic_.params());
  write_vec(out, target_.params());
  write_u64(out, static_cast<std::uint64_t>(actor_opt_.steps_taken()));
  write_vec(out, actor_opt_.first_moment());
  write_vec(out, actor_opt_.second_moment());
  write_u64(out, static_cast<std::uint64_t>(critic_opt_.steps_taken()));
  write_vec(out, critic_opt_.first_moment());
  write_vec(out, critic_opt_.second_moment());
  if (!out) throw ConfigError("failed to write checkpoint: " + path);
}

A2cTrainer A2cTrainer::load_checkpoint(const std::string& path,
                                       const UpdateConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kCheckpointMagic)) {
    throw ConfigError("not a policy checkpoint: " + path);
  }
  const auto state_dim = static_cast<int>(read_u64(in));
  const auto action_dim = static_cast<int>(read_u64(in));
  const auto hidden = static_cast<int>(read_u64(in));
  if (state_dim <= 0 || action_dim <= 0 || hidden <= 0) {
    throw ConfigError("checkpoint has invalid dimensions");
  }
  Box action_space;
  action_space.lo = read_vec(in, static_cast<std::uint64_t>(action_dim));
  action_space.hi = read_vec(in, static_cast<std::uint64_t>(action_dim));

  RngStream init_rng(0);
  GaussianPolicy policy(state_dim, action_space, hidden, init_rng);
  ValueCritic critic(state_dim, hidden, init_rng);
  policy.set_params(
      read_vec(in, static_cast<std::uint64_t>(policy.param_count())));
  critic.set_params(
      read_vec(in, static_cast<std::uint64_t>(critic.param_count())));
  const Eigen::VectorXd target_params =
      read_vec(in, static_cast<std::uint64_t>(critic.param_count()));

  A2cTrainer trainer(std::move(policy), std::move(critic), config);
  trainer.target_.set_params(target_params);
  const auto actor_steps = static_cast<int>(read_u64(in));
  const Eigen::VectorXd am = read_vec(
      in, static_cast<std::uint64_t>(trainer.policy_.param_count()));
  const Eigen::VectorXd av = read_vec(
      in, static_cast<std::uint64_t>(trainer.policy_.param_count()));
  trainer.actor_opt_.restore(am, av, actor_steps);
  const auto critic_steps = static_cast<int>(read_u64(in));
  const Eigen::VectorXd cm = read_vec(
      in, static_cast<std::uint64_t>(trainer.critic_.param_count()));
  const Eigen::VectorXd cv = read_vec(
      in, static_cast<std::uint64_t>(trainer.critic_.param_count()));
  trainer.critic_opt_.restore(cm, cv, critic_steps);
  return trainer;
}

}  // namespace gpshield
