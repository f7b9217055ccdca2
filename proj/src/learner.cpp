#include "d4pg/learner.hpp"

#include <cmath>
#include <string>

#include "d4pg/errors.hpp"

namespace d4pg {
namespace {

Eigen::MatrixXd stack_columns(const SampledBatch& batch,
                              const Eigen::VectorXd Transition::*field) {
  const auto m = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd out((batch.transitions.front().*field).size(), m);
  for (Eigen::Index i = 0; i < m; ++i) out.col(i) = batch.transitions[i].*field;
  return out;
}

constexpr double kOutputInitScale = 3e-3;

double inverse_softplus(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

void clip_norm(Gradients& g, double max_norm, double norm) {
  if (max_norm > 0.0 && norm > max_norm) g.scale(max_norm / norm);
}

}  // namespace

void LearnerConfig::validate() const {
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (nstep < 1) throw ConfigError("nstep must be >= 1");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) throw ConfigError("learning rates must be > 0");
  if (t_target < 1 || t_actors < 1) throw ConfigError("t_target and t_actors must be >= 1");
  if (head == HeadKind::kCategorical) make_support(atoms, v_min, v_max);
  if (head == HeadKind::kMixtureOfGaussians) {
    if (mixture_size < 1) throw ConfigError("mixture_size must be >= 1");
    if (mog_samples < 1) throw ConfigError("mog_samples must be >= 1");
  }
  if (!(v_min < v_max)) throw ConfigError("vmin must be < vmax");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("hidden layer sizes must be >= 1");
  }
}

int LearnerConfig::critic_output_dim() const {
  switch (head) {
    case HeadKind::kCategorical:
      return atoms;
    case HeadKind::kMixtureOfGaussians:
      return 3 * mixture_size;
    case HeadKind::kScalar:
      return 1;
  }
  return 1;
}

NetworkQuad make_networks(const LearnerConfig& config, const EnvSpec& env, std::uint64_t seed) {
  NetSpec actor_spec;
  actor_spec.layer_sizes.push_back(env.observation_dim);
  actor_spec.layer_sizes.insert(actor_spec.layer_sizes.end(), config.hidden.begin(),
                                config.hidden.end());
  actor_spec.layer_sizes.push_back(env.action_dim);
  actor_spec.output = Activation::kTanh;

  NetSpec critic_spec;
  critic_spec.layer_sizes.push_back(env.observation_dim + env.action_dim);
  critic_spec.layer_sizes.insert(critic_spec.layer_sizes.end(), config.hidden.begin(),
                                 config.hidden.end());
  critic_spec.layer_sizes.push_back(config.critic_output_dim());
  critic_spec.output = Activation::kIdentity;

  NetworkQuad nets;
  nets.actor = init_net(actor_spec, seed);
  nets.critic = init_net(critic_spec, seed ^ 0x9e3779b97f4a7c15ull);
  // Output layers start near zero: U(-3e-3, 3e-3).
  for (DenseNet* net : {&nets.actor, &nets.critic}) {
    auto& w = net->layers.back().weights;
    w *= kOutputInitScale * std::sqrt(static_cast<double>(w.cols()));
  }
  if (config.head == HeadKind::kMixtureOfGaussians) {
    // Spread the component means over the value range so every component
    // starts with a usable likelihood for returns anywhere in it.
    const int k = config.mixture_size;
    auto& bias = nets.critic.layers.back().bias;
    const double width = (config.v_max - config.v_min) / k;
    for (int i = 0; i < k; ++i) {
      bias[k + i] = config.v_min + (i + 0.5) * width;
      bias[2 * k + i] = inverse_softplus(width);
    }
  }
  nets.target_actor = nets.actor;
  nets.target_critic = nets.critic;
  return nets;
}

Learner::Learner(LearnerConfig config, EnvSpec env, std::uint64_t init_seed,
                 std::uint64_t sample_seed)
    : config_(std::move(config)), env_(std::move(env)), rng_(sample_seed) {
  config_.validate();
  support_ = make_support(std::max(config_.atoms, 2), config_.v_min, config_.v_max);
  nets_ = make_networks(config_, env_, init_seed);
  actor_adam_ = AdamState::for_net(nets_.actor);
  critic_adam_ = AdamState::for_net(nets_.critic);
}

Eigen::MatrixXd Learner::critic_inputs(const Eigen::MatrixXd& x, const Eigen::MatrixXd& a) const {
  Eigen::MatrixXd in(x.rows() + a.rows(), x.cols());
  in << x, a;
  return in;
}

Eigen::MatrixXd Learner::policy_batch(const DenseNet& actor, const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd a = forward_batch(actor, x).output;
  a = env_.bounds.half_range().asDiagonal() * a;
  a.colwise() += env_.bounds.center();
  return a;
}

Eigen::VectorXd Learner::expected_values(const Eigen::MatrixXd& critic_output) const {
  Eigen::VectorXd out(critic_output.cols());
  for (Eigen::Index i = 0; i < critic_output.cols(); ++i) {
    const Eigen::VectorXd col = critic_output.col(i);
    switch (config_.head) {
      case HeadKind::kCategorical:
        out[i] = categorical_mean(softmax(col), support_);
        break;
      case HeadKind::kMixtureOfGaussians:
        out[i] = mog_mean(MoGParams::from_flat(col));
        break;
      case HeadKind::kScalar:
        out[i] = col[0];
        break;
    }
  }
  return out;
}

double Learner::q_value(const Eigen::VectorXd& x, const Eigen::VectorXd& a) const {
  Eigen::VectorXd in(x.size() + a.size());
  in << x, a;
  return expected_values(forward(nets_.critic, in).output)[0];
}

Targets Learner::build_targets(const SampledBatch& batch) {
  const auto m = batch.size();
  Targets targets;
  targets.kind = config_.head;

  const Eigen::MatrixXd next_x = stack_columns(batch, &Transition::bootstrap_x);
  const Eigen::MatrixXd next_a = policy_batch(nets_.target_actor, next_x);
  const Eigen::MatrixXd next_out =
      forward_batch(nets_.target_critic, critic_inputs(next_x, next_a)).output;

  for (std::size_t i = 0; i < m; ++i) {
    const Transition& t = batch.transitions[i];
    const auto col = static_cast<Eigen::Index>(i);
    const bool bootstrap = t.effective_discount != 0.0;
    switch (config_.head) {
      case HeadKind::kCategorical: {
        if (!bootstrap) {
          targets.categorical.push_back(project_categorical(
              Eigen::VectorXd::Constant(1, t.cumulative_reward), Eigen::VectorXd::Ones(1),
              support_));
        } else {
          targets.categorical.push_back(project_categorical(
              bellman_shift(support_, t.cumulative_reward, t.effective_discount),
              softmax(next_out.col(col)), support_));
        }
        break;
      }
      case HeadKind::kScalar:
        targets.scalar.push_back(t.cumulative_reward +
                                 (bootstrap ? t.effective_discount * next_out(0, col) : 0.0));
        break;
      case HeadKind::kMixtureOfGaussians:
        targets.mog_samples.push_back(
            bootstrap ? mog_sample(MoGParams::from_flat(next_out.col(col)), rng_,
                                   config_.mog_samples)
                      : Eigen::VectorXd::Zero(config_.mog_samples));
        break;
    }
  }
  return targets;
}

CriticGradient Learner::critic_gradient(const SampledBatch& batch, const Targets& targets) const {
  const auto m = static_cast<Eigen::Index>(batch.size());
  const Eigen::MatrixXd x = stack_columns(batch, &Transition::x);
  const Eigen::MatrixXd a = stack_columns(batch, &Transition::a);
  const Forward fwd = forward_batch(nets_.critic, critic_inputs(x, a));

  CriticGradient out;
  Eigen::MatrixXd output_grad = Eigen::MatrixXd::Zero(fwd.output.rows(), m);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Transition& t = batch.transitions[i];
    const double w = batch.weights[i];
    double loss = 0.0;
    double priority_input = 0.0;
    switch (config_.head) {
      case HeadKind::kCategorical: {
        const LossAndGrad ce = categorical_cross_entropy(targets.categorical[i], fwd.output.col(i));
        loss = ce.loss;
        priority_input = ce.loss;
        output_grad.col(i) = (w * inv_m) * ce.grad;
        break;
      }
      case HeadKind::kScalar: {
        const ScalarLoss td = scalar_td_loss(fwd.output(0, i), targets.scalar[i]);
        loss = td.loss;
        priority_input = td.grad;  // q - y
        output_grad(0, i) = w * inv_m * td.grad;
        break;
      }
      case HeadKind::kMixtureOfGaussians: {
        const MoGLoss nll = mog_cross_entropy(MoGParams::from_flat(fwd.output.col(i)),
                                              t.cumulative_reward, t.effective_discount,
                                              targets.mog_samples[i]);
        loss = nll.loss;
        priority_input = nll.loss;
        if (nll.underflow) ++out.mog_underflows;
        output_grad.col(i) = (w * inv_m) * nll.grad.to_flat();
        break;
      }
    }
    if (!std::isfinite(loss)) {
      throw NumericalError("critic: non-finite loss at batch sample " + std::to_string(i) +
                           " (reward " + std::to_string(t.cumulative_reward) + ", discount " +
                           std::to_string(t.effective_discount) + ")");
    }
    out.loss += w * inv_m * loss;
    out.sample_losses.push_back(loss);
    out.priorities.push_back(priority_of(priority_input, config_.head));
  }
  out.grads = backward(nets_.critic, fwd.cache, output_grad);
  return out;
}

StepMetrics Learner::critic_step(const SampledBatch& batch, const Targets& targets) {
  CriticGradient g = critic_gradient(batch, targets);
  if (!g.grads.all_finite()) throw NumericalError("critic: non-finite gradient");
  StepMetrics metrics;
  metrics.critic_loss = g.loss;
  metrics.critic_grad_norm = std::sqrt(g.grads.squared_norm());
  metrics.priorities = std::move(g.priorities);
  metrics.mog_underflows = g.mog_underflows;
  clip_norm(g.grads, config_.max_grad_norm, metrics.critic_grad_norm);
  adam_update(nets_.critic, g.grads, critic_adam_, config_.critic_lr);
  return metrics;
}

ActorGradient Learner::actor_gradient(const SampledBatch& batch) const {
  const auto m = static_cast<Eigen::Index>(batch.size());
  const int act_dim = env_.action_dim;
  const Eigen::MatrixXd x = stack_columns(batch, &Transition::x);

  const Forward actor_fwd = forward_batch(nets_.actor, x);
  Eigen::MatrixXd a = env_.bounds.half_range().asDiagonal() * actor_fwd.output;
  a.colwise() += env_.bounds.center();
  const Forward critic_fwd = forward_batch(nets_.critic, critic_inputs(x, a));

  // d E[Z] / d(head parameters), averaged over the batch.
  ActorGradient out;
  Eigen::MatrixXd head_grad = Eigen::MatrixXd::Zero(critic_fwd.output.rows(), m);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::VectorXd col = critic_fwd.output.col(i);
    switch (config_.head) {
      case HeadKind::kCategorical: {
        const Eigen::VectorXd p = softmax(col);
        const double mean = p.dot(support_.atoms);
        out.objective += inv_m * mean;
        head_grad.col(i) = inv_m * p.cwiseProduct((support_.atoms.array() - mean).matrix());
        break;
      }
      case HeadKind::kMixtureOfGaussians: {
        const MoGParams params = MoGParams::from_flat(col);
        const Eigen::VectorXd w = params.weights();
        const double mean = w.dot(params.means);
        out.objective += inv_m * mean;
        const int k = params.size();
        head_grad.col(i).segment(0, k) =
            inv_m * w.cwiseProduct((params.means.array() - mean).matrix());
        head_grad.col(i).segment(k, k) = inv_m * w;
        break;
      }
      case HeadKind::kScalar:
        out.objective += inv_m * col[0];
        head_grad(0, i) = inv_m;
        break;
    }
  }
  const Gradients critic_grads = backward(nets_.critic, critic_fwd.cache, head_grad);
  const Eigen::MatrixXd d_action = critic_grads.input.bottomRows(act_dim);
  const Eigen::MatrixXd d_tanh = env_.bounds.half_range().asDiagonal() * d_action;
  out.grads = backward(nets_.actor, actor_fwd.cache, d_tanh);
  return out;
}

StepMetrics Learner::actor_step(const SampledBatch& batch) {
  ActorGradient g = actor_gradient(batch);
  if (!g.grads.all_finite()) throw NumericalError("actor: non-finite gradient");
  StepMetrics metrics;
  metrics.actor_objective = g.objective;
  metrics.actor_grad_norm = std::sqrt(g.grads.squared_norm());
  clip_norm(g.grads, config_.max_grad_norm, metrics.actor_grad_norm);
  // Ascent on the objective is descent on its negation.
  g.grads.scale(-1.0);
  adam_update(nets_.actor, g.grads, actor_adam_, config_.actor_lr);
  return metrics;
}

bool Learner::maybe_sync(std::int64_t t) {
  if (t % config_.t_target != 0) return false;
  nets_.target_actor = nets_.actor;
  nets_.target_critic = nets_.critic;
  return true;
}

StepMetrics Learner::train_step(PrioritizedReplay& replay, SnapshotStore* store) {
  const std::int64_t t = step_ + 1;
  const SampledBatch batch = replay.sample(static_cast<std::size_t>(config_.batch), rng_);
  const Targets targets = build_targets(batch);
  // The actor update reads the critic, so it runs before the critic moves.
  const StepMetrics actor = actor_step(batch);
  StepMetrics metrics = critic_step(batch, targets);
  metrics.actor_objective = actor.actor_objective;
  metrics.actor_grad_norm = actor.actor_grad_norm;
  if (config_.prioritized) replay.update_priorities(batch, metrics.priorities);
  step_ = t;
  metrics.synced = maybe_sync(t);
  if (store && t % config_.t_actors == 0) {
    store->publish(nets_.actor);
    metrics.published = true;
  }
  return metrics;
}

}  // namespace d4pg
