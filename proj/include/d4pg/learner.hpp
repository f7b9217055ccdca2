#pragma once

// The learner: target construction, importance-weighted critic updates,
// deterministic policy-gradient actor updates through the critic's expected
// value, hard target syncs and weight publication.

#include <cstdint>
#include <random>
#include <vector>

#include "d4pg/actor.hpp"
#include "d4pg/distributions.hpp"
#include "d4pg/envs.hpp"
#include "d4pg/nn.hpp"
#include "d4pg/replay.hpp"

namespace d4pg {

struct LearnerConfig {
  int batch = 64;
  int nstep = 5;
  double gamma = 0.99;
  double actor_lr = 1e-4;
  double critic_lr = 1e-4;
  int t_target = 100;
  int t_actors = 10;
  HeadKind head = HeadKind::kCategorical;
  bool prioritized = true;
  int atoms = 51;
  double v_min = 0.0;
  double v_max = 100.0;
  int mixture_size = 5;
  int mog_samples = 16;
  std::vector<int> hidden{256, 256};
  double max_grad_norm = 0.0;  // 0 disables clipping

  void validate() const;  // throws ConfigError
  int critic_output_dim() const;
};

struct NetworkQuad {
  DenseNet actor;
  DenseNet critic;
  DenseNet target_actor;
  DenseNet target_critic;
};

// Actor: obs -> hidden... -> action (tanh). Critic: [obs; action] ->
// hidden... -> head parameters. Targets start as exact copies.
NetworkQuad make_networks(const LearnerConfig& config, const EnvSpec& env,
                          std::uint64_t seed);

// Per-sample targets; only the member matching the head kind is filled.
struct Targets {
  HeadKind kind = HeadKind::kCategorical;
  std::vector<ProjectedTarget> categorical;
  std::vector<double> scalar;
  std::vector<Eigen::VectorXd> mog_samples;  // raw target samples z_j
};

struct StepMetrics {
  double critic_loss = 0.0;
  double actor_objective = 0.0;
  double critic_grad_norm = 0.0;
  double actor_grad_norm = 0.0;
  std::vector<double> priorities;
  int mog_underflows = 0;
  bool synced = false;
  bool published = false;
};

struct CriticGradient {
  double loss = 0.0;  // (1/M) sum_i w_i loss_i
  std::vector<double> sample_losses;
  std::vector<double> priorities;
  Gradients grads;
  int mog_underflows = 0;
};

struct ActorGradient {
  double objective = 0.0;  // (1/M) sum_i E[Z(x_i, pi(x_i))]
  Gradients grads;         // ascent direction
};

class Learner {
 public:
  // `init_seed` draws the network weights, `sample_seed` drives replay
  // sampling and mixture target samples.
  Learner(LearnerConfig config, EnvSpec env, std::uint64_t init_seed,
          std::uint64_t sample_seed);

  const LearnerConfig& config() const { return config_; }
  const EnvSpec& env_spec() const { return env_; }
  const Support& support() const { return support_; }

  NetworkQuad& nets() { return nets_; }
  const NetworkQuad& nets() const { return nets_; }
  AdamState& actor_adam() { return actor_adam_; }
  AdamState& critic_adam() { return critic_adam_; }
  const AdamState& actor_adam() const { return actor_adam_; }
  const AdamState& critic_adam() const { return critic_adam_; }
  std::mt19937_64& rng() { return rng_; }
  const std::mt19937_64& rng() const { return rng_; }
  std::int64_t step() const { return step_; }
  void set_step(std::int64_t t) { step_ = t; }

  Targets build_targets(const SampledBatch& batch);
  CriticGradient critic_gradient(const SampledBatch& batch, const Targets& targets) const;
  // Throws NumericalError before touching parameters.
  StepMetrics critic_step(const SampledBatch& batch, const Targets& targets);
  ActorGradient actor_gradient(const SampledBatch& batch) const;
  StepMetrics actor_step(const SampledBatch& batch);
  // Hard copy of online into target nets when t is a multiple of t_target.
  bool maybe_sync(std::int64_t t);

  // One full iteration: sample, targets, actor and critic updates (both
  // computed from the same pre-update parameters), priority write-back,
  // target sync, and publication every t_actors steps.
  StepMetrics train_step(PrioritizedReplay& replay, SnapshotStore* store);

  // Expected value of the critic head for each column of `critic_output`.
  Eigen::VectorXd expected_values(const Eigen::MatrixXd& critic_output) const;
  double q_value(const Eigen::VectorXd& x, const Eigen::VectorXd& a) const;

 private:
  Eigen::MatrixXd critic_inputs(const Eigen::MatrixXd& x, const Eigen::MatrixXd& a) const;
  Eigen::MatrixXd policy_batch(const DenseNet& actor, const Eigen::MatrixXd& x) const;

  LearnerConfig config_;
  EnvSpec env_;
  Support support_;
  NetworkQuad nets_;
  AdamState actor_adam_;
  AdamState critic_adam_;
  std::mt19937_64 rng_;
  std::int64_t step_ = 0;
};

}  // namespace d4pg
