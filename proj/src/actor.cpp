#include "d4pg/actor.hpp"

#include <chrono>
#include <thread>

#include "d4pg/frame.hpp"
#include "d4pg/rng.hpp"

namespace d4pg {

std::uint64_t parameter_checksum(const DenseNet& net) {
  const Eigen::VectorXd flat = flatten(net);
  const auto* bytes = reinterpret_cast<const std::uint8_t*>(flat.data());
  return fnv1a64({bytes, static_cast<std::size_t>(flat.size()) * sizeof(double)});
}

bool ParameterSnapshot::verify() const { return parameter_checksum(actor) == checksum; }

std::uint64_t SnapshotStore::publish(const DenseNet& actor) {
  auto snapshot = std::make_shared<ParameterSnapshot>();
  snapshot->actor = actor;
  snapshot->checksum = parameter_checksum(actor);
  std::lock_guard lock(mutex_);
  snapshot->version = latest_ ? latest_->version + 1 : 1;
  latest_ = std::move(snapshot);
  return latest_->version;
}

std::shared_ptr<const ParameterSnapshot> SnapshotStore::fetch() const {
  std::lock_guard lock(mutex_);
  return latest_;
}

std::uint64_t SnapshotStore::latest_version() const {
  std::lock_guard lock(mutex_);
  return latest_ ? latest_->version : 0;
}

void SnapshotStore::restore(std::shared_ptr<const ParameterSnapshot> snapshot) {
  std::lock_guard lock(mutex_);
  latest_ = std::move(snapshot);
}

Eigen::VectorXd policy_action(const DenseNet& actor, const Eigen::VectorXd& x,
                              const ActionBounds& bounds) {
  return bounds.center() + bounds.half_range().cwiseProduct(predict(actor, x));
}

Eigen::VectorXd select_action(const DenseNet& actor, const Eigen::VectorXd& x,
                              std::mt19937_64& rng, double epsilon,
                              const ActionBounds& bounds) {
  Eigen::VectorXd a = policy_action(actor, x, bounds);
  if (epsilon > 0.0) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += epsilon * gauss(rng);
  }
  return bounds.clip(a);
}

Actor::Actor(int index, std::unique_ptr<Env> env, const ActorConfig& config, int nstep,
             double gamma)
    : index_(index),
      env_(std::move(env)),
      config_(config),
      accumulator_(nstep, gamma),
      env_rng_(derive_seed(config.seed_base, "actor-env", static_cast<std::uint64_t>(index))),
      noise_rng_(derive_seed(config.seed_base, "actor-noise", static_cast<std::uint64_t>(index))) {}

void Actor::refresh_snapshot(const SnapshotStore& store) {
  auto latest = store.fetch();
  if (latest && (!snapshot_ || latest->version > snapshot_->version)) {
    snapshot_ = std::move(latest);
  }
  steps_since_fetch_ = 0;
}

bool Actor::step(PrioritizedReplay& replay, const SnapshotStore& store) {
  if (!snapshot_) {
    refresh_snapshot(store);
    if (!snapshot_) return false;
  }
  if (need_reset_) {
    observation_ = env_->reset(env_rng_);
    accumulator_.reset();
    episode_return_ = 0.0;
    need_reset_ = false;
    refresh_snapshot(store);
  } else if (steps_since_fetch_ >= config_.fetch_every) {
    refresh_snapshot(store);
  }

  const Eigen::VectorXd action = select_action(snapshot_->actor, observation_, noise_rng_,
                                               config_.epsilon, env_->spec().bounds);
  StepResult result;
  try {
    result = env_->step(action);
  } catch (const std::exception&) {
    ++faults_;
    need_reset_ = true;
    return true;
  }
  const EpisodeEnd end = result.terminal    ? EpisodeEnd::kTerminal
                         : result.truncated ? EpisodeEnd::kTruncated
                                            : EpisodeEnd::kNone;
  for (auto& t : accumulator_.push(observation_, action, result.reward, result.observation, end)) {
    replay.insert(std::move(t));
  }
  observation_ = std::move(result.observation);
  episode_return_ += result.reward;
  ++steps_;
  ++steps_since_fetch_;
  if (end != EpisodeEnd::kNone) {
    need_reset_ = true;
    ++episodes_;
    last_episode_return_ = episode_return_;
  }
  return true;
}

Actor::State Actor::state() const {
  State s;
  s.env_state = env_->state();
  s.observation = observation_;
  s.env_rng = save_rng(env_rng_);
  s.noise_rng = save_rng(noise_rng_);
  s.pending = accumulator_.pending_steps();
  s.last_next = accumulator_.last_next();
  s.accumulator_closed = accumulator_.closed();
  s.need_reset = need_reset_;
  s.steps = steps_;
  s.episodes = episodes_;
  s.faults = faults_;
  s.steps_since_fetch = steps_since_fetch_;
  s.episode_return = episode_return_;
  s.last_episode_return = last_episode_return_;
  s.snapshot = snapshot_;
  return s;
}

void Actor::restore(const State& s) {
  env_->set_state(s.env_state);
  observation_ = s.observation;
  env_rng_ = load_rng(s.env_rng);
  noise_rng_ = load_rng(s.noise_rng);
  accumulator_.restore(s.pending, s.last_next, s.accumulator_closed);
  need_reset_ = s.need_reset;
  steps_ = s.steps;
  episodes_ = s.episodes;
  faults_ = s.faults;
  steps_since_fetch_ = s.steps_since_fetch;
  episode_return_ = s.episode_return;
  last_episode_return_ = s.last_episode_return;
  snapshot_ = s.snapshot;
}

void actor_loop(Actor& actor, PrioritizedReplay& replay, const SnapshotStore& store,
                const std::atomic<bool>& stop, const ActorLoopHooks& hooks) {
  using namespace std::chrono_literals;
  while (!stop.load(std::memory_order_acquire)) {
    if (hooks.may_step && !hooks.may_step()) {
      std::this_thread::sleep_for(200us);
      continue;
    }
    if (!actor.step(replay, store)) {
      std::this_thread::sleep_for(1ms);
      continue;
    }
    if (hooks.step_counter) hooks.step_counter->fetch_add(1, std::memory_order_relaxed);
  }
}

}  // namespace d4pg
