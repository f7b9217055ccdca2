#pragma once

// Experience-gathering actors and the learner-to-actor weight channel.

#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <random>

#include "d4pg/envs.hpp"
#include "d4pg/nn.hpp"
#include "d4pg/replay.hpp"

namespace d4pg {

// Immutable once published.
struct ParameterSnapshot {
  std::uint64_t version = 0;
  DenseNet actor;
  std::uint64_t checksum = 0;

  bool verify() const;
};

std::uint64_t parameter_checksum(const DenseNet& net);

// Single writer (the learner), many readers. Readers get a shared pointer
// to a complete snapshot; publication swaps the latest pointer.
class SnapshotStore {
 public:
  // Returns the new version (strictly increasing, starting at 1).
  std::uint64_t publish(const DenseNet& actor);
  // nullptr before the first publish.
  std::shared_ptr<const ParameterSnapshot> fetch() const;
  std::uint64_t latest_version() const;

  // Checkpoint restore; `snapshot` may be null.
  void restore(std::shared_ptr<const ParameterSnapshot> snapshot);

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const ParameterSnapshot> latest_;
};

struct ActorConfig {
  int num_actors = 4;
  double epsilon = 0.3;
  std::uint64_t seed_base = 0;
  int fetch_every = 50;  // env steps between snapshot polls within an episode
};

// Deterministic policy output scaled from the tanh range onto the bounds.
Eigen::VectorXd policy_action(const DenseNet& actor, const Eigen::VectorXd& x,
                              const ActionBounds& bounds);

// clip(pi(x) + epsilon * N(0, I), bounds). epsilon == 0 draws nothing.
Eigen::VectorXd select_action(const DenseNet& actor, const Eigen::VectorXd& x,
                              std::mt19937_64& rng, double epsilon,
                              const ActionBounds& bounds);

class Actor {
 public:
  Actor(int index, std::unique_ptr<Env> env, const ActorConfig& config, int nstep,
        double gamma);

  // One environment step, feeding finished N-step transitions to `replay`.
  // Returns false (and does nothing) while no snapshot has been published.
  bool step(PrioritizedReplay& replay, const SnapshotStore& store);

  int index() const { return index_; }
  const Env& env() const { return *env_; }
  std::int64_t steps() const { return steps_; }
  std::int64_t episodes() const { return episodes_; }
  std::int64_t faults() const { return faults_; }
  std::uint64_t snapshot_version() const { return snapshot_ ? snapshot_->version : 0; }
  double last_episode_return() const { return last_episode_return_; }

  struct State {
    std::vector<double> env_state;
    Eigen::VectorXd observation;
    std::string env_rng;
    std::string noise_rng;
    std::deque<NStepAccumulator::Step> pending;
    Eigen::VectorXd last_next;
    bool accumulator_closed = false;
    bool need_reset = true;
    std::int64_t steps = 0;
    std::int64_t episodes = 0;
    std::int64_t faults = 0;
    std::int64_t steps_since_fetch = 0;
    double episode_return = 0.0;
    double last_episode_return = 0.0;
    std::shared_ptr<const ParameterSnapshot> snapshot;
  };
  State state() const;
  void restore(const State& s);

 private:
  void refresh_snapshot(const SnapshotStore& store);

  int index_;
  std::unique_ptr<Env> env_;
  ActorConfig config_;
  NStepAccumulator accumulator_;
  std::mt19937_64 env_rng_;
  std::mt19937_64 noise_rng_;
  std::shared_ptr<const ParameterSnapshot> snapshot_;
  Eigen::VectorXd observation_;
  bool need_reset_ = true;
  std::int64_t steps_ = 0;
  std::int64_t episodes_ = 0;
  std::int64_t faults_ = 0;
  std::int64_t steps_since_fetch_ = 0;
  double episode_return_ = 0.0;
  double last_episode_return_ = 0.0;
};

struct ActorLoopHooks {
  // Throttle: the actor idles while this returns false.
  std::function<bool()> may_step;
  std::atomic<std::int64_t>* step_counter = nullptr;
};

// Runs `actor` until `stop` is set; checks `stop` before every env step.
void actor_loop(Actor& actor, PrioritizedReplay& replay, const SnapshotStore& store,
                const std::atomic<bool>& stop, const ActorLoopHooks& hooks = {});

}  // namespace d4pg
