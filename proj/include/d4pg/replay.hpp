#pragma once

// N-step transition construction and a prioritized replay table.

#include <cstdint>
#include <deque>
#include <mutex>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "d4pg/distributions.hpp"

namespace d4pg {

struct Transition {
  Eigen::VectorXd x;
  Eigen::VectorXd a;
  double cumulative_reward = 0.0;  // sum_{n<k} gamma^n r_{i+n}
  Eigen::VectorXd bootstrap_x;     // x_{i+k}
  double effective_discount = 0.0;  // gamma^k, or 0 after a true terminal
};

bool operator==(const Transition& a, const Transition& b);

enum class EpisodeEnd {
  kNone,
  kTerminal,   // bootstrap cut: effective_discount 0
  kTruncated,  // time limit: bootstrap kept
};

// Per-episode accumulator turning (x, a, r, x') steps into N-step
// transitions. After an episode end, push() refuses further steps until
// reset().
class NStepAccumulator {
 public:
  struct Step {
    Eigen::VectorXd x;
    Eigen::VectorXd a;
    double r = 0.0;
  };

  NStepAccumulator(int n, double gamma);

  std::vector<Transition> push(const Eigen::VectorXd& x, const Eigen::VectorXd& a,
                               double r, const Eigen::VectorXd& x_next,
                               EpisodeEnd end = EpisodeEnd::kNone);
  void reset();

  int n() const { return n_; }
  double gamma() const { return gamma_; }
  std::size_t pending() const { return pending_.size(); }
  bool closed() const { return closed_; }

  // Checkpoint support.
  const std::deque<Step>& pending_steps() const { return pending_; }
  const Eigen::VectorXd& last_next() const { return last_next_; }
  void restore(std::deque<Step> pending, Eigen::VectorXd last_next, bool closed);

 private:
  Transition emit_front(std::size_t horizon, const Eigen::VectorXd& bootstrap,
                        bool cut_bootstrap) const;

  int n_;
  double gamma_;
  std::deque<Step> pending_;
  Eigen::VectorXd last_next_;
  bool closed_ = false;
};

// Complete binary tree over a power-of-two number of leaves. Internal nodes
// are always recomputed from their children on the write path, so the tree
// is a pure function of its leaves.
class SumTree {
 public:
  explicit SumTree(std::size_t min_capacity);

  std::size_t capacity() const { return capacity_; }
  void set(std::size_t leaf, double priority);
  double get(std::size_t leaf) const { return nodes_[capacity_ + leaf]; }
  double total() const { return nodes_[1]; }
  // Leaf whose cumulative-mass interval contains `mass`, never a zero leaf
  // while total() > 0.
  std::size_t find(double mass) const;
  // Index 0 unused, 1 is the root, leaves at [capacity, 2 capacity).
  const std::vector<double>& nodes() const { return nodes_; }

 private:
  std::size_t capacity_;
  std::vector<double> nodes_;
};

enum class SamplingMode { kStratified, kMultinomial };

struct ReplayConfig {
  std::size_t capacity = 100000;
  bool prioritized = true;
  SamplingMode mode = SamplingMode::kStratified;
  double priority_floor = kPriorityFloor;
};

struct SampledBatch {
  std::vector<Transition> transitions;
  std::vector<std::size_t> indices;
  std::vector<std::uint64_t> generations;
  std::vector<double> probabilities;  // leaf / root
  std::vector<double> weights;        // (size * p_i)^-1

  std::size_t size() const { return transitions.size(); }
};

// Thread-safe: insert, sample and update_priorities each take the table
// lock, so any number of producers may insert while one consumer samples.
class PrioritizedReplay {
 public:
  explicit PrioritizedReplay(ReplayConfig config);

  void insert(Transition t);
  // Throws NotEnoughData when fewer than `count` items are stored.
  SampledBatch sample(std::size_t count, std::mt19937_64& rng) const;
  // Slots overwritten since sampling are skipped and counted.
  void update_priorities(std::span<const std::size_t> indices,
                         std::span<const std::uint64_t> generations,
                         std::span<const double> priorities);
  void update_priorities(const SampledBatch& batch, std::span<const double> priorities);

  std::size_t size() const;
  std::size_t capacity() const { return config_.capacity; }
  const ReplayConfig& config() const { return config_; }
  double max_priority() const;
  double total_priority() const;
  double priority(std::size_t slot) const;
  std::uint64_t stale_skips() const;

  // Checkpoint support. Caller guarantees no concurrent writers.
  struct State {
    std::vector<Transition> items;
    std::vector<std::uint64_t> generations;
    std::vector<double> priorities;
    double max_priority = 1.0;
    std::size_t cursor = 0;
    std::uint64_t next_generation = 0;
    std::uint64_t stale_skips = 0;
  };
  State state() const;
  void restore(State s);

 private:
  ReplayConfig config_;
  mutable std::mutex mutex_;
  std::vector<Transition> items_;
  std::vector<std::uint64_t> generations_;
  SumTree tree_;
  double max_priority_ = 1.0;
  std::size_t cursor_ = 0;
  std::size_t size_ = 0;
  std::uint64_t next_generation_ = 0;
  std::uint64_t stale_skips_ = 0;
};

}  // namespace d4pg
