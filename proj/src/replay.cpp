#include "d4pg/replay.hpp"

#include <algorithm>
#include <bit>
#include <string>

#include "d4pg/errors.hpp"

namespace d4pg {

bool operator==(const Transition& a, const Transition& b) {
  return a.x == b.x && a.a == b.a && a.cumulative_reward == b.cumulative_reward &&
         a.bootstrap_x == b.bootstrap_x && a.effective_discount == b.effective_discount;
}

NStepAccumulator::NStepAccumulator(int n, double gamma) : n_(n), gamma_(gamma) {
  if (n < 1) throw ConfigError("N-step length must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("discount must lie in (0, 1]");
}

Transition NStepAccumulator::emit_front(std::size_t horizon,
                                        const Eigen::VectorXd& bootstrap,
                                        bool cut_bootstrap) const {
  Transition t;
  t.x = pending_.front().x;
  t.a = pending_.front().a;
  double sum = 0.0;
  double discount = 1.0;
  for (std::size_t n = 0; n < horizon; ++n) {
    sum += discount * pending_[n].r;
    discount *= gamma_;
  }
  t.cumulative_reward = sum;
  t.bootstrap_x = bootstrap;
  t.effective_discount = cut_bootstrap ? 0.0 : discount;
  return t;
}

std::vector<Transition> NStepAccumulator::push(const Eigen::VectorXd& x,
                                               const Eigen::VectorXd& a, double r,
                                               const Eigen::VectorXd& x_next,
                                               EpisodeEnd end) {
  if (closed_) {
    throw ContractViolation("NStepAccumulator: push after episode end without reset");
  }
  if (last_next_.size() != 0 && (last_next_.size() != x.size() || last_next_ != x)) {
    throw ContractViolation("NStepAccumulator: step does not continue the current episode");
  }
  pending_.push_back({x, a, r});
  last_next_ = x_next;

  std::vector<Transition> out;
  if (end == EpisodeEnd::kNone) {
    if (pending_.size() == static_cast<std::size_t>(n_)) {
      out.push_back(emit_front(pending_.size(), x_next, false));
      pending_.pop_front();
    }
    return out;
  }
  const bool cut = end == EpisodeEnd::kTerminal;
  while (!pending_.empty()) {
    out.push_back(emit_front(pending_.size(), x_next, cut));
    pending_.pop_front();
  }
  closed_ = true;
  return out;
}

void NStepAccumulator::reset() {
  pending_.clear();
  last_next_.resize(0);
  closed_ = false;
}

void NStepAccumulator::restore(std::deque<Step> pending, Eigen::VectorXd last_next,
                               bool closed) {
  pending_ = std::move(pending);
  last_next_ = std::move(last_next);
  closed_ = closed;
}

SumTree::SumTree(std::size_t min_capacity)
    : capacity_(std::bit_ceil(std::max<std::size_t>(min_capacity, 1))),
      nodes_(2 * capacity_, 0.0) {}

void SumTree::set(std::size_t leaf, double priority) {
  std::size_t node = capacity_ + leaf;
  nodes_[node] = priority;
  for (node /= 2; node >= 1; node /= 2) {
    nodes_[node] = nodes_[2 * node] + nodes_[2 * node + 1];
  }
}

std::size_t SumTree::find(double mass) const {
  mass = std::clamp(mass, 0.0, total());
  std::size_t node = 1;
  while (node < capacity_) {
    const std::size_t left = 2 * node;
    const std::size_t right = left + 1;
    if ((mass < nodes_[left] && nodes_[left] > 0.0) || nodes_[right] <= 0.0) {
      node = left;
    } else {
      mass -= nodes_[left];
      node = right;
    }
  }
  return node - capacity_;
}

PrioritizedReplay::PrioritizedReplay(ReplayConfig config)
    : config_(config), tree_(config.capacity) {
  if (config_.capacity < 1) throw ConfigError("replay capacity must be >= 1");
  items_.resize(config_.capacity);
  generations_.assign(config_.capacity, 0);
}

void PrioritizedReplay::insert(Transition t) {
  std::lock_guard lock(mutex_);
  const std::size_t slot = cursor_;
  items_[slot] = std::move(t);
  generations_[slot] = ++next_generation_;
  tree_.set(slot, max_priority_);
  cursor_ = (cursor_ + 1) % config_.capacity;
  size_ = std::min(size_ + 1, config_.capacity);
}

SampledBatch PrioritizedReplay::sample(std::size_t count, std::mt19937_64& rng) const {
  std::lock_guard lock(mutex_);
  if (size_ < count || size_ == 0) {
    throw NotEnoughData("replay holds " + std::to_string(size_) + " items, " +
                        std::to_string(count) + " requested");
  }
  SampledBatch batch;
  batch.transitions.reserve(count);
  const double n = static_cast<double>(size_);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto push = [&](std::size_t slot, double probability, double weight) {
    batch.transitions.push_back(items_[slot]);
    batch.indices.push_back(slot);
    batch.generations.push_back(generations_[slot]);
    batch.probabilities.push_back(probability);
    batch.weights.push_back(weight);
  };

  if (!config_.prioritized) {
    std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
    for (std::size_t k = 0; k < count; ++k) push(pick(rng), 1.0 / n, 1.0);
    return batch;
  }

  const double root = tree_.total();
  const double segment = root / static_cast<double>(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double mass = config_.mode == SamplingMode::kStratified
                            ? (static_cast<double>(k) + unit(rng)) * segment
                            : unit(rng) * root;
    const std::size_t slot = tree_.find(mass);
    const double leaf = tree_.get(slot);
    // (size * leaf / root)^-1, arranged so equal leaves give exactly 1.
    push(slot, leaf / root, root / (n * leaf));
  }
  return batch;
}

void PrioritizedReplay::update_priorities(std::span<const std::size_t> indices,
                                          std::span<const std::uint64_t> generations,
                                          std::span<const double> priorities) {
  if (indices.size() != priorities.size() || indices.size() != generations.size()) {
    throw ShapeError("update_priorities: index/priority length mismatch");
  }
  std::lock_guard lock(mutex_);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t slot = indices[k];
    if (slot >= size_ || generations_[slot] != generations[k]) {
      ++stale_skips_;
      continue;
    }
    const double p = std::max(priorities[k], config_.priority_floor);
    tree_.set(slot, p);
    max_priority_ = std::max(max_priority_, p);
  }
}

void PrioritizedReplay::update_priorities(const SampledBatch& batch,
                                          std::span<const double> priorities) {
  update_priorities(batch.indices, batch.generations, priorities);
}

std::size_t PrioritizedReplay::size() const {
  std::lock_guard lock(mutex_);
  return size_;
}

double PrioritizedReplay::max_priority() const {
  std::lock_guard lock(mutex_);
  return max_priority_;
}

double PrioritizedReplay::total_priority() const {
  std::lock_guard lock(mutex_);
  return tree_.total();
}

double PrioritizedReplay::priority(std::size_t slot) const {
  std::lock_guard lock(mutex_);
  return tree_.get(slot);
}

std::uint64_t PrioritizedReplay::stale_skips() const {
  std::lock_guard lock(mutex_);
  return stale_skips_;
}

PrioritizedReplay::State PrioritizedReplay::state() const {
  std::lock_guard lock(mutex_);
  State s;
  s.items.assign(items_.begin(), items_.begin() + static_cast<std::ptrdiff_t>(size_));
  s.generations.assign(generations_.begin(),
                       generations_.begin() + static_cast<std::ptrdiff_t>(size_));
  for (std::size_t i = 0; i < size_; ++i) s.priorities.push_back(tree_.get(i));
  s.max_priority = max_priority_;
  s.cursor = cursor_;
  s.next_generation = next_generation_;
  s.stale_skips = stale_skips_;
  return s;
}

void PrioritizedReplay::restore(State s) {
  if (s.items.size() > config_.capacity || s.items.size() != s.priorities.size() ||
      s.items.size() != s.generations.size() || s.cursor >= config_.capacity) {
    throw LoadError("replay state does not fit this table");
  }
  std::lock_guard lock(mutex_);
  tree_ = SumTree(config_.capacity);
  items_.assign(config_.capacity, Transition{});
  generations_.assign(config_.capacity, 0);
  size_ = s.items.size();
  for (std::size_t i = 0; i < size_; ++i) {
    items_[i] = std::move(s.items[i]);
    generations_[i] = s.generations[i];
    tree_.set(i, s.priorities[i]);
  }
  max_priority_ = s.max_priority;
  cursor_ = s.cursor;
  next_generation_ = s.next_generation;
  stale_skips_ = s.stale_skips;
}

}  // namespace d4pg
