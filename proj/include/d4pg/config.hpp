#pragma once

// Experiment configuration: a flat `key = value` text file merged with
// command-line overrides (the command line wins).

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "d4pg/distributions.hpp"
#include "d4pg/envs.hpp"
#include "d4pg/learner.hpp"
#include "d4pg/replay.hpp"

namespace d4pg {

// Bad key, bad value, missing required key. Maps to exit status 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string env = "pendulum";
  HeadKind head = HeadKind::kCategorical;
  bool prioritized = true;
  int nstep = 5;
  int actors = 4;
  int atoms = 51;
  std::optional<double> vmin;  // default: per-environment return bound
  std::optional<double> vmax;
  int mixture_size = 5;
  int mog_samples = 16;
  double gamma = 0.99;
  double actor_lr = 1e-4;
  double critic_lr = 1e-4;
  int batch = 64;
  std::int64_t replay = 100000;
  double epsilon = 0.3;
  int t_target = 100;
  int t_actors = 10;
  std::uint64_t seed = 0;
  std::int64_t steps = 10000;
  int eval_every = 500;
  int eval_episodes = 10;
  bool deterministic = false;
  std::string out;
  std::vector<int> hidden{256, 256};
  std::int64_t min_replay = 1000;
  int actor_fetch_every = 50;
  double max_grad_norm = 0.0;
  SamplingMode sampling = SamplingMode::kStratified;
  // Threaded-mode throttle on actor steps per learner step; 0 means `actors`.
  double actor_steps_per_learner_step = 0.0;

  // Keys given explicitly (file or flag), used for consistency checks.
  std::set<std::string> explicit_keys;

  // Throws UsageError for unknown keys and malformed values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  // Cross-key consistency and per-module validation. Throws UsageError.
  void validate(bool require_out = true) const;

  double resolved_vmin() const;
  double resolved_vmax() const;
  LearnerConfig learner_config() const;
  ReplayConfig replay_config() const;
  double actor_throttle_ratio() const;

  // Canonical `key = value` text of every key.
  std::string to_text() const;
  // FNV-1a over the training-relevant keys (excludes out, steps and the
  // evaluation cadence).
  std::uint64_t hash() const;

  static const std::vector<std::string>& keys();
};

// Parses `key = value` lines; '#' starts a comment. Throws UsageError with
// the line number on malformed lines.
std::map<std::string, std::string> parse_config_text(const std::string& text);

// Builds a config from an optional file plus overrides, then validates.
// `overrides` take precedence over file values.
ExperimentConfig parse_config(const std::optional<std::string>& path,
                              const std::map<std::string, std::string>& overrides,
                              bool require_out = true);

}  // namespace d4pg
