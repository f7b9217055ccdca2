#pragma once

// Training orchestration, noise-free evaluation and CSV metrics.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "d4pg/actor.hpp"
#include "d4pg/checkpoint.hpp"
#include "d4pg/config.hpp"
#include "d4pg/learner.hpp"
#include "d4pg/replay.hpp"

namespace d4pg {

inline constexpr const char* kCsvHeader =
    "wall_time_s,learner_steps,actor_steps,eval_return_mean,eval_return_std,"
    "critic_loss_mean,actor_objective_mean,snapshot_version";

struct EvalRecord {
  double wall_time_s = 0.0;
  std::int64_t learner_steps = 0;
  std::int64_t actor_steps = 0;
  double eval_return_mean = 0.0;
  double eval_return_std = 0.0;
  double critic_loss_mean = 0.0;
  double actor_objective_mean = 0.0;
  std::uint64_t snapshot_version = 0;
};

std::string format_record(const EvalRecord& r);
// Throws std::runtime_error naming the column on malformed rows.
EvalRecord parse_record(const std::string& line);
std::vector<EvalRecord> read_csv(const std::string& path);

struct EvalStats {
  std::vector<double> returns;
  double mean = 0.0;
  double std = 0.0;  // population
  double min = 0.0;
  double max = 0.0;
};

// Runs `episodes` full episodes of the noise-free policy. Episode e starts
// from a reset driven by derive_seed(seed, "eval", e), so repeated calls
// see the same start states.
EvalStats evaluate_policy(const DenseNet& actor, const std::string& env_name, int episodes,
                          std::uint64_t seed);

class Trainer {
 public:
  explicit Trainer(ExperimentConfig config);
  ~Trainer();

  const ExperimentConfig& config() const { return config_; }
  Learner& learner() { return *learner_; }
  const PrioritizedReplay& replay() const { return *replay_; }
  const SnapshotStore& store() const { return store_; }
  std::int64_t learner_steps() const { return learner_->step(); }
  std::int64_t actor_steps() const { return actor_steps_; }
  std::int64_t actor_faults() const;
  const std::vector<EvalRecord>& records() const { return records_; }

  // Called on the learner thread after each CSV row is written.
  std::function<void(const EvalRecord&)> on_eval;

  // Trains until config().steps learner steps. Writes the CSV and the
  // checkpoint into config().out when it is non-empty. A fresh run
  // truncates the CSV; a resumed run keeps rows up to the checkpoint.
  void run();

  CheckpointData checkpoint() const;
  // Throws UsageError on a config hash mismatch unless `force`.
  void restore(const CheckpointData& data, bool force);

  std::string csv_path() const;
  std::string checkpoint_path() const;

 private:
  void run_deterministic();
  void run_threaded();
  void after_learner_step(const StepMetrics& m);
  void evaluate_and_log();
  void write_checkpoint();
  double wall_time() const;
  std::int64_t warmup() const;

  ExperimentConfig config_;
  std::unique_ptr<Learner> learner_;
  std::unique_ptr<PrioritizedReplay> replay_;
  SnapshotStore store_;
  std::vector<std::unique_ptr<Actor>> actors_;
  std::int64_t actor_steps_ = 0;
  double critic_loss_sum_ = 0.0;
  double actor_objective_sum_ = 0.0;
  std::int64_t metric_count_ = 0;
  double wall_offset_ = 0.0;
  std::int64_t start_ns_ = 0;
  bool resumed_ = false;
  std::vector<EvalRecord> records_;
};

struct TrainOptions {
  bool resume = false;
  bool force = false;
  std::optional<std::string> checkpoint;  // default <out>/checkpoint.bin
};

// Exit status: 0 success, 2 usage error, 3 runtime abort.
int run_train(const ExperimentConfig& config, const TrainOptions& options);

struct EvalReport {
  EvalStats stats;
  std::int64_t learner_steps = 0;
};

// Loads the actor from `checkpoint` and evaluates it. Training state is
// untouched. Throws LoadError on corruption or shape mismatch.
EvalReport run_eval(const ExperimentConfig& config, const std::string& checkpoint);

}  // namespace d4pg
