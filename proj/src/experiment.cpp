#include "d4pg/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "d4pg/errors.hpp"
#include "d4pg/rng.hpp"

namespace d4pg {
namespace {

std::string number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

const char* const kColumns[] = {"wall_time_s",      "learner_steps",        "actor_steps",
                                "eval_return_mean", "eval_return_std",      "critic_loss_mean",
                                "actor_objective_mean", "snapshot_version"};

}  // namespace

std::string format_record(const EvalRecord& r) {
  return number(r.wall_time_s) + "," + std::to_string(r.learner_steps) + "," +
         std::to_string(r.actor_steps) + "," + number(r.eval_return_mean) + "," +
         number(r.eval_return_std) + "," + number(r.critic_loss_mean) + "," +
         number(r.actor_objective_mean) + "," + std::to_string(r.snapshot_version);
}

EvalRecord parse_record(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (fields.size() != 8) {
    throw std::runtime_error("csv row has " + std::to_string(fields.size()) +
                             " columns, expected 8");
  }
  double values[8];
  for (int i = 0; i < 8; ++i) {
    const char* first = fields[i].data();
    const char* last = first + fields[i].size();
    auto [ptr, ec] = std::from_chars(first, last, values[i]);
    if (ec != std::errc() || ptr != last || !std::isfinite(values[i])) {
      throw std::runtime_error(std::string("csv column ") + kColumns[i] + ": bad value '" +
                               fields[i] + "'");
    }
  }
  EvalRecord r;
  r.wall_time_s = values[0];
  r.learner_steps = static_cast<std::int64_t>(values[1]);
  r.actor_steps = static_cast<std::int64_t>(values[2]);
  r.eval_return_mean = values[3];
  r.eval_return_std = values[4];
  r.critic_loss_mean = values[5];
  r.actor_objective_mean = values[6];
  r.snapshot_version = static_cast<std::uint64_t>(values[7]);
  return r;
}

std::vector<EvalRecord> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw std::runtime_error("'" + path + "': unexpected csv header");
  }
  std::vector<EvalRecord> rows;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(parse_record(line));
  }
  return rows;
}

EvalStats evaluate_policy(const DenseNet& actor, const std::string& env_name, int episodes,
                          std::uint64_t seed) {
  EvalStats stats;
  auto env = make_env(env_name);
  const ActionBounds& bounds = env->spec().bounds;
  for (int e = 0; e < episodes; ++e) {
    std::mt19937_64 rng(derive_seed(seed, "eval", static_cast<std::uint64_t>(e)));
    Eigen::VectorXd x = env->reset(rng);
    double total = 0.0;
    while (true) {
      StepResult r = env->step(policy_action(actor, x, bounds));
      total += r.reward;
      if (r.terminal || r.truncated) break;
      x = std::move(r.observation);
    }
    stats.returns.push_back(total);
  }
  if (stats.returns.empty()) return stats;
  double sum = 0.0;
  for (double v : stats.returns) sum += v;
  stats.mean = sum / static_cast<double>(stats.returns.size());
  double sq = 0.0;
  for (double v : stats.returns) sq += (v - stats.mean) * (v - stats.mean);
  stats.std = std::sqrt(sq / static_cast<double>(stats.returns.size()));
  stats.min = *std::min_element(stats.returns.begin(), stats.returns.end());
  stats.max = *std::max_element(stats.returns.begin(), stats.returns.end());
  return stats;
}

Trainer::Trainer(ExperimentConfig config) : config_(std::move(config)) {
  const EnvSpec spec = make_env(config_.env)->spec();
  learner_ = std::make_unique<Learner>(config_.learner_config(), spec,
                                       derive_seed(config_.seed, "init"),
                                       derive_seed(config_.seed, "replay"));
  replay_ = std::make_unique<PrioritizedReplay>(config_.replay_config());
  ActorConfig ac;
  ac.num_actors = config_.actors;
  ac.epsilon = config_.epsilon;
  ac.seed_base = derive_seed(config_.seed, "actors");
  ac.fetch_every = config_.actor_fetch_every;
  for (int k = 0; k < config_.actors; ++k) {
    actors_.push_back(
        std::make_unique<Actor>(k, make_env(config_.env), ac, config_.nstep, config_.gamma));
  }
}

Trainer::~Trainer() = default;

std::int64_t Trainer::actor_faults() const {
  std::int64_t n = 0;
  for (const auto& a : actors_) n += a->faults();
  return n;
}

std::string Trainer::csv_path() const {
  return (std::filesystem::path(config_.out) / "metrics.csv").string();
}

std::string Trainer::checkpoint_path() const {
  return (std::filesystem::path(config_.out) / "checkpoint.bin").string();
}

std::int64_t Trainer::warmup() const {
  return std::max<std::int64_t>(config_.batch, config_.min_replay);
}

double Trainer::wall_time() const {
  if (config_.deterministic) return 0.0;
  return wall_offset_ + static_cast<double>(now_ns() - start_ns_) * 1e-9;
}

CheckpointData Trainer::checkpoint() const {
  CheckpointData d;
  d.config_hash = config_.hash();
  d.learner_steps = learner_->step();
  d.actor_steps = actor_steps_;
  d.wall_time_s = wall_time();
  d.critic_loss_sum = critic_loss_sum_;
  d.actor_objective_sum = actor_objective_sum_;
  d.metric_count = metric_count_;
  d.nets = learner_->nets();
  d.actor_adam = learner_->actor_adam();
  d.critic_adam = learner_->critic_adam();
  d.learner_rng = save_rng(learner_->rng());
  d.latest = store_.fetch();
  d.has_runtime = config_.deterministic;
  if (d.has_runtime) {
    d.replay = replay_->state();
    for (const auto& a : actors_) d.actors.push_back(a->state());
  }
  return d;
}

void Trainer::restore(const CheckpointData& d, bool force) {
  if (d.config_hash != config_.hash()) {
    if (!force) {
      throw UsageError("checkpoint was written with a different configuration; pass --force to resume anyway");
    }
    std::cerr << "warning: resuming from a checkpoint with a different configuration hash\n";
  }
  if (config_.deterministic && !d.has_runtime) {
    throw LoadError("checkpoint lacks the replay and actor state a deterministic resume needs");
  }
  learner_->nets() = d.nets;
  learner_->actor_adam() = d.actor_adam;
  learner_->critic_adam() = d.critic_adam;
  learner_->rng() = load_rng(d.learner_rng);
  learner_->set_step(d.learner_steps);
  store_.restore(d.latest);
  actor_steps_ = d.actor_steps;
  wall_offset_ = config_.deterministic ? 0.0 : d.wall_time_s;
  critic_loss_sum_ = d.critic_loss_sum;
  actor_objective_sum_ = d.actor_objective_sum;
  metric_count_ = d.metric_count;
  if (config_.deterministic) {
    if (d.actors.size() != actors_.size()) {
      throw LoadError("checkpoint holds " + std::to_string(d.actors.size()) + " actors, config has " +
                      std::to_string(actors_.size()));
    }
    replay_->restore(d.replay);
    for (std::size_t k = 0; k < actors_.size(); ++k) actors_[k]->restore(d.actors[k]);
  }
  resumed_ = true;
}

void Trainer::write_checkpoint() {
  if (config_.out.empty()) return;
  save_checkpoint(checkpoint_path(), checkpoint());
}

void Trainer::evaluate_and_log() {
  const DenseNet frozen = learner_->nets().actor;
  const EvalStats stats =
      evaluate_policy(frozen, config_.env, config_.eval_episodes, config_.seed);
  EvalRecord r;
  r.wall_time_s = wall_time();
  r.learner_steps = learner_->step();
  r.actor_steps = actor_steps_;
  r.eval_return_mean = stats.mean;
  r.eval_return_std = stats.std;
  if (metric_count_ > 0) {
    r.critic_loss_mean = critic_loss_sum_ / static_cast<double>(metric_count_);
    r.actor_objective_mean = actor_objective_sum_ / static_cast<double>(metric_count_);
  }
  r.snapshot_version = store_.latest_version();
  critic_loss_sum_ = 0.0;
  actor_objective_sum_ = 0.0;
  metric_count_ = 0;
  records_.push_back(r);
  if (!config_.out.empty()) {
    std::ofstream csv(csv_path(), std::ios::app);
    csv << format_record(r) << '\n';
    csv.flush();
    if (!csv) throw std::runtime_error("cannot append to '" + csv_path() + "'");
  }
  if (on_eval) on_eval(r);
}

void Trainer::after_learner_step(const StepMetrics& m) {
  critic_loss_sum_ += m.critic_loss;
  actor_objective_sum_ += m.actor_objective;
  ++metric_count_;
  if (learner_->step() % config_.eval_every == 0) {
    evaluate_and_log();
    write_checkpoint();
  }
}

void Trainer::run() {
  start_ns_ = now_ns();
  if (!config_.out.empty()) {
    std::filesystem::create_directories(config_.out);
    std::vector<EvalRecord> kept;
    if (resumed_ && std::filesystem::exists(csv_path())) {
      for (const auto& r : read_csv(csv_path())) {
        if (r.learner_steps <= learner_->step()) kept.push_back(r);
      }
    }
    std::ofstream csv(csv_path(), std::ios::trunc);
    csv << kCsvHeader << '\n';
    for (const auto& r : kept) csv << format_record(r) << '\n';
    if (!csv) throw std::runtime_error("cannot write '" + csv_path() + "'");
    records_ = kept;
  }
  if (!resumed_) {
    store_.publish(learner_->nets().actor);
    write_checkpoint();
  }
  if (learner_->step() < config_.steps) {
    if (config_.deterministic) {
      run_deterministic();
    } else {
      run_threaded();
    }
  }
  write_checkpoint();
}

void Trainer::run_deterministic() {
  const auto warm = static_cast<std::size_t>(warmup());
  while (learner_->step() < config_.steps) {
    for (auto& actor : actors_) {
      if (actor->step(*replay_, store_)) ++actor_steps_;
    }
    if (replay_->size() >= warm) after_learner_step(learner_->train_step(*replay_, &store_));
  }
}

void Trainer::run_threaded() {
  using namespace std::chrono_literals;
  std::atomic<bool> stop{false};
  std::atomic<std::int64_t> actor_counter{actor_steps_};
  std::atomic<std::int64_t> learner_counter{learner_->step()};
  const double ratio = config_.actor_throttle_ratio();
  // Slack covers the warm-up fill plus the N-step lag of every actor.
  const double slack = static_cast<double>(warmup()) +
                       static_cast<double>(config_.actors) * (config_.nstep + 1);
  const std::int64_t base_learner = learner_->step();
  const std::int64_t base_actor = actor_steps_;
  ActorLoopHooks hooks;
  hooks.step_counter = &actor_counter;
  hooks.may_step = [&] {
    const double done = static_cast<double>(actor_counter.load(std::memory_order_relaxed) - base_actor);
    const double learned =
        static_cast<double>(learner_counter.load(std::memory_order_relaxed) - base_learner);
    return done < slack + ratio * learned;
  };

  std::vector<std::thread> threads;
  for (auto& actor : actors_) {
    threads.emplace_back([&, a = actor.get()] { actor_loop(*a, *replay_, store_, stop, hooks); });
  }
  auto join = [&] {
    stop.store(true, std::memory_order_release);
    for (auto& t : threads) t.join();
    actor_steps_ = actor_counter.load();
  };
  const auto warm = static_cast<std::size_t>(warmup());
  try {
    while (learner_->step() < config_.steps) {
      if (replay_->size() < warm) {
        std::this_thread::sleep_for(500us);
        continue;
      }
      const StepMetrics m = learner_->train_step(*replay_, &store_);
      learner_counter.store(learner_->step(), std::memory_order_relaxed);
      actor_steps_ = actor_counter.load(std::memory_order_relaxed);
      after_learner_step(m);
    }
  } catch (...) {
    join();
    throw;
  }
  join();
}

int run_train(const ExperimentConfig& config, const TrainOptions& options) {
  try {
    Trainer trainer(config);
    if (options.resume) {
      const std::string path = options.checkpoint.value_or(trainer.checkpoint_path());
      trainer.restore(load_checkpoint(path, trainer.learner().nets()), options.force);
    }
    trainer.on_eval = [](const EvalRecord& r) {
      std::cerr << "learner_steps=" << r.learner_steps << " actor_steps=" << r.actor_steps
                << " eval_return_mean=" << r.eval_return_mean
                << " critic_loss_mean=" << r.critic_loss_mean << "\n";
    };
    trainer.run();
    if (trainer.actor_faults() > 0) {
      std::cerr << "actor faults: " << trainer.actor_faults() << "\n";
    }
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

EvalReport run_eval(const ExperimentConfig& config, const std::string& checkpoint) {
  const EnvSpec spec = make_env(config.env)->spec();
  const NetworkQuad shapes = make_networks(config.learner_config(), spec, 0);
  const CheckpointData data = load_checkpoint(checkpoint, shapes);
  EvalReport report;
  report.stats = evaluate_policy(data.nets.actor, config.env, config.eval_episodes, config.seed);
  report.learner_steps = data.learner_steps;
  return report;
}

}  // namespace d4pg
