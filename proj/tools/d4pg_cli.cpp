#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "checks.hpp"
#include "d4pg/config.hpp"
#include "d4pg/errors.hpp"
#include "d4pg/experiment.hpp"

namespace {

struct Flag {
  const char* name;  // command-line spelling
  const char* key;   // config key
  const char* help;
};

const Flag kValueFlags[] = {
    {"--env", "env", "environment: pendulum | point_mass | lq"},
    {"--head", "head", "critic head: categorical | mog | scalar"},
    {"--prioritized", "prioritized", "prioritized replay: true | false"},
    {"--nstep", "nstep", "N-step return length"},
    {"--actors", "actors", "number of actors K"},
    {"--atoms", "atoms", "categorical atoms"},
    {"--vmin", "vmin", "support lower bound"},
    {"--vmax", "vmax", "support upper bound"},
    {"--mixture-size", "mixture_size", "mixture components"},
    {"--gamma", "gamma", "discount"},
    {"--actor-lr", "actor_lr", "actor learning rate"},
    {"--critic-lr", "critic_lr", "critic learning rate"},
    {"--batch", "batch", "batch size M"},
    {"--replay", "replay", "replay capacity R"},
    {"--epsilon", "epsilon", "exploration noise scale"},
    {"--seed", "seed", "master seed"},
    {"--steps", "steps", "total learner steps"},
    {"--eval-every", "eval_every", "learner steps between evaluations"},
    {"--eval-episodes", "eval_episodes", "episodes per evaluation"},
    {"--hidden", "hidden", "hidden layer sizes, comma separated"},
    {"--out", "out", "output directory"},
};

struct CommonArgs {
  std::optional<std::string> config;
  std::map<std::string, std::string> values;
  std::vector<std::string> sets;
  bool deterministic = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "key = value config file");
  for (const auto& flag : kValueFlags) {
    cmd->add_option_function<std::string>(
        flag.name, [&args, key = flag.key](const std::string& v) { args.values[key] = v; },
        flag.help);
  }
  cmd->add_option("--set", args.sets, "extra override KEY=VALUE (repeatable)");
  cmd->add_flag("--deterministic", args.deterministic, "single-threaded bit-reproducible mode");
}

std::map<std::string, std::string> overrides(const CommonArgs& args) {
  std::map<std::string, std::string> out;
  for (const auto& s : args.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw d4pg::UsageError("--set expects KEY=VALUE, got '" + s + "'");
    out[s.substr(0, eq)] = s.substr(eq + 1);
  }
  for (const auto& [k, v] : args.values) out[k] = v;
  if (args.deterministic) out["deterministic"] = "true";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed distributional deterministic policy gradients"};
  app.require_subcommand(1);

  CommonArgs train_args;
  d4pg::TrainOptions train_options;
  std::string resume_from;
  auto* train = app.add_subcommand("train", "train and log evaluation metrics");
  add_common(train, train_args);
  train->add_flag("--resume", train_options.resume, "continue from the checkpoint");
  train->add_option("--checkpoint", resume_from, "checkpoint to resume from");
  train->add_flag("--force", train_options.force, "resume despite a config hash mismatch");

  CommonArgs eval_args;
  std::string eval_checkpoint;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint without exploration noise");
  add_common(eval, eval_args);
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();

  bool full = false;
  auto* selftest = app.add_subcommand("selftest", "run the oracle and property checks");
  selftest->add_flag("--full", full, "include the slower learning checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) {
      if (!resume_from.empty()) train_options.checkpoint = resume_from;
      const auto cfg = d4pg::parse_config(train_args.config, overrides(train_args));
      return d4pg::run_train(cfg, train_options);
    }
    if (*eval) {
      const auto cfg = d4pg::parse_config(eval_args.config, overrides(eval_args), false);
      const auto report = d4pg::run_eval(cfg, eval_checkpoint);
      std::cout << "learner_steps " << report.learner_steps << "\n"
                << "episodes " << report.stats.returns.size() << "\n"
                << "mean " << report.stats.mean << "\n"
                << "std " << report.stats.std << "\n"
                << "min " << report.stats.min << "\n"
                << "max " << report.stats.max << "\n";
      return 0;
    }
    if (*selftest) {
      const auto results = full ? d4pg::checks::run_all() : d4pg::checks::run_quick();
      bool ok = true;
      for (const auto& r : results) {
        std::cout << d4pg::checks::format(r) << "\n";
        ok = ok && r.passed;
      }
      return ok ? 0 : 3;
    }
  } catch (const d4pg::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
