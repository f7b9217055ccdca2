#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "d4pg/config.hpp"

using namespace d4pg;
namespace fs = std::filesystem;

namespace {

std::string write_temp(const std::string& name, const std::string& text) {
  const fs::path dir = fs::temp_directory_path() / "d4pg_test_config";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p) << text;
  return p.string();
}

}  // namespace

TEST(Config, DefaultsMatchTheDocumentedTable) {
  const ExperimentConfig c = parse_config(std::nullopt, {{"out", "o"}});
  EXPECT_EQ(c.env, "pendulum");
  EXPECT_EQ(c.head, HeadKind::kCategorical);
  EXPECT_TRUE(c.prioritized);
  EXPECT_EQ(c.nstep, 5);
  EXPECT_EQ(c.actors, 4);
  EXPECT_EQ(c.atoms, 51);
  EXPECT_EQ(c.mixture_size, 5);
  EXPECT_EQ(c.gamma, 0.99);
  EXPECT_EQ(c.actor_lr, 1e-4);
  EXPECT_EQ(c.critic_lr, 1e-4);
  EXPECT_EQ(c.batch, 64);
  EXPECT_EQ(c.replay, 100000);
  EXPECT_EQ(c.epsilon, 0.3);
  EXPECT_EQ(c.t_target, 100);
  EXPECT_EQ(c.t_actors, 10);
  EXPECT_EQ(c.seed, 0u);
}

TEST(Config, CommandLineOverridesFile) {
  const std::string path = write_temp("precedence.cfg", "nstep = 3\nseed = 7  # comment\n\nout = from_file\n");
  const ExperimentConfig c = parse_config(path, {{"nstep", "1"}});
  EXPECT_EQ(c.nstep, 1);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.out, "from_file");
}

TEST(Config, DefaultValueRangeFollowsEnvironment) {
  const ExperimentConfig p = parse_config(std::nullopt, {{"out", "o"}});
  EXPECT_EQ(p.resolved_vmin(), 0.0);
  EXPECT_EQ(p.resolved_vmax(), 1.0 / (1.0 - 0.99));
  const ExperimentConfig explicit_range =
      parse_config(std::nullopt, {{"out", "o"}, {"vmin", "-10"}, {"vmax", "10"}});
  EXPECT_EQ(explicit_range.resolved_vmin(), -10.0);
  EXPECT_EQ(explicit_range.resolved_vmax(), 10.0);
}

TEST(Config, MissingOutIsUsageError) {
  EXPECT_THROW(parse_config(std::nullopt, {}), UsageError);
  EXPECT_NO_THROW(parse_config(std::nullopt, {}, false));
}

TEST(Config, UnknownKeyIsUsageError) {
  EXPECT_THROW(parse_config(std::nullopt, {{"out", "o"}, {"learning_rate", "1"}}), UsageError);
}

TEST(Config, MalformedValuesAreUsageErrors) {
  for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"nstep", "five"}, {"gamma", "0.9x"}, {"head", "quantile"}, {"prioritized", "maybe"},
           {"hidden", "64,,64"}, {"sampling", "greedy"}}) {
    EXPECT_THROW(parse_config(std::nullopt, {{"out", "o"}, {k, v}}), UsageError) << k;
  }
}

TEST(Config, InconsistentKeysAreRejected) {
  EXPECT_THROW(parse_config(std::nullopt, {{"out", "o"}, {"head", "mog"}, {"atoms", "51"}}),
               UsageError);
  EXPECT_THROW(parse_config(std::nullopt, {{"out", "o"}, {"head", "scalar"}, {"mixture_size", "3"}}),
               UsageError);
  EXPECT_NO_THROW(parse_config(std::nullopt, {{"out", "o"}, {"head", "mog"}, {"mixture_size", "3"}}));
}

TEST(Config, OutOfRangeValuesAreRejected) {
  for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"gamma", "1"}, {"nstep", "0"}, {"actors", "0"}, {"atoms", "1"}, {"batch", "0"},
           {"epsilon", "-0.1"}, {"t_target", "0"}, {"env", "cartpole"}}) {
    EXPECT_THROW(parse_config(std::nullopt, {{"out", "o"}, {k, v}}), UsageError) << k;
  }
  EXPECT_THROW(parse_config(std::nullopt, {{"out", "o"}, {"vmin", "5"}, {"vmax", "5"}}), UsageError);
}

TEST(Config, MalformedLineReportsLineNumber) {
  try {
    parse_config_text("seed = 1\n# fine\nnonsense\n");
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Config, UnreadableFileIsUsageError) {
  EXPECT_THROW(parse_config("/nonexistent/dir/x.cfg", {{"out", "o"}}), UsageError);
}

TEST(Config, HashIgnoresRunLengthAndOutput) {
  const ExperimentConfig a = parse_config(std::nullopt, {{"out", "a"}, {"steps", "10"}});
  const ExperimentConfig b =
      parse_config(std::nullopt, {{"out", "b"}, {"steps", "20"}, {"eval_every", "7"}});
  EXPECT_EQ(a.hash(), b.hash());
  const ExperimentConfig c = parse_config(std::nullopt, {{"out", "a"}, {"seed", "1"}});
  EXPECT_NE(a.hash(), c.hash());
}

TEST(Config, HashSeesResolvedRange) {
  const ExperimentConfig a = parse_config(std::nullopt, {{"out", "o"}});
  const ExperimentConfig b = parse_config(std::nullopt, {{"out", "o"}, {"vmax", a.get("vmax")}});
  EXPECT_EQ(a.hash(), b.hash());
}

TEST(Config, TextRoundTrip) {
  const ExperimentConfig a = parse_config(
      std::nullopt, {{"out", "o"}, {"head", "mog"}, {"hidden", "32,16"}, {"gamma", "0.95"}});
  const std::string path = write_temp("roundtrip.cfg", a.to_text());
  const ExperimentConfig b = parse_config(path, {});
  EXPECT_EQ(a.to_text(), b.to_text());
  EXPECT_EQ(a.hash(), b.hash());
}

TEST(Config, LearnerConfigCarriesValues) {
  const ExperimentConfig c = parse_config(
      std::nullopt, {{"out", "o"}, {"nstep", "3"}, {"atoms", "21"}, {"prioritized", "false"}});
  const LearnerConfig l = c.learner_config();
  EXPECT_EQ(l.nstep, 3);
  EXPECT_EQ(l.atoms, 21);
  EXPECT_FALSE(l.prioritized);
  EXPECT_FALSE(c.replay_config().prioritized);
  EXPECT_EQ(l.v_max, 1.0 / (1.0 - 0.99));
}
