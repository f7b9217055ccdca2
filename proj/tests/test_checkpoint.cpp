#include <gtest/gtest.h>

#include <filesystem>

#include "d4pg/checkpoint.hpp"
#include "d4pg/errors.hpp"
#include "d4pg/experiment.hpp"
#include "d4pg/frame.hpp"
#include "d4pg/rng.hpp"

using namespace d4pg;
namespace fs = std::filesystem;

namespace {

DenseNet sample_net(std::uint64_t seed) {
  return init_net(NetSpec{{3, 5, 2}, Activation::kRelu, Activation::kTanh}, seed);
}

ExperimentConfig small_config(const std::string& out) {
  return parse_config(std::nullopt, {{"env", "lq"},
                                     {"hidden", "16,16"},
                                     {"batch", "16"},
                                     {"min_replay", "32"},
                                     {"actors", "2"},
                                     {"deterministic", "true"},
                                     {"steps", "40"},
                                     {"eval_every", "20"},
                                     {"eval_episodes", "1"},
                                     {"out", out}});
}

std::string temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "d4pg_test_checkpoint" / name;
  fs::remove_all(p);
  return p.string();
}

}  // namespace

TEST(Frame, RoundTrip) {
  const DenseNet net = sample_net(1);
  const auto bytes = encode_frame(net, 42);
  const DecodedFrame f = decode_frame(bytes);
  EXPECT_EQ(f.version, 42u);
  DenseNet copy = DenseNet::zeros(net.spec);
  load_frame_into(copy, f, "actor");
  EXPECT_EQ(copy, net);
}

TEST(Frame, LayoutHeader) {
  const auto bytes = encode_frame(sample_net(1), 7);
  ASSERT_GE(bytes.size(), 16u);
  EXPECT_EQ(bytes[0], 0x06);
  EXPECT_EQ(bytes[1], 0x47);
  EXPECT_EQ(bytes[2], 0x50);
  EXPECT_EQ(bytes[3], 0xD4);
  EXPECT_EQ(bytes[4], 7);
  EXPECT_EQ(bytes[12], 2);
  // magic, version, count, then per layer rows, cols, weights, bias; checksum.
  const std::size_t expected = 4 + 8 + 4 + (8 + 8 * (5 * 3 + 5)) + (8 + 8 * (2 * 5 + 2)) + 8;
  EXPECT_EQ(bytes.size(), expected);
}

TEST(Frame, EveryFlippedByteIsDetected) {
  const auto clean = encode_frame(sample_net(2), 1);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    auto bytes = clean;
    bytes[i] ^= 0x10;
    EXPECT_THROW(decode_frame(bytes), LoadError) << "byte " << i;
  }
}

TEST(Frame, TruncationIsDetected) {
  const auto clean = encode_frame(sample_net(2), 1);
  for (std::size_t n : {0ul, 3ul, 20ul, clean.size() - 1}) {
    EXPECT_THROW(decode_frame(std::span(clean).first(n)), LoadError) << n;
  }
}

TEST(Frame, ShapeMismatchNamesLayer) {
  const auto bytes = encode_frame(sample_net(3), 1);
  DenseNet other = DenseNet::zeros(NetSpec{{3, 6, 2}, Activation::kRelu, Activation::kTanh});
  try {
    load_frame_into(other, decode_frame(bytes), "critic");
    FAIL();
  } catch (const LoadError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("critic"), std::string::npos) << what;
    EXPECT_NE(what.find("layer 0"), std::string::npos) << what;
  }
}

TEST(Rng, SaveLoadContinuesStream) {
  std::mt19937_64 a(5);
  for (int i = 0; i < 1000; ++i) a();
  std::mt19937_64 b = load_rng(save_rng(a));
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a(), b());
  EXPECT_THROW(load_rng("not a state"), LoadError);
}

TEST(Rng, DerivedSeedsAreDistinctAndStable) {
  EXPECT_EQ(derive_seed(1, "replay"), derive_seed(1, "replay"));
  EXPECT_NE(derive_seed(1, "replay"), derive_seed(1, "init"));
  EXPECT_NE(derive_seed(1, "replay"), derive_seed(2, "replay"));
  EXPECT_NE(derive_seed(1, "eval", 0), derive_seed(1, "eval", 1));
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = temp_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
    trainer_ = std::make_unique<Trainer>(small_config(dir_));
    trainer_->run();
  }
  std::string dir_;
  std::unique_ptr<Trainer> trainer_;
};

TEST_F(CheckpointTest, SaveLoadSaveIsByteIdentical) {
  const auto first = encode_checkpoint(trainer_->checkpoint());
  const CheckpointData loaded = decode_checkpoint(first, trainer_->learner().nets());
  EXPECT_TRUE(loaded.has_runtime);
  EXPECT_EQ(loaded.learner_steps, 40);
  EXPECT_EQ(loaded.nets.actor, trainer_->learner().nets().actor);
  EXPECT_EQ(loaded.critic_adam, trainer_->learner().critic_adam());
  EXPECT_EQ(encode_checkpoint(loaded), first);
}

TEST_F(CheckpointTest, FileMatchesInMemoryEncoding) {
  const CheckpointData onfile = load_checkpoint(trainer_->checkpoint_path(), trainer_->learner().nets());
  EXPECT_EQ(encode_checkpoint(onfile), encode_checkpoint(trainer_->checkpoint()));
}

TEST_F(CheckpointTest, CorruptByteIsLoadError) {
  const auto clean = encode_checkpoint(trainer_->checkpoint());
  for (std::size_t i : {0ul, 9ul, clean.size() / 3, clean.size() / 2, clean.size() - 1}) {
    auto bytes = clean;
    bytes[i] ^= 0x01;
    EXPECT_THROW(decode_checkpoint(bytes, trainer_->learner().nets()), LoadError) << i;
  }
  EXPECT_THROW(decode_checkpoint(std::span(clean).first(clean.size() - 9), trainer_->learner().nets()),
               LoadError);
}

TEST_F(CheckpointTest, ShapeMismatchNamesNetworkAndLayer) {
  ExperimentConfig wider = small_config(dir_);
  wider.set("hidden", "16,32");
  Trainer other(wider);
  try {
    load_checkpoint(trainer_->checkpoint_path(), other.learner().nets());
    FAIL();
  } catch (const LoadError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("actor"), std::string::npos) << what;
    EXPECT_NE(what.find("layer 1"), std::string::npos) << what;
  }
}

TEST_F(CheckpointTest, ConfigHashMismatchNeedsForce) {
  ExperimentConfig changed = small_config(dir_);
  changed.set("critic_lr", "0.001");
  const CheckpointData data = trainer_->checkpoint();
  Trainer a(changed);
  EXPECT_THROW(a.restore(data, false), UsageError);
  Trainer b(changed);
  EXPECT_NO_THROW(b.restore(data, true));
  EXPECT_EQ(b.learner_steps(), 40);
}

TEST_F(CheckpointTest, MissingFileIsLoadError) {
  EXPECT_THROW(load_checkpoint(dir_ + "/absent.bin", trainer_->learner().nets()), LoadError);
}
