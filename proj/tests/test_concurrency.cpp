#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <thread>
#include <vector>

#include "d4pg/actor.hpp"
#include "d4pg/envs.hpp"
#include "d4pg/replay.hpp"

using namespace d4pg;
using Clock = std::chrono::steady_clock;

TEST(SnapshotStoreStress, SixtySecondsOfMillisecondPublishes) {
  SnapshotStore store;
  const NetSpec spec{{16, 64, 64, 4}, Activation::kRelu, Activation::kTanh};
  store.publish(init_net(spec, 0));
  std::atomic<bool> stop{false};
  std::atomic<std::int64_t> reads{0}, bad{0};
  std::vector<std::thread> readers;
  for (int r = 0; r < 3; ++r) {
    readers.emplace_back([&] {
      std::uint64_t last = 0;
      while (!stop.load()) {
        auto s = store.fetch();
        if (!s->verify() || s->version < last) ++bad;
        last = s->version;
        ++reads;
      }
    });
  }
  const auto end = Clock::now() + std::chrono::seconds(60);
  std::uint64_t seed = 1;
  while (Clock::now() < end) {
    store.publish(init_net(spec, seed++));
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  stop.store(true);
  for (auto& t : readers) t.join();
  EXPECT_EQ(bad.load(), 0);
  EXPECT_GT(reads.load(), 0);
  EXPECT_EQ(store.latest_version(), seed);
}

namespace {

std::int64_t transitions_per_second(int k) {
  SnapshotStore store;
  NetSpec spec;
  spec.layer_sizes = {3, 256, 256, 1};
  spec.output = Activation::kTanh;
  store.publish(init_net(spec, 1));
  PrioritizedReplay replay({.capacity = 1 << 20});
  std::vector<std::unique_ptr<Actor>> actors;
  ActorConfig cfg;
  cfg.num_actors = k;
  for (int i = 0; i < k; ++i) {
    actors.push_back(std::make_unique<Actor>(i, make_env("pendulum"), cfg, 5, 0.99));
  }
  std::atomic<bool> stop{false};
  std::atomic<std::int64_t> steps{0};
  ActorLoopHooks hooks;
  hooks.step_counter = &steps;
  std::vector<std::thread> threads;
  for (auto& a : actors) {
    threads.emplace_back([&, actor = a.get()] { actor_loop(*actor, replay, store, stop, hooks); });
  }
  std::this_thread::sleep_for(std::chrono::seconds(3));
  stop.store(true);
  for (auto& t : threads) t.join();
  return steps.load() / 3;
}

}  // namespace

TEST(ActorThroughput, FourActorsCollectAtLeastTwiceOne) {
  if (std::thread::hardware_concurrency() < 4) {
    GTEST_SKIP() << "needs at least 4 hardware threads, have "
                 << std::thread::hardware_concurrency();
  }
  const std::int64_t one = transitions_per_second(1);
  const std::int64_t four = transitions_per_second(4);
  EXPECT_GE(four, 2 * one) << "K=1: " << one << "/s, K=4: " << four << "/s";
}
