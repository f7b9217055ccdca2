#pragma once

// Training checkpoints. Layout (little-endian):
//
//   u32 magic, u32 format version, u64 config hash, u32 runtime flag
//   counters and metric accumulators
//   4 parameter frames (actor, critic, target actor, target critic)
//   4 moment frames (actor m, v; critic m, v) each followed by i64 Adam step
//   learner rng state
//   latest published snapshot (frame, or version 0)
//   runtime section when the flag is set: snapshots held by actors, replay
//   contents, per-actor env / rng / accumulator state
//   u64 FNV-1a over every preceding byte

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "d4pg/actor.hpp"
#include "d4pg/learner.hpp"
#include "d4pg/replay.hpp"

namespace d4pg {

inline constexpr std::uint32_t kCheckpointMagic = 0xD4C4EC01u;
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointData {
  std::uint64_t config_hash = 0;
  std::int64_t learner_steps = 0;
  std::int64_t actor_steps = 0;
  double wall_time_s = 0.0;
  double critic_loss_sum = 0.0;
  double actor_objective_sum = 0.0;
  std::int64_t metric_count = 0;

  NetworkQuad nets;
  AdamState actor_adam;
  AdamState critic_adam;
  std::string learner_rng;
  std::shared_ptr<const ParameterSnapshot> latest;

  // Present only for deterministic runs, where resume must be bit-exact.
  bool has_runtime = false;
  PrioritizedReplay::State replay;
  std::vector<Actor::State> actors;
};

std::vector<std::uint8_t> encode_checkpoint(const CheckpointData& data);

// `shapes` supplies the expected network shapes; a mismatch throws
// LoadError naming the network and layer.
CheckpointData decode_checkpoint(std::span<const std::uint8_t> bytes, const NetworkQuad& shapes);

// Writes to a temporary file and renames it into place.
void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path, const NetworkQuad& shapes);

}  // namespace d4pg
