#include "d4pg/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>

#include "d4pg/errors.hpp"
#include "d4pg/frame.hpp"

namespace d4pg {
namespace {

DenseNet moments_as_net(const DenseNet& shape, const std::vector<Eigen::MatrixXd>& w,
                        const std::vector<Eigen::VectorXd>& b) {
  DenseNet net = shape;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    net.layers[l].weights = w[l];
    net.layers[l].bias = b[l];
  }
  return net;
}

void write_adam(ByteWriter& out, const DenseNet& shape, const AdamState& adam) {
  write_frame(out, moments_as_net(shape, adam.m_weights, adam.m_biases), 0);
  write_frame(out, moments_as_net(shape, adam.v_weights, adam.v_biases), 0);
  out.i64(adam.step_count);
}

AdamState read_adam(ByteReader& in, const DenseNet& shape, const std::string& label) {
  AdamState adam = AdamState::for_net(shape);
  DenseNet m = shape;
  DenseNet v = shape;
  load_frame_into(m, read_frame(in, label + " m"), label + " m");
  load_frame_into(v, read_frame(in, label + " v"), label + " v");
  for (std::size_t l = 0; l < shape.layers.size(); ++l) {
    adam.m_weights[l] = m.layers[l].weights;
    adam.m_biases[l] = m.layers[l].bias;
    adam.v_weights[l] = v.layers[l].weights;
    adam.v_biases[l] = v.layers[l].bias;
  }
  adam.step_count = in.i64("adam step");
  return adam;
}

DenseNet read_net(ByteReader& in, const DenseNet& shape, const std::string& label) {
  DenseNet net = shape;
  load_frame_into(net, read_frame(in, label), label);
  return net;
}

void write_transition(ByteWriter& out, const Transition& t) {
  out.vec(t.x);
  out.vec(t.a);
  out.f64(t.cumulative_reward);
  out.vec(t.bootstrap_x);
  out.f64(t.effective_discount);
}

Transition read_transition(ByteReader& in) {
  Transition t;
  t.x = in.vec("transition");
  t.a = in.vec("transition");
  t.cumulative_reward = in.f64("transition");
  t.bootstrap_x = in.vec("transition");
  t.effective_discount = in.f64("transition");
  return t;
}

void write_snapshot(ByteWriter& out, const std::shared_ptr<const ParameterSnapshot>& s) {
  out.u64(s ? s->version : 0);
  if (s) write_frame(out, s->actor, s->version);
}

std::shared_ptr<const ParameterSnapshot> read_snapshot(ByteReader& in, const DenseNet& shape) {
  const std::uint64_t version = in.u64("snapshot");
  if (version == 0) return nullptr;
  auto snapshot = std::make_shared<ParameterSnapshot>();
  snapshot->actor = read_net(in, shape, "snapshot");
  snapshot->version = version;
  snapshot->checksum = parameter_checksum(snapshot->actor);
  return snapshot;
}

std::size_t checked_count(ByteReader& in, const char* what, std::size_t limit) {
  const std::uint64_t n = in.u64(what);
  if (n > limit) throw LoadError(std::string(what) + ": implausible count");
  return static_cast<std::size_t>(n);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const CheckpointData& d) {
  ByteWriter out;
  out.u32(kCheckpointMagic);
  out.u32(kCheckpointVersion);
  out.u64(d.config_hash);
  out.u32(d.has_runtime ? 1 : 0);
  out.i64(d.learner_steps);
  out.i64(d.actor_steps);
  out.f64(d.wall_time_s);
  out.f64(d.critic_loss_sum);
  out.f64(d.actor_objective_sum);
  out.i64(d.metric_count);

  const auto v = static_cast<std::uint64_t>(d.learner_steps);
  write_frame(out, d.nets.actor, v);
  write_frame(out, d.nets.critic, v);
  write_frame(out, d.nets.target_actor, v);
  write_frame(out, d.nets.target_critic, v);
  write_adam(out, d.nets.actor, d.actor_adam);
  write_adam(out, d.nets.critic, d.critic_adam);
  out.str(d.learner_rng);
  write_snapshot(out, d.latest);

  if (d.has_runtime) {
    // Actors may hold older snapshots than the latest; store each once.
    std::map<std::uint64_t, std::shared_ptr<const ParameterSnapshot>> held;
    for (const auto& a : d.actors) {
      if (a.snapshot) held.emplace(a.snapshot->version, a.snapshot);
    }
    out.u64(held.size());
    for (const auto& [version, snapshot] : held) write_snapshot(out, snapshot);

    const auto& r = d.replay;
    out.u64(r.items.size());
    for (std::size_t i = 0; i < r.items.size(); ++i) {
      write_transition(out, r.items[i]);
      out.u64(r.generations[i]);
      out.f64(r.priorities[i]);
    }
    out.f64(r.max_priority);
    out.u64(r.cursor);
    out.u64(r.next_generation);
    out.u64(r.stale_skips);

    out.u64(d.actors.size());
    for (const auto& a : d.actors) {
      out.u64(a.env_state.size());
      for (double s : a.env_state) out.f64(s);
      out.vec(a.observation);
      out.str(a.env_rng);
      out.str(a.noise_rng);
      out.u64(a.pending.size());
      for (const auto& step : a.pending) {
        out.vec(step.x);
        out.vec(step.a);
        out.f64(step.r);
      }
      out.vec(a.last_next);
      out.u32(a.accumulator_closed ? 1 : 0);
      out.u32(a.need_reset ? 1 : 0);
      out.i64(a.steps);
      out.i64(a.episodes);
      out.i64(a.faults);
      out.i64(a.steps_since_fetch);
      out.f64(a.episode_return);
      out.f64(a.last_episode_return);
      out.u64(a.snapshot ? a.snapshot->version : 0);
    }
  }
  const std::uint64_t checksum = fnv1a64(out.data());
  out.u64(checksum);
  return out.take();
}

CheckpointData decode_checkpoint(std::span<const std::uint8_t> bytes, const NetworkQuad& shapes) {
  if (bytes.size() < 8) throw LoadError("checkpoint: file too short");
  const auto payload = bytes.first(bytes.size() - 8);
  {
    ByteReader tail(bytes.subspan(bytes.size() - 8));
    if (tail.u64("checkpoint checksum") != fnv1a64(payload)) {
      throw LoadError("checkpoint: checksum mismatch");
    }
  }
  ByteReader in(payload);
  if (in.u32("checkpoint header") != kCheckpointMagic) throw LoadError("checkpoint: bad magic");
  const std::uint32_t version = in.u32("checkpoint header");
  if (version != kCheckpointVersion) {
    throw LoadError("checkpoint: unsupported format version " + std::to_string(version));
  }
  CheckpointData d;
  d.config_hash = in.u64("checkpoint header");
  d.has_runtime = in.u32("checkpoint header") != 0;
  d.learner_steps = in.i64("counters");
  d.actor_steps = in.i64("counters");
  d.wall_time_s = in.f64("counters");
  d.critic_loss_sum = in.f64("counters");
  d.actor_objective_sum = in.f64("counters");
  d.metric_count = in.i64("counters");

  d.nets.actor = read_net(in, shapes.actor, "actor");
  d.nets.critic = read_net(in, shapes.critic, "critic");
  d.nets.target_actor = read_net(in, shapes.target_actor, "target actor");
  d.nets.target_critic = read_net(in, shapes.target_critic, "target critic");
  d.actor_adam = read_adam(in, shapes.actor, "actor adam");
  d.critic_adam = read_adam(in, shapes.critic, "critic adam");
  d.learner_rng = in.str("learner rng");
  d.latest = read_snapshot(in, shapes.actor);

  if (d.has_runtime) {
    std::map<std::uint64_t, std::shared_ptr<const ParameterSnapshot>> held;
    const std::size_t snapshots = checked_count(in, "held snapshots", in.remaining());
    for (std::size_t i = 0; i < snapshots; ++i) {
      auto s = read_snapshot(in, shapes.actor);
      if (s) held.emplace(s->version, s);
    }
    if (d.latest) held[d.latest->version] = d.latest;

    auto& r = d.replay;
    const std::size_t items = checked_count(in, "replay", in.remaining());
    for (std::size_t i = 0; i < items; ++i) {
      r.items.push_back(read_transition(in));
      r.generations.push_back(in.u64("replay"));
      r.priorities.push_back(in.f64("replay"));
    }
    r.max_priority = in.f64("replay");
    r.cursor = in.u64("replay");
    r.next_generation = in.u64("replay");
    r.stale_skips = in.u64("replay");

    const std::size_t actors = checked_count(in, "actors", in.remaining());
    for (std::size_t i = 0; i < actors; ++i) {
      Actor::State a;
      const std::size_t env_len = checked_count(in, "actor env", in.remaining());
      for (std::size_t k = 0; k < env_len; ++k) a.env_state.push_back(in.f64("actor env"));
      a.observation = in.vec("actor");
      a.env_rng = in.str("actor rng");
      a.noise_rng = in.str("actor rng");
      const std::size_t pending = checked_count(in, "actor accumulator", in.remaining());
      for (std::size_t k = 0; k < pending; ++k) {
        NStepAccumulator::Step step;
        step.x = in.vec("actor accumulator");
        step.a = in.vec("actor accumulator");
        step.r = in.f64("actor accumulator");
        a.pending.push_back(std::move(step));
      }
      a.last_next = in.vec("actor accumulator");
      a.accumulator_closed = in.u32("actor") != 0;
      a.need_reset = in.u32("actor") != 0;
      a.steps = in.i64("actor");
      a.episodes = in.i64("actor");
      a.faults = in.i64("actor");
      a.steps_since_fetch = in.i64("actor");
      a.episode_return = in.f64("actor");
      a.last_episode_return = in.f64("actor");
      const std::uint64_t held_version = in.u64("actor");
      if (held_version != 0) {
        auto it = held.find(held_version);
        if (it == held.end()) throw LoadError("checkpoint: actor references unknown snapshot");
        a.snapshot = it->second;
      }
      d.actors.push_back(std::move(a));
    }
  }
  if (in.remaining() != 0) throw LoadError("checkpoint: trailing bytes");
  return d;
}

void save_checkpoint(const std::string& path, const CheckpointData& data) {
  const auto bytes = encode_checkpoint(data);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + tmp + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("cannot write checkpoint '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw std::runtime_error("cannot move checkpoint into place at '" + path + "'");
  }
}

CheckpointData load_checkpoint(const std::string& path, const NetworkQuad& shapes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint '" + path + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, shapes);
}

}  // namespace d4pg
