#include "d4pg/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "d4pg/errors.hpp"
#include "d4pg/frame.hpp"

namespace d4pg {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
  throw UsageError("config key '" + key + "': cannot parse '" + value + "' as " + expected);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value, const char* expected) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) bad_value(key, value, expected);
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  bad_value(key, value, "a boolean");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item), "an integer list"));
  if (out.empty()) bad_value(key, value, "a non-empty integer list");
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct KeyDef {
  const char* name;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
  bool hashed;
};

#define D4PG_INT_KEY(field, type, hashed)                                                   \
  KeyDef {                                                                                  \
    #field,                                                                                 \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {               \
          c.field = parse_number<type>(k, v, "an integer");                                 \
        },                                                                                  \
        [](const ExperimentConfig& c) { return std::to_string(c.field); }, hashed           \
  }
#define D4PG_REAL_KEY(field, hashed)                                                        \
  KeyDef {                                                                                  \
    #field,                                                                                 \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {               \
          c.field = parse_number<double>(k, v, "a real number");                            \
        },                                                                                  \
        [](const ExperimentConfig& c) { return format_double(c.field); }, hashed            \
  }
#define D4PG_BOOL_KEY(field, hashed)                                                        \
  KeyDef {                                                                                  \
    #field,                                                                                 \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {               \
          c.field = parse_bool(k, v);                                                       \
        },                                                                                  \
        [](const ExperimentConfig& c) { return std::string(c.field ? "true" : "false"); },  \
        hashed                                                                              \
  }

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = {
      {"env", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.env = v; },
       [](const ExperimentConfig& c) { return c.env; }, true},
      {"head",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         try {
           c.head = parse_head_kind(v);
         } catch (const ConfigError&) {
           bad_value(k, v, "categorical|mog|scalar");
         }
       },
       [](const ExperimentConfig& c) { return to_string(c.head); }, true},
      D4PG_BOOL_KEY(prioritized, true),
      D4PG_INT_KEY(nstep, int, true),
      D4PG_INT_KEY(actors, int, true),
      D4PG_INT_KEY(atoms, int, true),
      {"vmin",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.vmin = parse_number<double>(k, v, "a real number");
       },
       [](const ExperimentConfig& c) { return format_double(c.resolved_vmin()); }, true},
      {"vmax",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.vmax = parse_number<double>(k, v, "a real number");
       },
       [](const ExperimentConfig& c) { return format_double(c.resolved_vmax()); }, true},
      D4PG_INT_KEY(mixture_size, int, true),
      D4PG_INT_KEY(mog_samples, int, true),
      D4PG_REAL_KEY(gamma, true),
      D4PG_REAL_KEY(actor_lr, true),
      D4PG_REAL_KEY(critic_lr, true),
      D4PG_INT_KEY(batch, int, true),
      D4PG_INT_KEY(replay, std::int64_t, true),
      D4PG_REAL_KEY(epsilon, true),
      D4PG_INT_KEY(t_target, int, true),
      D4PG_INT_KEY(t_actors, int, true),
      D4PG_INT_KEY(seed, std::uint64_t, true),
      D4PG_INT_KEY(steps, std::int64_t, false),
      D4PG_INT_KEY(eval_every, int, false),
      D4PG_INT_KEY(eval_episodes, int, false),
      D4PG_BOOL_KEY(deterministic, true),
      {"out", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.out = v; },
       [](const ExperimentConfig& c) { return c.out; }, false},
      {"hidden",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.hidden = parse_int_list(k, v);
       },
       [](const ExperimentConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.hidden.size(); ++i) {
           if (i) s += ",";
           s += std::to_string(c.hidden[i]);
         }
         return s;
       },
       true},
      D4PG_INT_KEY(min_replay, std::int64_t, true),
      D4PG_INT_KEY(actor_fetch_every, int, true),
      D4PG_REAL_KEY(max_grad_norm, true),
      {"sampling",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         if (v == "stratified") {
           c.sampling = SamplingMode::kStratified;
         } else if (v == "multinomial") {
           c.sampling = SamplingMode::kMultinomial;
         } else {
           bad_value(k, v, "stratified|multinomial");
         }
       },
       [](const ExperimentConfig& c) {
         return std::string(c.sampling == SamplingMode::kStratified ? "stratified" : "multinomial");
       },
       true},
      D4PG_REAL_KEY(actor_steps_per_learner_step, true),
  };
  return table;
}

#undef D4PG_INT_KEY
#undef D4PG_REAL_KEY
#undef D4PG_BOOL_KEY

const KeyDef& find_key(const std::string& key) {
  for (const auto& def : key_table()) {
    if (key == def.name) return def;
  }
  throw UsageError("unknown config key '" + key + "'");
}

}  // namespace

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& def : key_table()) out.emplace_back(def.name);
    return out;
  }();
  return names;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  find_key(key).set(*this, key, trim(value));
  explicit_keys.insert(key);
}

std::string ExperimentConfig::get(const std::string& key) const { return find_key(key).get(*this); }

double ExperimentConfig::resolved_vmin() const { return vmin.value_or(0.0); }

double ExperimentConfig::resolved_vmax() const {
  if (vmax) return *vmax;
  // Rewards lie in [0, 1]: returns are bounded by r_max / (1 - gamma) and by
  // the episode length.
  const int limit = make_env(env)->spec().episode_limit;
  const double horizon = gamma < 1.0 ? 1.0 / (1.0 - gamma) : limit;
  return std::min(horizon, static_cast<double>(limit));
}

LearnerConfig ExperimentConfig::learner_config() const {
  LearnerConfig lc;
  lc.batch = batch;
  lc.nstep = nstep;
  lc.gamma = gamma;
  lc.actor_lr = actor_lr;
  lc.critic_lr = critic_lr;
  lc.t_target = t_target;
  lc.t_actors = t_actors;
  lc.head = head;
  lc.prioritized = prioritized;
  lc.atoms = atoms;
  lc.v_min = resolved_vmin();
  lc.v_max = resolved_vmax();
  lc.mixture_size = mixture_size;
  lc.mog_samples = mog_samples;
  lc.hidden = hidden;
  lc.max_grad_norm = max_grad_norm;
  return lc;
}

ReplayConfig ExperimentConfig::replay_config() const {
  ReplayConfig rc;
  rc.capacity = static_cast<std::size_t>(replay);
  rc.prioritized = prioritized;
  rc.mode = sampling;
  return rc;
}

double ExperimentConfig::actor_throttle_ratio() const {
  return actor_steps_per_learner_step > 0.0 ? actor_steps_per_learner_step
                                            : static_cast<double>(actors);
}

void ExperimentConfig::validate(bool require_out) const {
  if (require_out && out.empty()) throw UsageError("missing required key 'out' (output directory)");
  if (explicit_keys.count("atoms") && head != HeadKind::kCategorical) {
    throw UsageError("config key 'atoms' is only valid with head = categorical");
  }
  if (explicit_keys.count("mixture_size") && head != HeadKind::kMixtureOfGaussians) {
    throw UsageError("config key 'mixture_size' is only valid with head = mog");
  }
  if (explicit_keys.count("mog_samples") && head != HeadKind::kMixtureOfGaussians) {
    throw UsageError("config key 'mog_samples' is only valid with head = mog");
  }
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw UsageError(what);
  };
  require(actors >= 1, "config key 'actors' must be >= 1");
  require(replay >= batch, "config key 'replay' must be >= batch");
  require(epsilon >= 0.0, "config key 'epsilon' must be >= 0");
  require(steps >= 0, "config key 'steps' must be >= 0");
  require(eval_every >= 1, "config key 'eval_every' must be >= 1");
  require(eval_episodes >= 1, "config key 'eval_episodes' must be >= 1");
  require(min_replay >= 0, "config key 'min_replay' must be >= 0");
  require(actor_fetch_every >= 1, "config key 'actor_fetch_every' must be >= 1");
  try {
    make_env(env);
    learner_config().validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

std::string ExperimentConfig::to_text() const {
  std::string text;
  for (const auto& def : key_table()) {
    const std::string name = def.name;
    if (name == "atoms" && head != HeadKind::kCategorical) continue;
    if ((name == "mixture_size" || name == "mog_samples") && head != HeadKind::kMixtureOfGaussians) {
      continue;
    }
    text += name + " = " + def.get(*this) + "\n";
  }
  return text;
}

std::uint64_t ExperimentConfig::hash() const {
  std::string text;
  for (const auto& def : key_table()) {
    if (def.hashed) text += std::string(def.name) + "=" + def.get(*this) + "\n";
  }
  const auto* bytes = reinterpret_cast<const std::uint8_t*>(text.data());
  return fnv1a64({bytes, text.size()});
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(number) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw UsageError("config line " + std::to_string(number) + ": empty key");
    out[key] = value;
  }
  return out;
}

ExperimentConfig parse_config(const std::optional<std::string>& path,
                              const std::map<std::string, std::string>& overrides,
                              bool require_out) {
  ExperimentConfig cfg;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw UsageError("cannot read config file '" + *path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    for (const auto& [key, value] : parse_config_text(ss.str())) cfg.set(key, value);
  }
  for (const auto& [key, value] : overrides) cfg.set(key, value);
  cfg.validate(require_out);
  return cfg;
}

}  // namespace d4pg
