// SPDX-License-Identifier: Apache-2.0
#include "echo/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "echo/errors.hpp"
#include "echo/format.hpp"

namespace echo {

namespace {

double parse_double(const std::string& value, const std::string& key) {
  // strtod accepts the full float grammar including exponents; from_chars
  // for doubles is still shaky on some standard libraries.
  const char* begin = value.c_str();
  char* end = nullptr;
  const double parsed = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || !std::isfinite(parsed)) {
    throw ConfigError("config: bad numeric value for " + key + ": '" + value +
                      "'");
  }
  return parsed;
}

long long parse_int(const std::string& value, const std::string& key) {
  long long parsed = 0;
  const auto [ptr, ec] =
      std::from_chars(value.data(), value.data() + value.size(), parsed);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("config: bad integer value for " + key + ": '" + value +
                      "'");
  }
  return parsed;
}

rollout::ScheduleMode parse_mode(const std::string& value) {
  if (value == "hybrid") return rollout::ScheduleMode::hybrid;
  if (value == "entropy_only") return rollout::ScheduleMode::entropy_only;
  if (value == "chain") return rollout::ScheduleMode::chain;
  throw ConfigError("config: schedule_mode must be hybrid, entropy_only, or "
                    "chain; got '" + value + "'");
}

using Setter = std::function<void(EchoConfig&, const std::string&,
                                  const std::string&)>;
using Getter = std::function<std::string(const EchoConfig&)>;

std::string format_number(double v) { return format_double(v); }

struct KeyEntry {
  const char* name;
  Setter set;
  Getter get;
};

#define ECHO_INT_KEY(NAME, FIELD)                                         \
  KeyEntry{NAME,                                                          \
           [](EchoConfig& c, const std::string& k, const std::string& v) { \
             c.FIELD = static_cast<decltype(c.FIELD)>(parse_int(v, k));   \
           },                                                             \
           [](const EchoConfig& c) { return std::to_string(c.FIELD); }}

#define ECHO_REAL_KEY(NAME, FIELD)                                        \
  KeyEntry{NAME,                                                          \
           [](EchoConfig& c, const std::string& k, const std::string& v) { \
             c.FIELD = parse_double(v, k);                                \
           },                                                             \
           [](const EchoConfig& c) { return format_number(c.FIELD); }}

const std::vector<KeyEntry>& key_table() {
  static const std::vector<KeyEntry> table = {
      ECHO_INT_KEY("k", signal.top_k),
      ECHO_INT_KEY("W_G", signal.group_window),
      ECHO_INT_KEY("W_T", signal.tail_window),
      ECHO_INT_KEY("W_H", signal.entropy_window),
      ECHO_INT_KEY("B_min", scheduler.min_width),
      ECHO_INT_KEY("B_max", scheduler.max_width),
      ECHO_REAL_KEY("alpha_B", scheduler.entropy_gain),
      ECHO_REAL_KEY("beta_B", scheduler.confidence_gain),
      ECHO_REAL_KEY("H_low", scheduler.entropy_low),
      ECHO_REAL_KEY("H_high", scheduler.entropy_high),
      ECHO_REAL_KEY("s_branch", scheduler.confidence_ref),
      // eps_stab feeds both the schedule and the whitening guards.
      KeyEntry{"eps_stab",
               [](EchoConfig& c, const std::string& k, const std::string& v) {
                 const double parsed = parse_double(v, k);
                 c.scheduler.eps_stab = parsed;
                 c.shaping.eps_stab = parsed;
               },
               [](const EchoConfig& c) {
                 return format_number(c.scheduler.eps_stab);
               }},
      ECHO_REAL_KEY("tau_prune", prune.conf_floor),
      ECHO_INT_KEY("S_tail", prune.decline_patience),
      ECHO_REAL_KEY("tau_tail", prune.tail_floor),
      ECHO_REAL_KEY("delta_upper", prune.spike_threshold),
      ECHO_INT_KEY("S_delta", prune.spike_patience),
      ECHO_REAL_KEY("eps_min", clip.eps_min),
      ECHO_REAL_KEY("eps_max", clip.eps_max),
      ECHO_REAL_KEY("kappa", clip.kappa),
      ECHO_INT_KEY("W_tail_traj", clip.tail_window),
      ECHO_REAL_KEY("alpha_shape", shaping.entropy_weight),
      ECHO_REAL_KEY("beta_shape", shaping.confidence_weight),
      ECHO_REAL_KEY("a_scale", shaping.scale),
      ECHO_REAL_KEY("kl_coef", optimizer.kl_coef),
      ECHO_REAL_KEY("learning_rate", optimizer.learning_rate),
      ECHO_INT_KEY("train_batch", optimizer.train_batch),
      ECHO_INT_KEY("mini_batch", optimizer.mini_batch),
      ECHO_INT_KEY("micro_batch", optimizer.micro_batch),
      ECHO_INT_KEY("G", group_size),
      ECHO_INT_KEY("M", train_size),
      ECHO_INT_KEY("L", max_length),
      ECHO_INT_KEY("seed", seed),
      ECHO_INT_KEY("warmup_steps", warmup_steps),
      KeyEntry{"schedule_mode",
               [](EchoConfig& c, const std::string&, const std::string& v) {
                 c.mode = parse_mode(v);
               },
               [](const EchoConfig& c) {
                 return std::string(rollout::to_string(c.mode));
               }},
  };
  return table;
}

#undef ECHO_INT_KEY
#undef ECHO_REAL_KEY

const KeyEntry* find_key(const std::string& name) {
  for (const KeyEntry& entry : key_table()) {
    if (name == entry.name) return &entry;
  }
  return nullptr;
}

std::string trim(const std::string& text) {
  const auto begin = text.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = text.find_last_not_of(" \t\r");
  return text.substr(begin, end - begin + 1);
}

void require(bool condition, std::vector<std::string>& problems,
             const std::string& message) {
  if (!condition) problems.push_back(message);
}

}  // namespace

void validate(const EchoConfig& cfg) {
  std::vector<std::string> problems;
  require(cfg.signal.top_k >= 1, problems, "k must be >= 1");
  require(cfg.signal.group_window >= 1, problems, "W_G must be >= 1");
  require(cfg.signal.tail_window >= 1, problems, "W_T must be >= 1");
  require(cfg.signal.entropy_window >= 1, problems, "W_H must be >= 1");
  require(cfg.scheduler.min_width >= 1, problems, "B_min must be >= 1");
  require(cfg.scheduler.max_width >= cfg.scheduler.min_width, problems,
          "B_max must be >= B_min");
  require(cfg.scheduler.eps_stab > 0.0, problems, "eps_stab must be > 0");
  require(cfg.prune.decline_patience >= 1, problems, "S_tail must be >= 1");
  require(cfg.prune.spike_patience >= 1, problems, "S_delta must be >= 1");
  require(cfg.clip.eps_min > 0.0, problems, "eps_min must be > 0");
  require(cfg.clip.eps_max >= cfg.clip.eps_min, problems,
          "eps_max must be >= eps_min");
  require(cfg.clip.eps_max < 1.0, problems, "eps_max must be < 1");
  require(cfg.clip.kappa >= 0.0, problems, "kappa must be >= 0");
  require(cfg.clip.tail_window >= 1, problems, "W_tail_traj must be >= 1");
  require(cfg.optimizer.kl_coef >= 0.0, problems, "kl_coef must be >= 0");
  require(cfg.optimizer.learning_rate >= 0.0, problems,
          "learning_rate must be >= 0");
  require(cfg.optimizer.train_batch >= 1, problems, "train_batch must be >= 1");
  require(cfg.optimizer.mini_batch >= 1, problems, "mini_batch must be >= 1");
  require(cfg.optimizer.micro_batch >= 1, problems, "micro_batch must be >= 1");
  require(cfg.group_size >= 2, problems, "G must be >= 2");
  require(cfg.train_size >= 2, problems, "M must be >= 2");
  require(cfg.train_size <= cfg.group_size, problems, "M must be <= G");
  require(cfg.max_length >= 1, problems, "L must be >= 1");
  require(cfg.warmup_steps >= 0, problems, "warmup_steps must be >= 0");
  if (!problems.empty()) {
    std::string message = "config validation failed:";
    for (const std::string& p : problems) message += "\n  - " + p;
    throw ConfigError(message);
  }
}

EchoConfig parse_config(const std::string& text) {
  EchoConfig cfg;
  std::vector<std::string> unknown;
  std::istringstream stream(text);
  std::string line;
  while (std::getline(stream, line)) {
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: expected key=value, got '" + stripped + "'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    const KeyEntry* entry = find_key(key);
    if (entry == nullptr) {
      unknown.push_back(key);
      continue;
    }
    entry->set(cfg, key, value);
  }
  if (!unknown.empty()) {
    std::string message = "config: unknown keys:";
    for (const std::string& k : unknown) message += " '" + k + "'";
    throw ConfigError(message);
  }
  validate(cfg);
  return cfg;
}

EchoConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

void apply_override(EchoConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override: expected key=value, got '" + assignment +
                      "'");
  }
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  const KeyEntry* entry = find_key(key);
  if (entry == nullptr) {
    throw ConfigError("override: unknown key '" + key + "'");
  }
  entry->set(cfg, key, value);
  validate(cfg);
}

std::string serialize_config(const EchoConfig& cfg) {
  std::string out;
  for (const KeyEntry& entry : key_table()) {
    out += entry.name;
    out += '=';
    out += entry.get(cfg);
    out += '\n';
  }
  return out;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> list;
    for (const KeyEntry& entry : key_table()) list.emplace_back(entry.name);
    return list;
  }();
  return names;
}

}  // namespace echo
