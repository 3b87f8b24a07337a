#pragma once

#include <charconv>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "iqn/agent.hpp"
#include "iqn/distortion.hpp"
#include "iqn/envs.hpp"
#include "iqn/error.hpp"

namespace iqn {

// Everything one CLI invocation needs. Keys are `section.name`; inside a
// `[section]` block the prefix may be omitted.
struct ExperimentConfig {
  std::string env = "bandit:risky";
  AgentConfig agent{};
  bool gamma_from_env = true;  // loss.gamma unset: use the env's recommendation
  std::size_t steps = 20000;
  std::vector<std::uint64_t> seeds{0};
  std::string out_dir = "out";
  std::size_t jobs = 1;
  std::vector<std::size_t> sweep_n{1, 8, 32, 64};
  std::vector<std::size_t> sweep_n_prime{1, 8, 32, 64};
  std::vector<std::string> measures{"neutral", "cpw:0.71", "wang:1.5", "cvar:0.1",
                                    "cvar:0.25", "wang:-0.75", "pow:-2"};

  // Agent config for one run, with env-dependent fields filled in.
  AgentConfig resolved_agent(std::uint64_t seed) const {
    AgentConfig a = agent;
    a.seed = seed;
    if (gamma_from_env) a.loss.gamma = make_environment(env)->recommended_gamma();
    return a;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (;;) {
    const auto comma = v.find(',', pos);
    const std::string item = trim(std::string_view(v).substr(pos, comma - pos));
    if (item.empty()) throw ConfigError("empty list element in '" + v + "'");
    out.push_back(item);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

inline std::uint64_t to_u64(const std::string& v) {
  std::uint64_t x = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("expected a non-negative integer, got '" + v + "'");
  }
  return x;
}

inline std::size_t to_size(const std::string& v) { return static_cast<std::size_t>(to_u64(v)); }

inline double to_double(const std::string& v) { return parse_double(v, "value"); }

inline bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected true/false, got '" + v + "'");
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += f(xs[i]);
  }
  return out;
}

struct KeyHandler {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

inline std::string list_sizes(const std::vector<std::size_t>& v) {
  return join(v, [](std::size_t x) { return std::to_string(x); });
}

inline std::vector<std::size_t> parse_sizes(const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& s : split_list(v)) out.push_back(to_size(s));
  return out;
}

// Ordered table of every recognised key.
inline const std::vector<std::pair<std::string, KeyHandler>>& key_table() {
  using C = ExperimentConfig;
  static const std::vector<std::pair<std::string, KeyHandler>> table = {
      {"env.name", {[](C& c, const std::string& v) { make_environment(v); c.env = v; },
                    [](const C& c) { return c.env; }}},

      {"agent.algorithm",
       {[](C& c, const std::string& v) { c.agent.algorithm = parse_algorithm(v); },
        [](const C& c) { return std::string(to_string(c.agent.algorithm)); }}},
      {"agent.steps", {[](C& c, const std::string& v) { c.steps = to_size(v); },
                       [](const C& c) { return std::to_string(c.steps); }}},
      {"agent.buffer", {[](C& c, const std::string& v) { c.agent.buffer_capacity = to_size(v); },
                        [](const C& c) { return std::to_string(c.agent.buffer_capacity); }}},
      {"agent.batch", {[](C& c, const std::string& v) { c.agent.batch_size = to_size(v); },
                       [](const C& c) { return std::to_string(c.agent.batch_size); }}},
      {"agent.warmup", {[](C& c, const std::string& v) { c.agent.warmup = to_size(v); },
                        [](const C& c) { return std::to_string(c.agent.warmup); }}},
      {"agent.target_sync",
       {[](C& c, const std::string& v) { c.agent.target_sync_period = to_size(v); },
        [](const C& c) { return std::to_string(c.agent.target_sync_period); }}},
      {"agent.train_period",
       {[](C& c, const std::string& v) { c.agent.train_period = to_size(v); },
        [](const C& c) { return std::to_string(c.agent.train_period); }}},
      {"agent.epsilon_start",
       {[](C& c, const std::string& v) { c.agent.epsilon.start = to_double(v); },
        [](const C& c) { return fmt(c.agent.epsilon.start); }}},
      {"agent.epsilon_end",
       {[](C& c, const std::string& v) { c.agent.epsilon.end = to_double(v); },
        [](const C& c) { return fmt(c.agent.epsilon.end); }}},
      {"agent.epsilon_decay",
       {[](C& c, const std::string& v) { c.agent.epsilon.decay_steps = to_size(v); },
        [](const C& c) { return std::to_string(c.agent.epsilon.decay_steps); }}},
      {"agent.lr",
       {[](C& c, const std::string& v) { c.agent.optimizer.learning_rate = to_double(v); },
        [](const C& c) { return fmt(c.agent.optimizer.learning_rate); }}},
      {"agent.beta1", {[](C& c, const std::string& v) { c.agent.optimizer.beta1 = to_double(v); },
                       [](const C& c) { return fmt(c.agent.optimizer.beta1); }}},
      {"agent.beta2", {[](C& c, const std::string& v) { c.agent.optimizer.beta2 = to_double(v); },
                       [](const C& c) { return fmt(c.agent.optimizer.beta2); }}},
      {"agent.adam_epsilon",
       {[](C& c, const std::string& v) { c.agent.optimizer.epsilon = to_double(v); },
        [](const C& c) { return fmt(c.agent.optimizer.epsilon); }}},
      {"agent.eval_period",
       {[](C& c, const std::string& v) { c.agent.eval_period = to_size(v); },
        [](const C& c) { return std::to_string(c.agent.eval_period); }}},
      {"agent.eval_episodes",
       {[](C& c, const std::string& v) { c.agent.eval_episodes = to_size(v); },
        [](const C& c) { return std::to_string(c.agent.eval_episodes); }}},
      {"agent.final_eval_episodes",
       {[](C& c, const std::string& v) { c.agent.final_eval_episodes = to_size(v); },
        [](const C& c) { return std::to_string(c.agent.final_eval_episodes); }}},
      {"agent.final_eval_steps",
       {[](C& c, const std::string& v) { c.agent.final_eval_steps = to_size(v); },
        [](const C& c) { return std::to_string(c.agent.final_eval_steps); }}},
      {"agent.k_eval", {[](C& c, const std::string& v) { c.agent.k_eval = to_size(v); },
                        [](const C& c) { return std::to_string(c.agent.k_eval); }}},
      {"agent.eval_with_measure",
       {[](C& c, const std::string& v) { c.agent.eval_with_measure = to_bool(v); },
        [](const C& c) { return std::string(c.agent.eval_with_measure ? "true" : "false"); }}},

      {"loss.n", {[](C& c, const std::string& v) { c.agent.loss.n_online = to_size(v); },
                  [](const C& c) { return std::to_string(c.agent.loss.n_online); }}},
      {"loss.n_prime", {[](C& c, const std::string& v) { c.agent.loss.n_target = to_size(v); },
                        [](const C& c) { return std::to_string(c.agent.loss.n_target); }}},
      {"loss.k", {[](C& c, const std::string& v) { c.agent.loss.k_policy = to_size(v); },
                  [](const C& c) { return std::to_string(c.agent.loss.k_policy); }}},
      {"loss.kappa", {[](C& c, const std::string& v) { c.agent.loss.kappa = to_double(v); },
                      [](const C& c) { return fmt(c.agent.loss.kappa); }}},
      {"loss.gamma",
       {[](C& c, const std::string& v) {
          c.agent.loss.gamma = to_double(v);
          c.gamma_from_env = false;
        },
        [](const C& c) {
          return c.gamma_from_env ? fmt(make_environment(c.env)->recommended_gamma())
                                  : fmt(c.agent.loss.gamma);
        }}},
      {"loss.measure",
       {[](C& c, const std::string& v) { c.agent.loss.policy_measure = parse_measure(v); },
        [](const C& c) { return to_string(c.agent.loss.policy_measure); }}},
      {"loss.normalize",
       {[](C& c, const std::string& v) { c.agent.loss.normalize_online = to_bool(v); },
        [](const C& c) { return std::string(c.agent.loss.normalize_online ? "true" : "false"); }}},

      {"architecture.psi_hidden",
       {[](C& c, const std::string& v) {
          c.agent.architecture.psi_hidden = v == "none" ? std::vector<std::size_t>{} : parse_sizes(v);
        },
        [](const C& c) {
          return c.agent.architecture.psi_hidden.empty() ? std::string("none")
                                                         : list_sizes(c.agent.architecture.psi_hidden);
        }}},
      {"architecture.feature_dim",
       {[](C& c, const std::string& v) { c.agent.architecture.feature_dim = to_size(v); },
        [](const C& c) { return std::to_string(c.agent.architecture.feature_dim); }}},
      {"architecture.embedding",
       {[](C& c, const std::string& v) { c.agent.architecture.embedding = parse_embedding(v); },
        [](const C& c) { return std::string(to_string(c.agent.architecture.embedding)); }}},
      {"architecture.embedding_dim",
       {[](C& c, const std::string& v) { c.agent.architecture.embedding_dim = to_size(v); },
        [](const C& c) { return std::to_string(c.agent.architecture.embedding_dim); }}},
      {"architecture.nonlinearity",
       {[](C& c, const std::string& v) {
          c.agent.architecture.nonlinearity = parse_nonlinearity(v);
        },
        [](const C& c) { return std::string(to_string(c.agent.architecture.nonlinearity)); }}},
      {"architecture.merge",
       {[](C& c, const std::string& v) { c.agent.architecture.merge = parse_merge(v); },
        [](const C& c) { return std::string(to_string(c.agent.architecture.merge)); }}},
      {"architecture.head_hidden",
       {[](C& c, const std::string& v) {
          c.agent.architecture.head_hidden = v == "none" ? std::vector<std::size_t>{} : parse_sizes(v);
        },
        [](const C& c) {
          return c.agent.architecture.head_hidden.empty() ? std::string("none")
                                                          : list_sizes(c.agent.architecture.head_hidden);
        }}},

      {"sweep.n", {[](C& c, const std::string& v) { c.sweep_n = parse_sizes(v); },
                   [](const C& c) { return list_sizes(c.sweep_n); }}},
      {"sweep.n_prime", {[](C& c, const std::string& v) { c.sweep_n_prime = parse_sizes(v); },
                         [](const C& c) { return list_sizes(c.sweep_n_prime); }}},
      {"sweep.measures",
       {[](C& c, const std::string& v) {
          auto items = split_list(v);
          for (const auto& m : items) parse_measure(m);
          c.measures = std::move(items);
        },
        [](const C& c) { return join(c.measures, [](const std::string& s) { return s; }); }}},

      {"run.seeds",
       {[](C& c, const std::string& v) {
          c.seeds.clear();
          for (const auto& s : split_list(v)) c.seeds.push_back(to_u64(s));
        },
        [](const C& c) {
          return join(c.seeds, [](std::uint64_t s) { return std::to_string(s); });
        }}},
      {"run.out_dir", {[](C& c, const std::string& v) { c.out_dir = v; },
                       [](const C& c) { return c.out_dir; }}},
      {"run.jobs", {[](C& c, const std::string& v) { c.jobs = to_size(v); },
                    [](const C& c) { return std::to_string(c.jobs); }}},
  };
  return table;
}

inline const KeyHandler* find_key(const std::string& key) {
  for (const auto& [k, h] : key_table()) {
    if (k == key) return &h;
  }
  return nullptr;
}

}  // namespace detail

// Sets one fully qualified key; throws ConfigError naming the key.
inline void set_config_value(ExperimentConfig& config, const std::string& key,
                             const std::string& value) {
  const auto* h = detail::find_key(key);
  if (!h) throw ConfigError("unknown key '" + key + "'");
  try {
    h->set(config, value);
  } catch (const ConfigError& e) {
    throw ConfigError("key '" + key + "': " + e.what());
  } catch (const Error& e) {
    throw ConfigError("key '" + key + "': " + e.what());
  }
}

// Range and cross-field checks after all keys are applied.
inline void validate(const ExperimentConfig& c) {
  make_environment(c.env);
  if (c.seeds.empty()) throw ConfigError("run.seeds must list at least one seed");
  if (c.jobs == 0) throw ConfigError("run.jobs must be >= 1");
  if (c.steps < c.agent.warmup) {
    throw ConfigError("agent.steps (" + std::to_string(c.steps) + ") must be >= agent.warmup (" +
                      std::to_string(c.agent.warmup) + ")");
  }
  for (std::size_t n : c.sweep_n) {
    if (n == 0) throw ConfigError("sweep.n entries must be >= 1");
  }
  for (std::size_t n : c.sweep_n_prime) {
    if (n == 0) throw ConfigError("sweep.n_prime entries must be >= 1");
  }
  auto arch = c.agent.architecture;
  arch.validate();
  c.resolved_agent(c.seeds.front()).validate();
}

inline ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>") {
  ExperimentConfig config;
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string text = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (text.empty()) continue;
    auto where = [&] { return source + ":" + std::to_string(lineno) + ": "; };
    if (text.front() == '[') {
      if (text.back() != ']') throw ConfigError(where() + "malformed section header '" + text + "'");
      section = detail::trim(std::string_view(text).substr(1, text.size() - 2));
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(where() + "expected 'key = value', got '" + text + "'");
    std::string key = detail::trim(std::string_view(text).substr(0, eq));
    const std::string value = detail::trim(std::string_view(text).substr(eq + 1));
    if (key.empty()) throw ConfigError(where() + "missing key in '" + text + "'");
    if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
    try {
      set_config_value(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where() + e.what());
    }
  }
  validate(config);
  return config;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in, path);
}

// Every key with its resolved value, grouped by section. Parsing the result
// yields the same configuration.
inline std::string resolved_config_text(const ExperimentConfig& c) {
  std::ostringstream out;
  std::string section;
  for (const auto& [key, h] : detail::key_table()) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << '\n';
      out << '[' << sec << "]\n";
      section = sec;
    }
    out << key.substr(dot + 1) << " = " << h.get(c) << '\n';
  }
  return out.str();
}

}  // namespace iqn
