#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "iqn/adam.hpp"
#include "iqn/distortion.hpp"
#include "iqn/envs.hpp"
#include "iqn/error.hpp"
#include "iqn/losses.hpp"
#include "iqn/metrics.hpp"
#include "iqn/networks.hpp"
#include "iqn/random.hpp"

namespace iqn {

enum class Algorithm { kIqn, kQr, kDqn };

inline const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kIqn: return "iqn";
    case Algorithm::kQr: return "qr";
    case Algorithm::kDqn: return "dqn";
  }
  return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "iqn") return Algorithm::kIqn;
  if (s == "qr") return Algorithm::kQr;
  if (s == "dqn") return Algorithm::kDqn;
  throw ConfigError("algorithm must be iqn, qr or dqn, got '" + s + "'");
}

// Linear decay from `start` to `end` over `decay_steps`, then constant.
struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  std::size_t decay_steps = 10000;

  double at(std::size_t step) const {
    if (decay_steps == 0 || step >= decay_steps) return end;
    const double frac = static_cast<double>(step) / static_cast<double>(decay_steps);
    return start + (end - start) * frac;
  }
};

struct AgentConfig {
  Algorithm algorithm = Algorithm::kIqn;
  LossConfig loss{};
  ArchitectureSpec architecture{};  // state_dim / action_count come from the env
  EpsilonSchedule epsilon{};
  std::size_t buffer_capacity = 10000;
  std::size_t batch_size = 32;
  std::size_t target_sync_period = 500;  // gradient steps
  std::size_t train_period = 1;          // env steps per gradient step
  std::size_t warmup = 1000;
  AdamHyperparameters optimizer{1e-3, 0.9, 0.999, 0.01 / 32.0};
  std::uint64_t seed = 0;
  std::size_t eval_period = 1000;
  std::size_t eval_episodes = 10;
  std::size_t final_eval_episodes = 100;
  // The final evaluation keeps adding episodes until it spans this many steps.
  std::size_t final_eval_steps = 0;
  // K for greedy evaluation; 0 means the policy K.
  std::size_t k_eval = 0;
  // Evaluation episodes act with the policy measure (else risk-neutral).
  bool eval_with_measure = true;

  std::size_t eval_k() const { return k_eval == 0 ? loss.k_policy : k_eval; }

  void validate() const {
    loss.validate();
    if (buffer_capacity == 0 || batch_size == 0 || target_sync_period == 0 ||
        train_period == 0 || warmup == 0 || eval_period == 0) {
      throw ConfigError("buffer, batch, periods and warmup must all be >= 1");
    }
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(epsilon.start) || !unit(epsilon.end)) {
      throw ConfigError("epsilon values must lie in [0, 1]");
    }
    if (!(optimizer.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  }
};

// ---------------------------------------------------------------------------
// Replay buffer

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw ConfigError("replay capacity must be >= 1");
    items_.reserve(std::min<std::size_t>(capacity_, 1 << 16));
  }

  void add(Transition t) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(t));
    } else {
      items_[insertions_ % capacity_] = std::move(t);
    }
    ++insertions_;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t insertions() const { return insertions_; }
  const Transition& slot(std::size_t i) const { return items_.at(i); }

  // Uniform sampling with replacement; returns slot indices.
  std::vector<std::size_t> sample_indices(std::size_t count, Rng& rng) const {
    if (items_.empty()) throw StateError("cannot sample from an empty replay buffer");
    std::vector<std::size_t> idx(count);
    for (auto& i : idx) i = static_cast<std::size_t>(rng.below(items_.size()));
    return idx;
  }

  std::vector<Transition> sample(std::size_t count, Rng& rng) const {
    std::vector<Transition> batch;
    batch.reserve(count);
    for (std::size_t i : sample_indices(count, rng)) batch.push_back(items_[i]);
    return batch;
  }

 private:
  std::size_t capacity_;
  std::size_t insertions_ = 0;
  std::vector<Transition> items_;
};

// ---------------------------------------------------------------------------
// Networks behind one interface

using AgentNetwork = std::variant<IqnNetwork, QrNetwork, DqnNetwork>;

inline AgentNetwork make_network(const AgentConfig& config, Rng& rng) {
  switch (config.algorithm) {
    case Algorithm::kIqn: return IqnNetwork(config.architecture, rng);
    case Algorithm::kQr: return QrNetwork(config.architecture, config.loss.n_online, rng);
    case Algorithm::kDqn: return DqnNetwork(config.architecture, rng);
  }
  throw ConfigError("unknown algorithm");
}

inline AgentNetwork make_network(const AgentConfig& config, TensorMap params) {
  switch (config.algorithm) {
    case Algorithm::kIqn: return IqnNetwork(config.architecture, std::move(params));
    case Algorithm::kQr:
      return QrNetwork(config.architecture, config.loss.n_online, std::move(params));
    case Algorithm::kDqn: return DqnNetwork(config.architecture, std::move(params));
  }
  throw ConfigError("unknown algorithm");
}

inline TensorMap& parameters(AgentNetwork& net) {
  return std::visit([](auto& n) -> TensorMap& { return n.parameters(); }, net);
}
inline const TensorMap& parameters(const AgentNetwork& net) {
  return std::visit([](const auto& n) -> const TensorMap& { return n.parameters(); }, net);
}

// Per-action values used for greedy selection: the K-sample distorted
// expectation for IQN, the quantile mean for QR, Q for DQN.
inline std::vector<double> action_values(const AgentNetwork& net, std::span<const double> state,
                                         const DistortionMeasure& measure, std::size_t k,
                                         Rng& rng) {
  if (const auto* iqn = std::get_if<IqnNetwork>(&net)) {
    return q_beta_estimate(*iqn, state, measure, k, rng);
  }
  const auto& fixed = std::visit(
      [](const auto& n) -> const FixedHeadNetwork& {
        if constexpr (std::is_same_v<std::decay_t<decltype(n)>, IqnNetwork>) {
          throw Error("unreachable");
        } else {
          return n;
        }
      },
      net);
  Tensor s({1, state.size()}, std::vector<double>(state.begin(), state.end()));
  const Tensor out = fixed.forward(s).output;
  const std::size_t a = fixed.spec().action_count;
  std::vector<double> q(a, 0.0);
  const std::size_t per_action = out.size() / a;
  for (std::size_t i = 0; i < per_action; ++i) {
    for (std::size_t j = 0; j < a; ++j) q[j] += out[i * a + j];
  }
  for (double& v : q) v /= static_cast<double>(per_action);
  return q;
}

inline std::size_t greedy_action(std::span<const double> values) {
  // max_element keeps the first maximum: ties go to the lowest index.
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) -
                                  values.begin());
}

inline std::uint64_t parameter_hash(const TensorMap& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [name, t] : params) {
    for (char c : name) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
    for (double v : t.data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h = (h ^ bits) * 1099511628211ULL;
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Training state and loop

namespace stream {
inline constexpr std::uint64_t kInit = 1, kAct = 2, kTau = 3, kReplay = 4, kEnv = 5, kEval = 6;
}

struct TrainState {
  AgentNetwork online;
  AgentNetwork target;
  AdamState adam;
  ReplayBuffer buffer;
  Rng act_rng;
  Rng tau_rng;
  Rng replay_rng;
  std::size_t env_steps = 0;
  std::size_t gradient_steps = 0;
  std::size_t episodes = 0;
  // Episode in progress.
  std::optional<std::vector<double>> state;
  double episode_return = 0.0;
  double episode_discount = 1.0;
};

// Fills in environment-dependent architecture fields.
inline AgentConfig bind_environment(AgentConfig config, const Environment& env) {
  config.architecture.state_dim = env.state_dim();
  config.architecture.action_count = env.action_count();
  return config;
}

inline TrainState make_train_state(const AgentConfig& config) {
  config.validate();
  Rng init(mix_seed(config.seed, stream::kInit));
  AgentNetwork net = make_network(config, init);
  AdamState adam = make_adam_state(parameters(net), config.optimizer);
  return TrainState{net,
                    net,
                    std::move(adam),
                    ReplayBuffer(config.buffer_capacity),
                    Rng(mix_seed(config.seed, stream::kAct)),
                    Rng(mix_seed(config.seed, stream::kTau)),
                    Rng(mix_seed(config.seed, stream::kReplay)),
                    0,
                    0,
                    0,
                    std::nullopt,
                    0.0,
                    1.0};
}

// epsilon-greedy on the risk-sensitive action values.
inline std::size_t act(std::span<const double> state, const AgentNetwork& net,
                       const DistortionMeasure& measure, double epsilon, std::size_t k,
                       Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw DomainError("epsilon must lie in [0, 1]");
  const std::size_t actions =
      std::visit([](const auto& n) { return n.spec().action_count; }, net);
  if (rng.uniform() < epsilon) return static_cast<std::size_t>(rng.below(actions));
  return greedy_action(action_values(net, state, measure, k, rng));
}

inline std::size_t act(std::span<const double> state, const TrainState& ts,
                       const DistortionMeasure& measure, double epsilon, std::size_t k,
                       Rng& rng) {
  return act(state, ts.online, measure, epsilon, k, rng);
}

inline LossResult compute_loss(const AgentNetwork& online, const AgentNetwork& target,
                               std::span<const Transition> batch, const LossConfig& config,
                               Rng& rng) {
  if (const auto* iqn = std::get_if<IqnNetwork>(&online)) {
    return iqn_loss(*iqn, std::get<IqnNetwork>(target), batch, config, rng);
  }
  if (const auto* qr = std::get_if<QrNetwork>(&online)) {
    return qr_loss(*qr, std::get<QrNetwork>(target), batch, config);
  }
  return dqn_loss(std::get<DqnNetwork>(online), std::get<DqnNetwork>(target), batch, config);
}

struct StepMetrics {
  std::optional<double> loss;
  std::optional<double> episode_return;  // set when an episode ended this step
  bool fell = false;
  bool gradient_step = false;
  bool target_synced = false;
  std::size_t action = 0;
};

// One environment step, plus a gradient step and target sync when due.
inline StepMetrics train_iteration(TrainState& ts, Environment& env, const AgentConfig& config) {
  StepMetrics m;
  if (!ts.state) {
    ts.state = env.reset();
    ts.episode_return = 0.0;
    ts.episode_discount = 1.0;
  }
  const double eps = config.epsilon.at(ts.env_steps);
  m.action = act(*ts.state, ts, config.loss.policy_measure, eps, config.loss.k_policy, ts.act_rng);
  StepResult r = env.step(m.action);
  ts.buffer.add(Transition{*ts.state, m.action, r.reward, r.state, r.terminal});
  ts.episode_return += ts.episode_discount * r.reward;
  ts.episode_discount *= config.loss.gamma;
  m.fell = r.fell;
  ++ts.env_steps;
  if (r.terminal || r.truncated) {
    m.episode_return = ts.episode_return;
    ++ts.episodes;
    ts.state.reset();
  } else {
    ts.state = std::move(r.state);
  }

  if (ts.buffer.size() >= config.warmup && ts.env_steps % config.train_period == 0) {
    const auto batch = ts.buffer.sample(config.batch_size, ts.replay_rng);
    LossResult loss = compute_loss(ts.online, ts.target, batch, config.loss, ts.tau_rng);
    adam_step(parameters(ts.online), loss.gradients, ts.adam);
    ++ts.gradient_steps;
    m.loss = loss.loss;
    m.gradient_step = true;
    if (ts.gradient_steps % config.target_sync_period == 0) {
      ts.target = ts.online;
      m.target_synced = true;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Greedy evaluation

struct EvalResult {
  std::size_t episodes = 0;
  std::size_t steps = 0;
  double mean_return = 0.0;
  std::size_t falls = 0;
  std::vector<std::size_t> first_actions;  // per-action counts of the first action
};

// Runs at least `episodes` episodes and at least `min_steps` steps.
inline EvalResult evaluate_greedy(const AgentNetwork& net, Environment& env,
                                  const AgentConfig& config, std::size_t episodes,
                                  std::uint64_t eval_seed, std::size_t min_steps = 0) {
  EvalResult res;
  const std::size_t actions = env.action_count();
  res.first_actions.assign(actions, 0);
  env.seed(mix_seed(eval_seed, 0));
  Rng rng(mix_seed(eval_seed, 1));
  const DistortionMeasure measure =
      config.eval_with_measure ? config.loss.policy_measure : DistortionMeasure::identity();
  double total = 0.0;
  while (res.episodes < episodes || res.steps < min_steps) {
    auto state = env.reset();
    double ret = 0.0, discount = 1.0;
    bool first = true;
    for (;;) {
      const std::size_t a = act(state, net, measure, 0.0, config.eval_k(), rng);
      if (first) {
        ++res.first_actions[a];
        first = false;
      }
      const StepResult r = env.step(a);
      ++res.steps;
      ret += discount * r.reward;
      discount *= config.loss.gamma;
      if (r.fell) ++res.falls;
      if (r.terminal || r.truncated) break;
      state = r.state;
    }
    total += ret;
    ++res.episodes;
  }
  res.mean_return = res.episodes ? total / static_cast<double>(res.episodes) : 0.0;
  return res;
}

struct TrainingRun {
  MetricsSeries rows;
  EvalResult final_eval;
  TrainState state;
};

// Full run; one metrics row per eval period, then a final greedy evaluation
// of `final_eval_episodes` episodes.
inline TrainingRun run_training(const std::string& env_spec, AgentConfig config,
                                std::size_t total_steps, const std::string& run_id = "run") {
  auto env = make_environment(env_spec);
  auto eval_env = make_environment(env_spec);
  config = bind_environment(config, *env);
  config.validate();
  if (total_steps < config.warmup) {
    throw ConfigError("total steps (" + std::to_string(total_steps) +
                      ") must be >= warmup (" + std::to_string(config.warmup) + ")");
  }
  env->seed(mix_seed(config.seed, stream::kEnv));
  TrainingRun run{{}, {}, make_train_state(config)};
  TrainState& ts = run.state;

  double window_return = 0.0, window_loss = 0.0;
  std::size_t window_episodes = 0, window_losses = 0, train_falls = 0;
  std::size_t eval_index = 0;
  for (std::size_t t = 0; t < total_steps; ++t) {
    const StepMetrics m = train_iteration(ts, *env, config);
    if (m.loss) {
      window_loss += *m.loss;
      ++window_losses;
    }
    if (m.episode_return) {
      window_return += *m.episode_return;
      ++window_episodes;
    }
    if (m.fell) ++train_falls;
    if (ts.env_steps % config.eval_period == 0 || ts.env_steps == total_steps) {
      const EvalResult ev = evaluate_greedy(ts.online, *eval_env, config, config.eval_episodes,
                                            mix_seed(config.seed, stream::kEval + 16 * ++eval_index));
      MetricsRow row;
      row.run_id = run_id;
      row.seed = config.seed;
      row.env = env_spec;
      row.algorithm = to_string(config.algorithm);
      row.measure = to_string(config.loss.policy_measure);
      row.n_online = config.loss.n_online;
      row.n_target = config.loss.n_target;
      row.step = ts.env_steps;
      row.behavior_return = window_episodes ? window_return / window_episodes : kMissing;
      row.eval_return = ev.mean_return;
      row.loss = window_losses ? window_loss / window_losses : kMissing;
      row.epsilon = config.epsilon.at(ts.env_steps);
      row.aux = "train_falls=" + std::to_string(train_falls) +
                ";eval_falls=" + std::to_string(ev.falls);
      run.rows.push_back(std::move(row));
      window_return = window_loss = 0.0;
      window_episodes = window_losses = 0;
    }
  }
  run.final_eval = evaluate_greedy(ts.online, *eval_env, config, config.final_eval_episodes,
                                   mix_seed(config.seed, stream::kEval), config.final_eval_steps);
  return run;
}

}  // namespace iqn
