#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "iqn/distortion.hpp"
#include "iqn/error.hpp"
#include "iqn/random.hpp"

namespace iqn {

struct StepResult {
  std::vector<double> state;
  double reward = 0.0;
  bool terminal = false;   // true end of the episode, no bootstrapping
  bool truncated = false;  // step limit hit; bootstrap as non-terminal
  bool fell = false;       // catastrophic event (cliff), for diagnostics
};

// reset() -> state, step(action) -> (state, reward, terminal). Stepping a
// finished episode without reset is an error. Randomness comes from the
// environment's own seeded stream.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual std::size_t state_dim() const = 0;
  virtual std::size_t action_count() const = 0;
  virtual double recommended_gamma() const = 0;
  virtual std::size_t step_limit() const = 0;

  void seed(std::uint64_t s) { rng_ = Rng(s); }

  std::vector<double> reset() {
    steps_ = 0;
    done_ = false;
    started_ = true;
    return do_reset();
  }

  StepResult step(std::size_t action) {
    if (!started_) throw StateError(name() + ": step before reset");
    if (done_) throw StateError(name() + ": step after episode end without reset");
    if (action >= action_count()) {
      throw DomainError(name() + ": action " + std::to_string(action) + " out of range");
    }
    StepResult r = do_step(action);
    ++steps_;
    if (!r.terminal && steps_ >= step_limit()) r.truncated = true;
    done_ = r.terminal || r.truncated;
    return r;
  }

  std::size_t steps_taken() const { return steps_; }

 protected:
  virtual std::vector<double> do_reset() = 0;
  virtual StepResult do_step(std::size_t action) = 0;

  Rng rng_{0};

 private:
  std::size_t steps_ = 0;
  bool done_ = false;
  bool started_ = false;
};

// ---------------------------------------------------------------------------
// Bandit with known discrete reward laws; one-step episodes, state [1].

using RewardLaw = std::vector<std::pair<double, double>>;  // (value, probability)

class KnownBandit final : public Environment {
 public:
  explicit KnownBandit(std::vector<RewardLaw> arms) : arms_(std::move(arms)) {
    if (arms_.empty()) throw ConfigError("bandit needs at least one arm");
    for (auto& arm : arms_) {
      if (arm.empty()) throw ConfigError("bandit arm has no outcomes");
      double total = 0.0;
      for (auto [v, p] : arm) {
        if (!(p > 0.0)) throw ConfigError("bandit outcome probabilities must be positive");
        if (!std::isfinite(v)) throw ConfigError("bandit rewards must be finite");
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-12) {
        throw ConfigError("bandit arm probabilities must sum to 1");
      }
      std::sort(arm.begin(), arm.end());
    }
  }

  // Arm 0: Dirac at 0.5. Arm 1: 0 w.p. 0.45, 1 w.p. 0.55.
  static KnownBandit risky() { return KnownBandit({{{0.5, 1.0}}, {{0.0, 0.45}, {1.0, 0.55}}}); }
  // One arm paying 1 with probability p, else 0.
  static KnownBandit bernoulli(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("bernoulli p must lie in (0, 1)");
    return KnownBandit({{{0.0, 1.0 - p}, {1.0, p}}});
  }

  std::string name() const override { return "bandit"; }
  std::size_t state_dim() const override { return 1; }
  std::size_t action_count() const override { return arms_.size(); }
  double recommended_gamma() const override { return 0.9; }
  std::size_t step_limit() const override { return 1; }

  const RewardLaw& arm(std::size_t a) const { return arms_.at(a); }

  double arm_mean(std::size_t a) const {
    double m = 0.0;
    for (auto [v, p] : arm(a)) m += v * p;
    return m;
  }

 protected:
  std::vector<double> do_reset() override { return {1.0}; }

  StepResult do_step(std::size_t action) override {
    const auto& law = arms_[action];
    double u = rng_.uniform();
    double reward = law.back().first;
    for (auto [v, p] : law) {
      if (u < p) {
        reward = v;
        break;
      }
      u -= p;
    }
    return {{1.0}, reward, true, false, false};
  }

 private:
  std::vector<RewardLaw> arms_;
};

// Generalized inverse CDF of an arm's reward law: min{z : F(z) >= tau}.
inline ReturnQuantiles analytic_quantiles(const KnownBandit& bandit, std::size_t arm,
                                          std::span<const double> taus) {
  if (arm >= bandit.action_count()) throw DomainError("arm index out of range");
  const RewardLaw& law = bandit.arm(arm);
  ReturnQuantiles q;
  for (double tau : taus) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("tau must lie in [0, 1]");
    double cdf = 0.0;
    double value = law.back().first;
    for (auto [v, p] : law) {
      cdf += p;
      if (cdf >= tau - 1e-15) {
        value = v;
        break;
      }
    }
    q.taus.push_back(tau);
    q.values.push_back(value);
  }
  return q;
}

// ---------------------------------------------------------------------------
// Chain: positions 0..L-1, start at 0. Action 1 moves forward with
// probability p (else stays); action 0 moves back. Moving forward from the
// last position ends the episode with `terminal_reward`. One-hot states.

class ChainMdp final : public Environment {
 public:
  ChainMdp(std::size_t length, double p, double terminal_reward = 1.0,
           std::vector<double> state_rewards = {})
      : length_(length), p_(p), terminal_reward_(terminal_reward),
        state_rewards_(std::move(state_rewards)) {
    if (length_ < 2) throw ConfigError("chain length must be >= 2");
    if (!(p_ > 0.0 && p_ <= 1.0)) throw ConfigError("chain p must lie in (0, 1]");
    if (state_rewards_.empty()) state_rewards_.assign(length_, 0.0);
    if (state_rewards_.size() != length_) {
      throw ConfigError("chain needs one reward per state");
    }
  }

  std::string name() const override { return "chain"; }
  std::size_t state_dim() const override { return length_; }
  std::size_t action_count() const override { return 2; }
  double recommended_gamma() const override { return 0.9; }
  std::size_t step_limit() const override { return 4 * length_; }

  std::size_t length() const { return length_; }
  std::size_t position() const { return pos_; }

 protected:
  std::vector<double> do_reset() override {
    pos_ = 0;
    return encode();
  }

  StepResult do_step(std::size_t action) override {
    const double reward = state_rewards_[pos_];
    if (action == 1) {
      if (rng_.bernoulli(p_)) {
        if (pos_ + 1 == length_) {
          return {encode(), reward + terminal_reward_, true, false, false};
        }
        ++pos_;
      }
    } else if (pos_ > 0) {
      --pos_;
    }
    return {encode(), reward, false, false, false};
  }

 private:
  std::vector<double> encode() const {
    std::vector<double> s(length_, 0.0);
    s[pos_] = 1.0;
    return s;
  }

  std::size_t length_;
  double p_;
  double terminal_reward_;
  std::vector<double> state_rewards_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// 4 x 12 cliff walk. Row 0 is the top; start is the bottom-left corner, goal
// the bottom-right, and the bottom row between them is cliff. With
// probability p the move goes in one of the two perpendicular directions
// (never backwards). Each step costs 1; falling costs 100 and ends the
// episode. One-hot cell encoding, 48 entries.

class CliffGrid final : public Environment {
 public:
  static constexpr std::size_t kWidth = 12;
  static constexpr std::size_t kHeight = 4;
  static constexpr std::size_t kCells = kWidth * kHeight;
  enum Action : std::size_t { kUp = 0, kRight = 1, kDown = 2, kLeft = 3 };

  explicit CliffGrid(double slip) : slip_(slip) {
    if (!(slip_ >= 0.0 && slip_ <= 0.5)) throw ConfigError("cliff slip p must lie in [0, 0.5]");
  }

  std::string name() const override { return "cliff"; }
  std::size_t state_dim() const override { return kCells; }
  std::size_t action_count() const override { return 4; }
  double recommended_gamma() const override { return 0.99; }
  std::size_t step_limit() const override { return 200; }

  double slip() const { return slip_; }

  static std::size_t cell(std::size_t row, std::size_t col) { return row * kWidth + col; }
  static std::size_t start_cell() { return cell(kHeight - 1, 0); }
  static std::size_t goal_cell() { return cell(kHeight - 1, kWidth - 1); }
  static bool is_cliff(std::size_t c) {
    const std::size_t row = c / kWidth, col = c % kWidth;
    return row == kHeight - 1 && col > 0 && col < kWidth - 1;
  }
  static bool is_terminal_cell(std::size_t c) { return c == goal_cell() || is_cliff(c); }

  // Deterministic move with wall clamping.
  static std::size_t moved(std::size_t c, std::size_t dir) {
    std::size_t row = c / kWidth, col = c % kWidth;
    switch (dir) {
      case kUp: if (row > 0) --row; break;
      case kRight: if (col + 1 < kWidth) ++col; break;
      case kDown: if (row + 1 < kHeight) ++row; break;
      case kLeft: if (col > 0) --col; break;
      default: break;
    }
    return cell(row, col);
  }

  struct Outcome {
    double probability;
    std::size_t next;
    double reward;
    bool terminal;
    bool fell;
  };

  // Full transition law from a non-terminal cell; used by the exact DP.
  std::vector<Outcome> outcomes(std::size_t c, std::size_t action) const {
    std::vector<Outcome> out;
    auto add = [&](double prob, std::size_t dir) {
      if (prob <= 0.0) return;
      const std::size_t n = moved(c, dir);
      if (is_cliff(n)) out.push_back({prob, n, -100.0, true, true});
      else out.push_back({prob, n, -1.0, n == goal_cell(), false});
    };
    add(1.0 - slip_, action);
    add(slip_ / 2.0, (action + 1) % 4);
    add(slip_ / 2.0, (action + 3) % 4);
    return out;
  }

  std::size_t position() const { return pos_; }

 protected:
  std::vector<double> do_reset() override {
    pos_ = start_cell();
    return encode();
  }

  StepResult do_step(std::size_t action) override {
    std::size_t dir = action;
    if (slip_ > 0.0 && rng_.bernoulli(slip_)) {
      dir = rng_.bernoulli(0.5) ? (action + 1) % 4 : (action + 3) % 4;
    }
    pos_ = moved(pos_, dir);
    if (is_cliff(pos_)) return {encode(), -100.0, true, false, true};
    return {encode(), -1.0, pos_ == goal_cell(), false, false};
  }

 private:
  std::vector<double> encode() const {
    std::vector<double> s(kCells, 0.0);
    s[pos_] = 1.0;
    return s;
  }

  double slip_;
  std::size_t pos_ = start_cell();
};

using CliffPolicy = std::array<std::size_t, CliffGrid::kCells>;

// Walks row 2 directly above the cliff.
inline CliffPolicy cliff_edge_policy() {
  CliffPolicy p{};
  for (std::size_t c = 0; c < CliffGrid::kCells; ++c) {
    const std::size_t row = c / CliffGrid::kWidth, col = c % CliffGrid::kWidth;
    if (col == CliffGrid::kWidth - 1) p[c] = CliffGrid::kDown;
    else if (row == CliffGrid::kHeight - 1) p[c] = CliffGrid::kUp;
    else if (row < CliffGrid::kHeight - 2) p[c] = CliffGrid::kDown;
    else p[c] = CliffGrid::kRight;
  }
  return p;
}

// Climbs to row 0, walks across, and descends along the right wall.
inline CliffPolicy cliff_safe_policy() {
  CliffPolicy p{};
  for (std::size_t c = 0; c < CliffGrid::kCells; ++c) {
    const std::size_t row = c / CliffGrid::kWidth, col = c % CliffGrid::kWidth;
    if (col == CliffGrid::kWidth - 1) p[c] = CliffGrid::kDown;
    else if (row == 0) p[c] = CliffGrid::kRight;
    else p[c] = CliffGrid::kUp;
  }
  return p;
}

// Iterative policy evaluation to convergence; values per cell.
inline std::vector<double> cliff_policy_values(const CliffGrid& grid, const CliffPolicy& policy,
                                               double gamma, double tol = 1e-12) {
  std::vector<double> v(CliffGrid::kCells, 0.0);
  for (int sweep = 0; sweep < 1000000; ++sweep) {
    double change = 0.0;
    for (std::size_t c = 0; c < CliffGrid::kCells; ++c) {
      if (CliffGrid::is_terminal_cell(c)) continue;
      double nv = 0.0;
      for (const auto& o : grid.outcomes(c, policy[c])) {
        nv += o.probability * (o.reward + (o.terminal ? 0.0 : gamma * v[o.next]));
      }
      change = std::max(change, std::abs(nv - v[c]));
      v[c] = nv;
    }
    if (change < tol) return v;
  }
  throw Error("policy evaluation did not converge (improper policy?)");
}

// Value iteration for the risk-neutral optimum.
inline std::vector<double> cliff_optimal_values(const CliffGrid& grid, double gamma,
                                                double tol = 1e-12) {
  std::vector<double> v(CliffGrid::kCells, 0.0);
  for (int sweep = 0; sweep < 1000000; ++sweep) {
    double change = 0.0;
    for (std::size_t c = 0; c < CliffGrid::kCells; ++c) {
      if (CliffGrid::is_terminal_cell(c)) continue;
      double best = -1e300;
      for (std::size_t a = 0; a < 4; ++a) {
        double q = 0.0;
        for (const auto& o : grid.outcomes(c, a)) {
          q += o.probability * (o.reward + (o.terminal ? 0.0 : gamma * v[o.next]));
        }
        best = std::max(best, q);
      }
      change = std::max(change, std::abs(best - v[c]));
      v[c] = best;
    }
    if (change < tol) return v;
  }
  throw Error("value iteration did not converge");
}

// ---------------------------------------------------------------------------
// Monte-Carlo return distributions

using StatePolicy = std::function<std::size_t(const std::vector<double>&, Rng&)>;

// Empirical quantile of sorted samples: the order statistic at ceil(tau M).
inline double empirical_quantile(const std::vector<double>& sorted, double tau) {
  const double m = static_cast<double>(sorted.size());
  const auto idx = static_cast<std::ptrdiff_t>(std::ceil(tau * m)) - 1;
  return sorted[static_cast<std::size_t>(
      std::clamp<std::ptrdiff_t>(idx, 0, static_cast<std::ptrdiff_t>(sorted.size()) - 1))];
}

// Discounted returns from the start state, one per episode.
inline std::vector<double> mc_returns(Environment& env, const StatePolicy& policy, double gamma,
                                      std::size_t episodes, Rng& rng) {
  if (episodes == 0) throw DomainError("episode count must be >= 1");
  if (env.step_limit() == 0) throw DomainError("environment without a step limit");
  env.seed(rng());
  std::vector<double> returns;
  returns.reserve(episodes);
  for (std::size_t e = 0; e < episodes; ++e) {
    auto state = env.reset();
    double ret = 0.0, discount = 1.0;
    for (;;) {
      const StepResult r = env.step(policy(state, rng));
      ret += discount * r.reward;
      discount *= gamma;
      if (r.terminal || r.truncated) break;
      state = r.state;
    }
    returns.push_back(ret);
  }
  return returns;
}

inline ReturnQuantiles mc_return_quantiles(Environment& env, const StatePolicy& policy,
                                           double gamma, std::size_t episodes,
                                           std::span<const double> taus, Rng& rng) {
  auto returns = mc_returns(env, policy, gamma, episodes, rng);
  std::sort(returns.begin(), returns.end());
  ReturnQuantiles q;
  for (double tau : taus) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("tau must lie in [0, 1]");
    q.taus.push_back(tau);
    q.values.push_back(empirical_quantile(returns, tau));
  }
  return q;
}

// ---------------------------------------------------------------------------
// Construction from `bandit:risky`, `bandit:bernoulli,p=0.55`, `chain:L=5,p=1.0`, `cliff:p=0.1`.

namespace detail {

inline std::map<std::string, std::string> parse_kv_list(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (!item.empty()) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError("expected key=value in '" + item + "'");
      kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return kv;
}

inline double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("bad number for " + what + ": '" + s + "'");
  }
  return v;
}

}  // namespace detail

inline std::unique_ptr<Environment> make_environment(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "bandit") {
    if (args == "risky" || args.empty()) return std::make_unique<KnownBandit>(KnownBandit::risky());
    if (args.rfind("bernoulli", 0) == 0) {
      const std::string rest = args.substr(9);
      if (!rest.empty() && rest[0] != ',') throw ConfigError("unknown bandit preset '" + args + "'");
      double p = 0.55;
      for (const auto& [k, v] : detail::parse_kv_list(rest)) {
        if (k == "p") p = detail::parse_double(v, "bandit p");
        else throw ConfigError("unknown bandit parameter '" + k + "'");
      }
      return std::make_unique<KnownBandit>(KnownBandit::bernoulli(p));
    }
    throw ConfigError("unknown bandit preset '" + args + "'");
  }
  if (kind == "chain") {
    auto kv = detail::parse_kv_list(args);
    std::size_t length = 5;
    double p = 1.0, r = 1.0;
    for (const auto& [k, v] : kv) {
      if (k == "L") {
        const double l = detail::parse_double(v, "chain L");
        if (l < 2 || l != std::floor(l)) throw ConfigError("chain L must be an integer >= 2");
        length = static_cast<std::size_t>(l);
      } else if (k == "p") {
        p = detail::parse_double(v, "chain p");
      } else if (k == "r") {
        r = detail::parse_double(v, "chain r");
      } else {
        throw ConfigError("unknown chain parameter '" + k + "'");
      }
    }
    return std::make_unique<ChainMdp>(length, p, r);
  }
  if (kind == "cliff") {
    auto kv = detail::parse_kv_list(args);
    double p = 0.0;
    for (const auto& [k, v] : kv) {
      if (k == "p") p = detail::parse_double(v, "cliff p");
      else throw ConfigError("unknown cliff parameter '" + k + "'");
    }
    return std::make_unique<CliffGrid>(p);
  }
  throw ConfigError("unknown environment '" + spec + "'");
}

}  // namespace iqn
