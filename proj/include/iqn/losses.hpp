#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "iqn/distortion.hpp"
#include "iqn/error.hpp"
#include "iqn/networks.hpp"
#include "iqn/random.hpp"
#include "iqn/tensor.hpp"

namespace iqn {

struct Transition {
  std::vector<double> state;
  std::size_t action = 0;
  double reward = 0.0;
  std::vector<double> next_state;
  bool terminal = false;
};

struct LossConfig {
  std::size_t n_online = 8;   // N
  std::size_t n_target = 8;   // N'
  std::size_t k_policy = 32;  // K
  double kappa = 1.0;
  double gamma = 0.99;
  DistortionMeasure policy_measure{};
  // Divide the per-transition sum over online samples by N as well.
  bool normalize_online = false;

  void validate() const {
    if (n_online == 0 || n_target == 0 || k_policy == 0) {
      throw ConfigError("n_online, n_target and k_policy must be >= 1");
    }
    if (!(kappa >= 0.0)) throw ConfigError("kappa must be >= 0");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
    policy_measure.validate();
  }
};

// ---------------------------------------------------------------------------
// Quantile Huber loss

// rho^kappa_tau(delta) = |tau - 1{delta < 0}| * L_kappa(delta) / kappa, with
// the pinball loss as the kappa = 0 limit.
inline double huber_quantile(double delta, double tau, double kappa) {
  if (kappa < 0.0) throw DomainError("kappa must be >= 0");
  if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("tau must lie in [0, 1]");
  const double weight = std::abs(tau - (delta < 0.0 ? 1.0 : 0.0));
  const double a = std::abs(delta);
  if (kappa == 0.0) return weight * a;
  const double huber = a <= kappa ? 0.5 * delta * delta : kappa * (a - 0.5 * kappa);
  return weight * huber / kappa;
}

// d rho / d delta; 0 at delta = 0.
inline double huber_quantile_derivative(double delta, double tau, double kappa) {
  if (delta == 0.0) return 0.0;
  const double weight = std::abs(tau - (delta < 0.0 ? 1.0 : 0.0));
  const double sign = delta < 0.0 ? -1.0 : 1.0;
  if (kappa == 0.0) return weight * sign;
  const double dh = std::abs(delta) <= kappa ? delta : kappa * sign;
  return weight * dh / kappa;
}

// tau_hat_i = (tau_{i-1} + tau_i) / 2 with tau_i = i / N.
inline std::vector<double> qr_midpoints(std::size_t n) {
  if (n == 0) throw DomainError("quantile count must be >= 1");
  std::vector<double> m(n);
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = (2.0 * static_cast<double>(i) + 1.0) / (2.0 * static_cast<double>(n));
  }
  return m;
}

// delta_ij = target_j - online_i for one transition; target_j already holds
// r + gamma * Z'_j (or r on terminal transitions).
struct TdErrorMatrix {
  Tensor deltas;  // [N x N']
  std::vector<double> online_taus;
  std::vector<double> target_taus;

  static TdErrorMatrix build(std::span<const double> online_values,
                             std::span<const double> online_taus,
                             std::span<const double> target_values,
                             std::span<const double> target_taus) {
    if (online_values.size() != online_taus.size() ||
        target_values.size() != target_taus.size() || online_values.empty() ||
        target_values.empty()) {
      throw ShapeError("TD error matrix: value/tau length mismatch");
    }
    TdErrorMatrix td{Tensor({online_values.size(), target_values.size()}),
                     {online_taus.begin(), online_taus.end()},
                     {target_taus.begin(), target_taus.end()}};
    for (std::size_t i = 0; i < online_values.size(); ++i) {
      for (std::size_t j = 0; j < target_values.size(); ++j) {
        td.deltas.at(i, j) = target_values[j] - online_values[i];
      }
    }
    return td;
  }

  // sum_i (1/N') sum_j rho_{tau_i}(delta_ij); `d_online[i]` receives the
  // derivative with respect to online value i.
  double loss(double kappa, std::vector<double>* d_online = nullptr) const {
    const std::size_t n = deltas.rows(), np = deltas.cols();
    double total = 0.0;
    if (d_online) d_online->assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < np; ++j) {
        const double d = deltas.at(i, j);
        total += huber_quantile(d, online_taus[i], kappa);
        if (d_online) (*d_online)[i] -= huber_quantile_derivative(d, online_taus[i], kappa);
      }
    }
    const double inv = 1.0 / static_cast<double>(np);
    if (d_online) {
      for (double& v : *d_online) v *= inv;
    }
    return total * inv;
  }

  // Sign pattern of the deltas; identifies the smooth piece of the loss.
  std::uint64_t branch_signature(double kappa) const {
    std::uint64_t h = 1469598103934665603ULL;
    for (double d : deltas.data()) {
      const unsigned code = (d < 0.0 ? 1u : 0u) | (std::abs(d) > kappa ? 2u : 0u);
      h = (h ^ code) * 1099511628211ULL;
    }
    return h;
  }
};

struct LossResult {
  double loss = 0.0;
  TensorMap gradients;  // with respect to the online parameters
  std::uint64_t branch_signature = 0;
};

namespace detail {

inline void check_batch(std::span<const Transition> batch, std::size_t state_dim,
                        std::size_t actions) {
  if (batch.empty()) throw DomainError("loss needs a non-empty batch");
  for (const auto& t : batch) {
    if (t.state.size() != state_dim || t.next_state.size() != state_dim) {
      throw ShapeError("transition state dimension does not match the network");
    }
    if (t.action >= actions) throw DomainError("transition action out of range");
    if (!std::isfinite(t.reward)) throw DomainError("transition reward not finite");
  }
}

inline Tensor stack_states(std::span<const Transition> batch, bool next,
                           const std::vector<std::size_t>& rows) {
  const std::size_t dim = batch.front().state.size();
  Tensor s({rows.size(), dim});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& src = next ? batch[rows[r]].next_state : batch[rows[r]].state;
    std::copy(src.begin(), src.end(), s.data().begin() + static_cast<std::ptrdiff_t>(r * dim));
  }
  return s;
}

inline std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = i;
  return r;
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// IQN loss

// Quantile levels for one loss evaluation, one row per batch element.
struct TauDraws {
  std::vector<std::vector<double>> policy;  // K draws of beta(U) for a*
  std::vector<std::vector<double>> online;  // N draws of U for Z(x, a)
  std::vector<std::vector<double>> target;  // N' draws of U for Z(x', a*)
};

// Per element: K policy levels, then N online, then N' target levels.
inline TauDraws draw_taus(std::size_t batch, const LossConfig& config, Rng& rng) {
  TauDraws d;
  d.policy.resize(batch);
  d.online.resize(batch);
  d.target.resize(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < config.k_policy; ++k) {
      d.policy[b].push_back(sample_tau(config.policy_measure, rng));
    }
    for (std::size_t i = 0; i < config.n_online; ++i) d.online[b].push_back(rng.uniform());
    for (std::size_t j = 0; j < config.n_target; ++j) d.target[b].push_back(rng.uniform());
  }
  return d;
}

// Greedy next actions a* = argmax_a (1/K) sum_k Z_{tau~_k}(x', a) together
// with the bootstrap values Z_{tau'_j}(x', a*), for non-terminal elements.
inline std::vector<std::vector<double>> iqn_bootstrap_values(
    const IqnNetwork& target, std::span<const Transition> batch,
    const TauDraws& taus, const std::vector<std::size_t>& rows) {
  std::vector<std::vector<double>> out(batch.size());
  if (rows.empty()) return out;
  const std::size_t k = taus.policy[rows.front()].size();
  const std::size_t np = taus.target[rows.front()].size();
  const std::size_t a = target.spec().action_count;
  Tensor tau_matrix({rows.size(), k + np});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& pol = taus.policy[rows[r]];
    const auto& tgt = taus.target[rows[r]];
    if (pol.size() != k || tgt.size() != np) throw ShapeError("ragged tau draws");
    std::copy(pol.begin(), pol.end(), &tau_matrix.at(r, 0));
    std::copy(tgt.begin(), tgt.end(), &tau_matrix.at(r, k));
  }
  const Tensor z =
      target.forward(detail::stack_states(batch, true, rows), tau_matrix).output;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::vector<double> q(a, 0.0);
    const std::size_t base = r * (k + np);
    for (std::size_t s = 0; s < k; ++s) {
      for (std::size_t j = 0; j < a; ++j) q[j] += z.at(base + s, j);
    }
    const std::size_t best = detail::argmax(q);
    auto& v = out[rows[r]];
    for (std::size_t s = 0; s < np; ++s) v.push_back(z.at(base + k + s, best));
  }
  return out;
}

// Loss with explicitly supplied quantile levels; iqn_loss draws them.
inline LossResult iqn_loss_with_taus(const IqnNetwork& online, const IqnNetwork& target,
                                     std::span<const Transition> batch,
                                     const LossConfig& config, const TauDraws& taus) {
  const auto& spec = online.spec();
  detail::check_batch(batch, spec.state_dim, spec.action_count);
  if (taus.online.size() != batch.size() || taus.target.size() != batch.size() ||
      taus.policy.size() != batch.size()) {
    throw ShapeError("tau draws do not match the batch size");
  }
  const std::size_t bsz = batch.size();
  const std::size_t n = taus.online.front().size();
  std::vector<std::size_t> live;
  for (std::size_t b = 0; b < bsz; ++b) {
    if (!batch[b].terminal) live.push_back(b);
  }
  const auto boot = iqn_bootstrap_values(target, batch, taus, live);

  Tensor online_taus({bsz, n});
  for (std::size_t b = 0; b < bsz; ++b) {
    if (taus.online[b].size() != n) throw ShapeError("ragged tau draws");
    std::copy(taus.online[b].begin(), taus.online[b].end(), &online_taus.at(b, 0));
  }
  NetworkPass pass =
      online.forward(detail::stack_states(batch, false, detail::all_rows(bsz)), online_taus);
  const Tensor& z = pass.output;

  const double scale =
      1.0 / static_cast<double>(bsz) / (config.normalize_online ? static_cast<double>(n) : 1.0);
  Tensor dz(z.shape());
  LossResult result;
  std::uint64_t sig = 1469598103934665603ULL;
  std::vector<double> online_vals(n), d_online;
  for (std::size_t b = 0; b < bsz; ++b) {
    const Transition& t = batch[b];
    for (std::size_t i = 0; i < n; ++i) online_vals[i] = z.at(b * n + i, t.action);
    std::vector<double> targets;
    if (t.terminal) {
      targets.assign(taus.target[b].size(), t.reward);
    } else {
      for (double v : boot[b]) targets.push_back(t.reward + config.gamma * v);
    }
    const auto td = TdErrorMatrix::build(online_vals, taus.online[b], targets, taus.target[b]);
    result.loss += td.loss(config.kappa, &d_online) * scale;
    sig = (sig ^ td.branch_signature(config.kappa)) * 1099511628211ULL;
    for (std::size_t i = 0; i < n; ++i) dz.at(b * n + i, t.action) = d_online[i] * scale;
  }
  result.gradients = online.backward(pass, dz);
  result.branch_signature = sig ^ pass.exec.relu_signature();
  return result;
}

inline LossResult iqn_loss(const IqnNetwork& online, const IqnNetwork& target,
                           std::span<const Transition> batch, const LossConfig& config,
                           Rng& rng) {
  config.validate();
  if (batch.empty()) throw DomainError("loss needs a non-empty batch");
  return iqn_loss_with_taus(online, target, batch, config,
                            draw_taus(batch.size(), config, rng));
}

// ---------------------------------------------------------------------------
// QR-DQN loss

// Pairwise TD errors over the N fixed midpoints on both sides; a* is greedy
// on the target network's quantile mean.
inline LossResult qr_loss(const QrNetwork& online, const QrNetwork& target,
                          std::span<const Transition> batch, const LossConfig& config) {
  const auto& spec = online.spec();
  detail::check_batch(batch, spec.state_dim, spec.action_count);
  if (!(config.kappa >= 0.0)) throw DomainError("kappa must be >= 0");
  const std::size_t n = online.quantile_count(), a = spec.action_count;
  const std::size_t bsz = batch.size();
  const auto mids = qr_midpoints(n);

  std::vector<std::size_t> live;
  for (std::size_t b = 0; b < bsz; ++b) {
    if (!batch[b].terminal) live.push_back(b);
  }
  std::vector<std::vector<double>> boot(bsz);
  if (!live.empty()) {
    const Tensor zt = target.forward(detail::stack_states(batch, true, live)).output;
    for (std::size_t r = 0; r < live.size(); ++r) {
      std::vector<double> q(a, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < a; ++j) q[j] += zt.at(r, i * a + j);
      }
      const std::size_t best = detail::argmax(q);
      for (std::size_t i = 0; i < n; ++i) boot[live[r]].push_back(zt.at(r, i * a + best));
    }
  }

  NetworkPass pass = online.forward(detail::stack_states(batch, false, detail::all_rows(bsz)));
  const Tensor& z = pass.output;
  const double scale =
      1.0 / static_cast<double>(bsz) / (config.normalize_online ? static_cast<double>(n) : 1.0);
  Tensor dz(z.shape());
  LossResult result;
  std::uint64_t sig = 1469598103934665603ULL;
  std::vector<double> online_vals(n), d_online;
  for (std::size_t b = 0; b < bsz; ++b) {
    const Transition& t = batch[b];
    for (std::size_t i = 0; i < n; ++i) online_vals[i] = z.at(b, i * a + t.action);
    std::vector<double> targets;
    if (t.terminal) {
      targets.assign(n, t.reward);
    } else {
      for (double v : boot[b]) targets.push_back(t.reward + config.gamma * v);
    }
    const auto td = TdErrorMatrix::build(online_vals, mids, targets, mids);
    result.loss += td.loss(config.kappa, &d_online) * scale;
    sig = (sig ^ td.branch_signature(config.kappa)) * 1099511628211ULL;
    for (std::size_t i = 0; i < n; ++i) dz.at(b, i * a + t.action) = d_online[i] * scale;
  }
  result.gradients = online.backward(pass, dz);
  result.branch_signature = sig ^ pass.exec.relu_signature();
  return result;
}

// ---------------------------------------------------------------------------
// DQN loss: batch mean of L_kappa(delta) / kappa on the scalar TD error
// (|delta| when kappa = 0).

inline LossResult dqn_loss(const DqnNetwork& online, const DqnNetwork& target,
                           std::span<const Transition> batch, const LossConfig& config) {
  const auto& spec = online.spec();
  detail::check_batch(batch, spec.state_dim, spec.action_count);
  const std::size_t bsz = batch.size(), a = spec.action_count;
  std::vector<std::size_t> live;
  for (std::size_t b = 0; b < bsz; ++b) {
    if (!batch[b].terminal) live.push_back(b);
  }
  std::vector<double> boot(bsz, 0.0);
  if (!live.empty()) {
    const Tensor qt = target.forward(detail::stack_states(batch, true, live)).output;
    for (std::size_t r = 0; r < live.size(); ++r) {
      const double* row = qt.data().data() + r * a;
      boot[live[r]] = *std::max_element(row, row + a);
    }
  }
  NetworkPass pass = online.forward(detail::stack_states(batch, false, detail::all_rows(bsz)));
  const Tensor& q = pass.output;
  Tensor dq(q.shape());
  LossResult result;
  const double scale = 1.0 / static_cast<double>(bsz);
  for (std::size_t b = 0; b < bsz; ++b) {
    const Transition& t = batch[b];
    const double y = t.terminal ? t.reward : t.reward + config.gamma * boot[b];
    const double delta = y - q.at(b, t.action);
    // A symmetric quantile loss at tau = 1/2 is half the Huber loss.
    result.loss += 2.0 * huber_quantile(delta, 0.5, config.kappa) * scale;
    dq.at(b, t.action) = -2.0 * huber_quantile_derivative(delta, 0.5, config.kappa) * scale;
  }
  result.gradients = online.backward(pass, dq);
  return result;
}

}  // namespace iqn
