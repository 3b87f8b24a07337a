#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "iqn/distortion.hpp"
#include "iqn/error.hpp"
#include "iqn/graph.hpp"
#include "iqn/random.hpp"
#include "iqn/tensor.hpp"

namespace iqn {

enum class EmbeddingKind { kCosine, kLearnedMlp };
enum class Nonlinearity { kRelu, kSigmoid };
enum class MergeKind { kHadamard, kConcat, kResidual };

inline const char* to_string(EmbeddingKind k) {
  return k == EmbeddingKind::kCosine ? "cosine" : "mlp";
}
inline const char* to_string(Nonlinearity k) {
  return k == Nonlinearity::kRelu ? "relu" : "sigmoid";
}
inline const char* to_string(MergeKind k) {
  switch (k) {
    case MergeKind::kHadamard: return "hadamard";
    case MergeKind::kConcat: return "concat";
    case MergeKind::kResidual: return "residual";
  }
  return "?";
}

inline EmbeddingKind parse_embedding(const std::string& s) {
  if (s == "cosine") return EmbeddingKind::kCosine;
  if (s == "mlp") return EmbeddingKind::kLearnedMlp;
  throw ConfigError("embedding must be 'cosine' or 'mlp', got '" + s + "'");
}
inline Nonlinearity parse_nonlinearity(const std::string& s) {
  if (s == "relu") return Nonlinearity::kRelu;
  if (s == "sigmoid") return Nonlinearity::kSigmoid;
  throw ConfigError("nonlinearity must be 'relu' or 'sigmoid', got '" + s + "'");
}
inline MergeKind parse_merge(const std::string& s) {
  if (s == "hadamard") return MergeKind::kHadamard;
  if (s == "concat" || s == "concatenate") return MergeKind::kConcat;
  if (s == "residual") return MergeKind::kResidual;
  throw ConfigError("merge must be hadamard, concat or residual, got '" + s + "'");
}

// Shape of psi (state encoder), phi (tau embedding), the merge, and the head
// f. QR and DQN networks use only state_dim, psi_hidden, feature_dim,
// head_hidden and action_count.
struct ArchitectureSpec {
  std::size_t state_dim = 1;
  std::vector<std::size_t> psi_hidden{128};
  std::size_t feature_dim = 128;
  std::size_t action_count = 2;
  EmbeddingKind embedding = EmbeddingKind::kCosine;
  Nonlinearity nonlinearity = Nonlinearity::kRelu;
  MergeKind merge = MergeKind::kHadamard;
  std::size_t embedding_dim = 64;
  // Hidden layers of f; empty means f is a single linear map.
  std::vector<std::size_t> head_hidden{};

  std::size_t head_input_dim() const {
    return merge == MergeKind::kConcat ? 2 * feature_dim : feature_dim;
  }

  void validate() const {
    auto positive = [](std::size_t v, const char* what) {
      if (v == 0) throw ConfigError(std::string(what) + " must be positive");
    };
    positive(state_dim, "state_dim");
    positive(feature_dim, "feature_dim");
    positive(action_count, "action_count");
    positive(embedding_dim, "embedding_dim");
    for (auto h : psi_hidden) positive(h, "psi_hidden entries");
    for (auto h : head_hidden) positive(h, "head_hidden entries");
  }

  friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

namespace detail {

struct LayerDecl {
  std::string name;
  Shape shape;
  std::size_t fan_in;
};

// Graph under construction plus the list of parameters it declared.
struct Builder {
  std::shared_ptr<ComputeGraph> graph = std::make_shared<ComputeGraph>();
  std::vector<LayerDecl> params;

  NodeId dense(NodeId x, std::size_t in, std::size_t out, const std::string& prefix) {
    auto w = graph->parameter(prefix + ".w", {in, out});
    auto b = graph->parameter(prefix + ".b", {1, out});
    params.push_back({prefix + ".w", {in, out}, in});
    params.push_back({prefix + ".b", {1, out}, in});
    return graph->add(graph->matmul(x, w, prefix), b, prefix);
  }

  NodeId activate(NodeId x, Nonlinearity nl) {
    return nl == Nonlinearity::kRelu ? graph->relu(x) : graph->sigmoid(x);
  }

  // Stack of relu layers ending in `out` units, also relu.
  NodeId mlp(NodeId x, std::size_t in, const std::vector<std::size_t>& hidden,
             std::size_t out, const std::string& prefix) {
    std::size_t width = in;
    std::size_t layer = 0;
    for (std::size_t h : hidden) {
      x = graph->relu(dense(x, width, h, prefix + "." + std::to_string(layer++)));
      width = h;
    }
    return graph->relu(dense(x, width, out, prefix + "." + std::to_string(layer)));
  }

  // Head f: optional relu hidden layers, then a linear map to `out`.
  NodeId head(NodeId x, std::size_t in, const std::vector<std::size_t>& hidden,
              std::size_t out) {
    std::size_t width = in;
    std::size_t layer = 0;
    for (std::size_t h : hidden) {
      x = graph->relu(dense(x, width, h, "head." + std::to_string(layer++)));
      width = h;
    }
    return dense(x, width, out, "head." + std::to_string(layer));
  }
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
inline TensorMap init_parameters(const std::vector<LayerDecl>& decls, Rng& rng) {
  TensorMap params;
  for (const auto& d : decls) {
    Tensor t(d.shape);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d.fan_in));
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
    params.emplace(d.name, std::move(t));
  }
  return params;
}

inline void check_parameters(const std::vector<LayerDecl>& decls, const TensorMap& params) {
  if (params.size() != decls.size()) {
    throw ShapeError("parameter bundle has " + std::to_string(params.size()) +
                     " tensors, architecture needs " + std::to_string(decls.size()));
  }
  for (const auto& d : decls) {
    auto it = params.find(d.name);
    if (it == params.end()) throw ShapeError("missing parameter '" + d.name + "'");
    if (it->second.shape() != d.shape) {
      throw ShapeError("parameter '" + d.name + "' has shape " +
                       shape_string(it->second.shape()) + ", expected " +
                       shape_string(d.shape));
    }
  }
}

inline void check_states(const Tensor& states, std::size_t state_dim) {
  if (states.rank() != 2 || states.cols() != state_dim) {
    throw ShapeError("states must be [batch x " + std::to_string(state_dim) +
                     "], got " + shape_string(states.shape()));
  }
}

}  // namespace detail

// Result of a forward pass that can be differentiated afterwards.
struct NetworkPass {
  GraphExecutor exec;
  Tensor output;  // [rows x columns] as produced by the head
};

// Z_tau(x, a) = f(m(psi(x), phi(tau)))_a.
class IqnNetwork {
 public:
  IqnNetwork(const ArchitectureSpec& spec, Rng& rng) : spec_(spec) {
    build();
    params_ = detail::init_parameters(decls_, rng);
  }

  IqnNetwork(const ArchitectureSpec& spec, TensorMap params)
      : spec_(spec), params_(std::move(params)) {
    build();
    detail::check_parameters(decls_, params_);
  }

  const ArchitectureSpec& spec() const { return spec_; }
  const TensorMap& parameters() const { return params_; }
  TensorMap& parameters() { return params_; }
  std::shared_ptr<const ComputeGraph> graph() const { return graph_; }

  // states [B x S]; taus [B x T] gives every state its own T levels.
  // Output rows are state-major: row b*T + t holds Z_{tau[b,t]}(x_b, .).
  NetworkPass forward(const Tensor& states, const Tensor& taus) const {
    detail::check_states(states, spec_.state_dim);
    if (taus.rank() != 2 || taus.rows() != states.rows()) {
      throw ShapeError("taus must be [batch x num_taus] matching the state batch");
    }
    TensorMap inputs{{"state", states}, {"tau", tau_input(taus.data())}};
    NetworkPass pass{GraphExecutor(graph_), {}};
    pass.exec.set_input_gradients(false);
    pass.exec.forward(inputs, params_);
    pass.output = pass.exec.output("z");
    return pass;
  }

  TensorMap backward(NetworkPass& pass, const Tensor& dz) const {
    return pass.exec.backward(TensorMap{{"z", dz}});
  }

 private:
  Tensor tau_input(std::span<const double> taus) const {
    for (double t : taus) {
      if (!(t >= 0.0 && t <= 1.0)) throw DomainError("tau must lie in [0, 1]");
    }
    const std::size_t r = taus.size();
    if (spec_.embedding == EmbeddingKind::kLearnedMlp) {
      return Tensor({r, 1}, std::vector<double>(taus.begin(), taus.end()));
    }
    // cos(pi i tau) for i = 0..n-1 by repeated rotation through pi tau.
    const std::size_t n = spec_.embedding_dim;
    Tensor basis({r, n});
    for (std::size_t row = 0; row < r; ++row) {
      const double step_c = std::cos(std::numbers::pi * taus[row]);
      const double step_s = std::sin(std::numbers::pi * taus[row]);
      double c = 1.0, s = 0.0;
      double* out = basis.data().data() + row * n;
      for (std::size_t i = 0; i < n; ++i) {
        out[i] = c;
        const double next_c = c * step_c - s * step_s;
        s = s * step_c + c * step_s;
        c = next_c;
      }
    }
    return basis;
  }

  void build() {
    spec_.validate();
    detail::Builder b;
    auto& g = *b.graph;
    const std::size_t d = spec_.feature_dim;
    const NodeId state = g.input("state");
    const NodeId tau = g.input("tau");
    const NodeId psi = b.mlp(state, spec_.state_dim, spec_.psi_hidden, d, "psi");
    NodeId phi;
    if (spec_.embedding == EmbeddingKind::kCosine) {
      // "tau" carries the cosine basis; one linear map and the nonlinearity.
      phi = b.activate(b.dense(tau, spec_.embedding_dim, d, "phi"), spec_.nonlinearity);
    } else {
      const NodeId hidden =
          b.activate(b.dense(tau, 1, spec_.embedding_dim, "phi.0"), spec_.nonlinearity);
      phi = b.activate(b.dense(hidden, spec_.embedding_dim, d, "phi.1"), spec_.nonlinearity);
    }
    const NodeId psi_rows = g.repeat_rows(psi, tau, "psi_rep");
    NodeId merged{};
    switch (spec_.merge) {
      case MergeKind::kHadamard:
        merged = g.hadamard(psi_rows, phi, "merge");
        break;
      case MergeKind::kResidual:
        merged = g.add(psi_rows, g.hadamard(psi_rows, phi), "merge");
        break;
      case MergeKind::kConcat:
        merged = g.concat(psi_rows, phi, "merge");
        break;
    }
    const NodeId z = b.head(merged, spec_.head_input_dim(), spec_.head_hidden,
                            spec_.action_count);
    g.mark_output("z", z);
    g.mark_output("psi", psi);
    g.mark_output("phi", phi);
    graph_ = b.graph;
    decls_ = std::move(b.params);
  }

  ArchitectureSpec spec_;
  TensorMap params_;
  std::shared_ptr<const ComputeGraph> graph_;
  std::vector<detail::LayerDecl> decls_;
};

// Shared shape of the baselines: psi followed by a head with `outputs` units.
class FixedHeadNetwork {
 public:
  const ArchitectureSpec& spec() const { return spec_; }
  const TensorMap& parameters() const { return params_; }
  TensorMap& parameters() { return params_; }
  std::shared_ptr<const ComputeGraph> graph() const { return graph_; }

  NetworkPass forward(const Tensor& states) const {
    detail::check_states(states, spec_.state_dim);
    NetworkPass pass{GraphExecutor(graph_), {}};
    pass.exec.set_input_gradients(false);
    pass.exec.forward(TensorMap{{"state", states}}, params_);
    pass.output = pass.exec.output("z");
    return pass;
  }

  TensorMap backward(NetworkPass& pass, const Tensor& dz) const {
    return pass.exec.backward(TensorMap{{"z", dz}});
  }

 protected:
  FixedHeadNetwork(const ArchitectureSpec& spec, std::size_t outputs) : spec_(spec) {
    spec_.validate();
    detail::Builder b;
    const NodeId state = b.graph->input("state");
    const NodeId psi =
        b.mlp(state, spec_.state_dim, spec_.psi_hidden, spec_.feature_dim, "psi");
    const NodeId z = b.head(psi, spec_.feature_dim, spec_.head_hidden, outputs);
    b.graph->mark_output("z", z);
    graph_ = b.graph;
    decls_ = std::move(b.params);
  }

  void init(Rng& rng) { params_ = detail::init_parameters(decls_, rng); }
  void adopt(TensorMap params) {
    detail::check_parameters(decls_, params);
    params_ = std::move(params);
  }

  ArchitectureSpec spec_;
  TensorMap params_;
  std::shared_ptr<const ComputeGraph> graph_;
  std::vector<detail::LayerDecl> decls_;
};

// N fixed quantiles per action; head column i * |A| + a is theta_i(x, a).
class QrNetwork : public FixedHeadNetwork {
 public:
  QrNetwork(const ArchitectureSpec& spec, std::size_t quantiles, Rng& rng)
      : FixedHeadNetwork(spec, checked(quantiles) * spec.action_count),
        quantiles_(quantiles) {
    init(rng);
  }
  QrNetwork(const ArchitectureSpec& spec, std::size_t quantiles, TensorMap params)
      : FixedHeadNetwork(spec, checked(quantiles) * spec.action_count),
        quantiles_(quantiles) {
    adopt(std::move(params));
  }

  std::size_t quantile_count() const { return quantiles_; }

 private:
  static std::size_t checked(std::size_t n) {
    if (n == 0) throw ConfigError("quantile count must be >= 1");
    return n;
  }
  std::size_t quantiles_;
};

// Q(x, a) = f(psi(x))_a.
class DqnNetwork : public FixedHeadNetwork {
 public:
  DqnNetwork(const ArchitectureSpec& spec, Rng& rng)
      : FixedHeadNetwork(spec, spec.action_count) {
    init(rng);
  }
  DqnNetwork(const ArchitectureSpec& spec, TensorMap params)
      : FixedHeadNetwork(spec, spec.action_count) {
    adopt(std::move(params));
  }
};

// phi(tau) for each tau: [num_taus x feature_dim].
inline Tensor embed_tau(const IqnNetwork& net, std::span<const double> taus) {
  if (taus.empty()) throw ShapeError("embed_tau needs at least one tau");
  Tensor state({1, net.spec().state_dim});
  Tensor tau_row({1, taus.size()}, std::vector<double>(taus.begin(), taus.end()));
  NetworkPass pass = net.forward(state, tau_row);
  return pass.exec.output("phi");
}

// Shared taus for every state: [batch x num_taus x actions].
inline Tensor iqn_forward(const IqnNetwork& net, const Tensor& states,
                          std::span<const double> taus) {
  detail::check_states(states, net.spec().state_dim);
  if (taus.empty()) throw ShapeError("iqn_forward needs at least one tau");
  const std::size_t b = states.rows(), t = taus.size();
  Tensor tau_matrix({b, t});
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < t; ++j) tau_matrix.at(i, j) = taus[j];
  }
  NetworkPass pass = net.forward(states, tau_matrix);
  return pass.output.reshaped({b, t, net.spec().action_count});
}

// [batch x N x actions].
inline Tensor qr_forward(const QrNetwork& net, const Tensor& states) {
  NetworkPass pass = net.forward(states);
  return pass.output.reshaped(
      {states.rows(), net.quantile_count(), net.spec().action_count});
}

inline Tensor dqn_forward(const DqnNetwork& net, const Tensor& states) {
  return net.forward(states).output;
}

// (1/K) sum_k Z_{tau_k}(x, a) with tau_k drawn by sample_tau(measure).
inline std::vector<double> q_beta_estimate(const IqnNetwork& net,
                                           std::span<const double> state,
                                           const DistortionMeasure& measure,
                                           std::size_t k, Rng& rng) {
  if (k == 0) throw DomainError("policy sample count K must be >= 1");
  if (state.size() != net.spec().state_dim) {
    throw ShapeError("state has " + std::to_string(state.size()) +
                     " entries, network expects " +
                     std::to_string(net.spec().state_dim));
  }
  Tensor taus({1, k});
  for (std::size_t i = 0; i < k; ++i) taus[i] = sample_tau(measure, rng);
  Tensor s({1, state.size()}, std::vector<double>(state.begin(), state.end()));
  const Tensor z = net.forward(s, taus).output;
  const std::size_t a = net.spec().action_count;
  std::vector<double> q(a, 0.0);
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t j = 0; j < a; ++j) q[j] += z.at(r, j);
  }
  for (double& v : q) v /= static_cast<double>(k);
  return q;
}

}  // namespace iqn
