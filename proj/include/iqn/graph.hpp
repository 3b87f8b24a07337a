#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "iqn/error.hpp"
#include "iqn/tensor.hpp"

namespace iqn {

enum class Op {
  kInput,
  kParameter,
  kMatMul,
  kAdd,
  kHadamard,
  kRelu,
  kSigmoid,
  kCosine,
  kScale,
  kConcat,
  kRepeatRows,
  kReduceSum,
  kReduceMean,
  kSelect,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kParameter: return "parameter";
    case Op::kMatMul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kHadamard: return "hadamard";
    case Op::kRelu: return "relu";
    case Op::kSigmoid: return "sigmoid";
    case Op::kCosine: return "cosine";
    case Op::kScale: return "scale";
    case Op::kConcat: return "concat";
    case Op::kRepeatRows: return "repeat_rows";
    case Op::kReduceSum: return "reduce_sum";
    case Op::kReduceMean: return "reduce_mean";
    case Op::kSelect: return "select";
  }
  return "?";
}

using NodeId = std::size_t;

struct Node {
  Op op;
  std::vector<NodeId> inputs;
  std::string name;      // slot name for inputs/parameters, label otherwise
  Shape param_shape;     // declared shape, parameters only
  double scalar = 1.0;   // kScale factor
};

// Static dataflow graph. Nodes can only reference earlier nodes, so the
// insertion order is a topological order and the graph is acyclic by
// construction. Only the leading (batch) dimension of inputs is dynamic;
// shape rules are checked per node when the graph is evaluated.
class ComputeGraph {
 public:
  NodeId input(std::string name) {
    return push({Op::kInput, {}, std::move(name), {}, 1.0});
  }
  NodeId parameter(std::string name, Shape shape) {
    return push({Op::kParameter, {}, std::move(name), std::move(shape), 1.0});
  }

  // (a x b) . (b x c) -> (a x c)
  NodeId matmul(NodeId a, NodeId b, std::string label = {}) {
    return push({Op::kMatMul, {a, b}, std::move(label), {}, 1.0});
  }
  // Elementwise sum; `b` may also be a 1 x c row broadcast over a's rows.
  NodeId add(NodeId a, NodeId b, std::string label = {}) {
    return push({Op::kAdd, {a, b}, std::move(label), {}, 1.0});
  }
  NodeId hadamard(NodeId a, NodeId b, std::string label = {}) {
    return push({Op::kHadamard, {a, b}, std::move(label), {}, 1.0});
  }
  NodeId relu(NodeId a, std::string label = {}) {
    return push({Op::kRelu, {a}, std::move(label), {}, 1.0});
  }
  NodeId sigmoid(NodeId a, std::string label = {}) {
    return push({Op::kSigmoid, {a}, std::move(label), {}, 1.0});
  }
  NodeId cosine(NodeId a, std::string label = {}) {
    return push({Op::kCosine, {a}, std::move(label), {}, 1.0});
  }
  NodeId scale(NodeId a, double factor, std::string label = {}) {
    return push({Op::kScale, {a}, std::move(label), {}, factor});
  }
  // Column-wise concatenation of two matrices with equal row counts.
  NodeId concat(NodeId a, NodeId b, std::string label = {}) {
    return push({Op::kConcat, {a, b}, std::move(label), {}, 1.0});
  }
  // Repeats every row of `a` consecutively so the result has as many rows
  // as `like`; rows(like) must be a multiple of rows(a).
  NodeId repeat_rows(NodeId a, NodeId like, std::string label = {}) {
    return push({Op::kRepeatRows, {a, like}, std::move(label), {}, 1.0});
  }
  NodeId reduce_sum(NodeId a, std::string label = {}) {
    return push({Op::kReduceSum, {a}, std::move(label), {}, 1.0});
  }
  NodeId reduce_mean(NodeId a, std::string label = {}) {
    return push({Op::kReduceMean, {a}, std::move(label), {}, 1.0});
  }
  // Picks a[r, index[r]] for every row r; `index` holds integral values.
  NodeId select(NodeId a, NodeId index, std::string label = {}) {
    return push({Op::kSelect, {a, index}, std::move(label), {}, 1.0});
  }

  void mark_output(std::string name, NodeId id) {
    check_id(id);
    outputs_.emplace_back(std::move(name), id);
  }

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<std::pair<std::string, NodeId>>& outputs() const {
    return outputs_;
  }

  NodeId output_id(const std::string& name) const {
    for (const auto& [n, id] : outputs_) {
      if (n == name) return id;
    }
    throw Error("graph has no output named '" + name + "'");
  }

  std::string describe(NodeId id) const {
    const Node& n = nodes_.at(id);
    std::string s = "node " + std::to_string(id) + " (" + op_name(n.op);
    if (!n.name.empty()) s += " '" + n.name + "'";
    return s + ")";
  }

 private:
  NodeId push(Node node) {
    for (NodeId in : node.inputs) check_id(in);
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
  }
  void check_id(NodeId id) const {
    if (id >= nodes_.size()) {
      throw Error("node id " + std::to_string(id) + " does not exist");
    }
  }

  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, NodeId>> outputs_;
};

namespace detail {

// c[m x n] += a[m x k] . b[k x n]
inline void gemm_nn(const double* __restrict a, const double* __restrict b,
                    double* __restrict c, std::size_t m,
                    std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[m x k] += a[m x n] . b[k x n]^T
inline void gemm_nt(const double* __restrict a, const double* __restrict b,
                    double* __restrict c, std::size_t m,
                    std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * n;
    double* ci = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += ai[j] * bp[j];
      ci[p] += acc;
    }
  }
}

// c[k x n] += a[m x k]^T . b[m x n]
inline void gemm_tn(const double* __restrict a, const double* __restrict b,
                    double* __restrict c, std::size_t m,
                    std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

// Evaluates a ComputeGraph for one set of bindings and keeps the activations
// needed for reverse accumulation. One executor per thread; the graph itself
// is shared read-only.
class GraphExecutor {
 public:
  explicit GraphExecutor(std::shared_ptr<const ComputeGraph> graph)
      : graph_(std::move(graph)) {
    plan_gradients();
  }

  // When off, backward only propagates along paths that reach a parameter
  // and input_gradient() reports zeros.
  void set_input_gradients(bool on) {
    input_gradients_ = on;
    plan_gradients();
  }

  const ComputeGraph& graph() const { return *graph_; }

  void forward(const TensorMap& inputs, const TensorMap& params) {
    const auto& nodes = graph_->nodes();
    values_.assign(nodes.size(), Tensor());
    relu_kinks_ = 0;
    relu_units_ = 0;
    relu_signature_ = 1469598103934665603ULL;
    forwarded_ = false;
    for (NodeId id = 0; id < nodes.size(); ++id) {
      values_[id] = eval_node(id, inputs, params);
    }
    forwarded_ = true;
  }

  bool has_forwarded() const { return forwarded_; }

  const Tensor& value(NodeId id) const {
    require_forward();
    return values_.at(id);
  }
  const Tensor& output(const std::string& name) const {
    return value(graph_->output_id(name));
  }
  TensorMap outputs() const {
    require_forward();
    TensorMap out;
    for (const auto& [name, id] : graph_->outputs()) out[name] = values_[id];
    return out;
  }

  // Number of relu inputs that were exactly zero in the last forward pass.
  std::size_t relu_kinks() const { return relu_kinks_; }
  // Hash of the relu activation pattern of the last forward pass.
  std::uint64_t relu_signature() const { return relu_signature_; }

  // Reverse accumulation from a seed gradient on each named output.
  // Returns d(seeded outputs)/d(parameter) for every parameter slot.
  TensorMap backward(const TensorMap& seeds) {
    require_forward();
    const auto& nodes = graph_->nodes();
    grads_.assign(nodes.size(), Tensor());
    has_grad_.assign(nodes.size(), false);
    for (const auto& [name, seed] : seeds) {
      const NodeId id = graph_->output_id(name);
      if (seed.shape() != values_[id].shape()) {
        throw ShapeError("seed gradient for output '" + name + "' has shape " +
                         shape_string(seed.shape()) + ", expected " +
                         shape_string(values_[id].shape()));
      }
      accumulate(id, seed);
    }
    for (NodeId id = nodes.size(); id-- > 0;) {
      if (has_grad_[id] && wanted_[id]) backprop_node(id);
    }
    TensorMap out;
    for (NodeId id = 0; id < nodes.size(); ++id) {
      if (nodes[id].op != Op::kParameter) continue;
      out[nodes[id].name] =
          has_grad_[id] ? grads_[id] : Tensor::zeros(values_[id].shape());
    }
    return out;
  }

  // Convenience for graphs with a single marked output.
  TensorMap backward(const Tensor& seed) {
    if (graph_->outputs().size() != 1) {
      throw Error("backward(seed) needs exactly one marked output");
    }
    return backward(TensorMap{{graph_->outputs().front().first, seed}});
  }

  // Gradient reaching a named input slot in the last backward pass.
  Tensor input_gradient(const std::string& name) const {
    const auto& nodes = graph_->nodes();
    for (NodeId id = 0; id < nodes.size(); ++id) {
      if (nodes[id].op == Op::kInput && nodes[id].name == name) {
        if (id < has_grad_.size() && has_grad_[id] && wanted_[id]) return grads_[id];
        return Tensor::zeros(values_.at(id).shape());
      }
    }
    throw Error("graph has no input named '" + name + "'");
  }

 private:
  void plan_gradients() {
    const auto& nodes = graph_->nodes();
    wanted_.assign(nodes.size(), false);
    for (NodeId id = 0; id < nodes.size(); ++id) {
      const Node& n = nodes[id];
      bool w = n.op == Op::kParameter || (n.op == Op::kInput && input_gradients_);
      for (NodeId k : n.inputs) w = w || wanted_[k];
      wanted_[id] = w;
    }
  }

  void require_forward() const {
    if (!forwarded_) throw StateError("backward/value requested before forward");
  }

  [[noreturn]] void shape_fail(NodeId id, const std::string& what) const {
    throw ShapeError(graph_->describe(id) + ": " + what);
  }

  static std::size_t rows(const Tensor& t) { return t.rows(); }
  static std::size_t cols(const Tensor& t) { return t.cols(); }

  Tensor eval_node(NodeId id, const TensorMap& inputs, const TensorMap& params) {
    const Node& n = graph_->nodes()[id];
    auto in = [&](std::size_t k) -> const Tensor& { return values_[n.inputs[k]]; };
    switch (n.op) {
      case Op::kInput: {
        auto it = inputs.find(n.name);
        if (it == inputs.end()) shape_fail(id, "input slot not bound");
        if (!it->second.all_finite()) shape_fail(id, "non-finite input");
        return it->second;
      }
      case Op::kParameter: {
        auto it = params.find(n.name);
        if (it == params.end()) shape_fail(id, "parameter slot not bound");
        if (it->second.shape() != n.param_shape) {
          shape_fail(id, "parameter has shape " +
                             shape_string(it->second.shape()) + ", declared " +
                             shape_string(n.param_shape));
        }
        if (!it->second.all_finite()) shape_fail(id, "non-finite parameter");
        return it->second;
      }
      case Op::kMatMul: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        if (cols(a) != rows(b)) {
          shape_fail(id, "matmul " + shape_string(a.shape()) + " . " +
                             shape_string(b.shape()));
        }
        Tensor c({rows(a), cols(b)});
        detail::gemm_nn(a.data().data(), b.data().data(), c.data().data(),
                        rows(a), cols(a), cols(b));
        return c;
      }
      case Op::kAdd: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        Tensor c = a;
        if (a.shape() == b.shape()) {
          for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
        } else if (rows(b) == 1 && cols(b) == cols(a)) {
          const std::size_t m = cols(a);
          for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i % m];
        } else {
          shape_fail(id, "add " + shape_string(a.shape()) + " + " +
                             shape_string(b.shape()));
        }
        return c;
      }
      case Op::kHadamard: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        if (a.shape() != b.shape()) {
          shape_fail(id, "hadamard " + shape_string(a.shape()) + " * " +
                             shape_string(b.shape()));
        }
        Tensor c = a;
        for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
        return c;
      }
      case Op::kRelu: {
        Tensor c = in(0);
        // Order-free sum of per-unit keys, so the loop stays vectorizable.
        std::uint64_t sig = 0;
        std::size_t kinks = 0;
        const std::uint64_t base = relu_units_;
        auto& d = c.data();
        for (std::size_t i = 0; i < d.size(); ++i) {
          const double v = d[i];
          kinks += v == 0.0;
          const std::uint64_t key = (base + i + 1) * 0x9E3779B97F4A7C15ULL;
          sig += v > 0.0 ? key ^ (key >> 29) : 0;
          d[i] = v > 0.0 ? v : 0.0;
        }
        relu_units_ += d.size();
        relu_kinks_ += kinks;
        relu_signature_ += sig;
        return c;
      }
      case Op::kSigmoid: {
        Tensor c = in(0);
        for (double& v : c.data()) v = detail::sigmoid(v);
        return c;
      }
      case Op::kCosine: {
        Tensor c = in(0);
        for (double& v : c.data()) v = std::cos(v);
        return c;
      }
      case Op::kScale: {
        Tensor c = in(0);
        for (double& v : c.data()) v *= n.scalar;
        return c;
      }
      case Op::kConcat: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        if (rows(a) != rows(b)) {
          shape_fail(id, "concat row mismatch " + shape_string(a.shape()) +
                             " | " + shape_string(b.shape()));
        }
        const std::size_t r = rows(a), ca = cols(a), cb = cols(b);
        Tensor c({r, ca + cb});
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < ca; ++j) c.at(i, j) = a.at(i, j);
          for (std::size_t j = 0; j < cb; ++j) c.at(i, ca + j) = b.at(i, j);
        }
        return c;
      }
      case Op::kRepeatRows: {
        const Tensor& a = in(0);
        const std::size_t target = rows(in(1));
        if (target % rows(a) != 0) {
          shape_fail(id, "cannot repeat " + std::to_string(rows(a)) +
                             " rows to " + std::to_string(target));
        }
        const std::size_t times = target / rows(a), m = cols(a);
        Tensor c({target, m});
        for (std::size_t i = 0; i < target; ++i) {
          const double* src = a.data().data() + (i / times) * m;
          std::copy(src, src + m, c.data().data() + i * m);
        }
        return c;
      }
      case Op::kReduceSum:
      case Op::kReduceMean: {
        const Tensor& a = in(0);
        double s = 0.0;
        for (double v : a.data()) s += v;
        if (n.op == Op::kReduceMean) s /= static_cast<double>(a.size());
        return Tensor::scalar(s);
      }
      case Op::kSelect: {
        const Tensor& a = in(0);
        const Tensor& idx = in(1);
        if (idx.size() != rows(a)) {
          shape_fail(id, "select needs one index per row of " +
                             shape_string(a.shape()));
        }
        Tensor c({rows(a), 1});
        for (std::size_t r = 0; r < rows(a); ++r) {
          const double k = idx[r];
          if (k < 0 || k != std::floor(k) ||
              static_cast<std::size_t>(k) >= cols(a)) {
            shape_fail(id, "select index out of range");
          }
          c[r] = a.at(r, static_cast<std::size_t>(k));
        }
        return c;
      }
    }
    shape_fail(id, "unknown op");
  }

  void accumulate(NodeId id, const Tensor& g) {
    if (!wanted_[id]) return;
    if (!has_grad_[id]) {
      grads_[id] = g;
      has_grad_[id] = true;
      return;
    }
    auto& dst = grads_[id].data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
  }

  Tensor& grad_slot(NodeId id) {
    if (!has_grad_[id]) {
      grads_[id] = Tensor::zeros(values_[id].shape());
      has_grad_[id] = true;
    }
    return grads_[id];
  }

  void backprop_node(NodeId id) {
    const Node& n = graph_->nodes()[id];
    const Tensor& g = grads_[id];
    const Tensor& out = values_[id];
    switch (n.op) {
      case Op::kInput:
      case Op::kParameter:
        return;
      case Op::kMatMul: {
        const Tensor& a = values_[n.inputs[0]];
        const Tensor& b = values_[n.inputs[1]];
        const std::size_t m = rows(a), k = cols(a), c = cols(b);
        if (wanted_[n.inputs[0]]) {
          Tensor& ga = grad_slot(n.inputs[0]);
          detail::gemm_nt(g.data().data(), b.data().data(), ga.data().data(), m,
                          c, k);
        }
        if (wanted_[n.inputs[1]]) {
          Tensor& gb = grad_slot(n.inputs[1]);
          detail::gemm_tn(a.data().data(), g.data().data(), gb.data().data(), m,
                          k, c);
        }
        return;
      }
      case Op::kAdd: {
        accumulate(n.inputs[0], g);
        const Tensor& b = values_[n.inputs[1]];
        if (b.shape() == g.shape()) {
          accumulate(n.inputs[1], g);
        } else {
          Tensor& gb = grad_slot(n.inputs[1]);
          const std::size_t m = cols(b);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i % m] += g[i];
        }
        return;
      }
      case Op::kHadamard: {
        const Tensor& a = values_[n.inputs[0]];
        const Tensor& b = values_[n.inputs[1]];
        Tensor& ga = grad_slot(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
        Tensor& gb = grad_slot(n.inputs[1]);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
        return;
      }
      case Op::kRelu: {
        Tensor& ga = grad_slot(n.inputs[0]);
        // Subgradient at exactly 0 is 0.
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (out[i] > 0.0) ga[i] += g[i];
        }
        return;
      }
      case Op::kSigmoid: {
        Tensor& ga = grad_slot(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * out[i] * (1.0 - out[i]);
        }
        return;
      }
      case Op::kCosine: {
        const Tensor& a = values_[n.inputs[0]];
        Tensor& ga = grad_slot(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] -= g[i] * std::sin(a[i]);
        }
        return;
      }
      case Op::kScale: {
        Tensor& ga = grad_slot(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.scalar;
        return;
      }
      case Op::kConcat: {
        const Tensor& a = values_[n.inputs[0]];
        const std::size_t r = rows(out), ca = cols(a), cc = cols(out);
        Tensor& ga = grad_slot(n.inputs[0]);
        Tensor& gb = grad_slot(n.inputs[1]);
        const std::size_t cb = cc - ca;
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < ca; ++j) ga.at(i, j) += g.at(i, j);
          for (std::size_t j = 0; j < cb; ++j) gb.at(i, j) += g.at(i, ca + j);
        }
        return;
      }
      case Op::kRepeatRows: {
        const Tensor& a = values_[n.inputs[0]];
        const std::size_t times = rows(out) / rows(a), m = cols(a);
        Tensor& ga = grad_slot(n.inputs[0]);
        for (std::size_t i = 0; i < rows(out); ++i) {
          double* dst = ga.data().data() + (i / times) * m;
          const double* src = g.data().data() + i * m;
          for (std::size_t j = 0; j < m; ++j) dst[j] += src[j];
        }
        return;
      }
      case Op::kReduceSum:
      case Op::kReduceMean: {
        const Tensor& a = values_[n.inputs[0]];
        double s = g[0];
        if (n.op == Op::kReduceMean) s /= static_cast<double>(a.size());
        Tensor& ga = grad_slot(n.inputs[0]);
        for (double& v : ga.data()) v += s;
        return;
      }
      case Op::kSelect: {
        const Tensor& idx = values_[n.inputs[1]];
        Tensor& ga = grad_slot(n.inputs[0]);
        for (std::size_t r = 0; r < g.size(); ++r) {
          ga.at(r, static_cast<std::size_t>(idx[r])) += g[r];
        }
        return;
      }
    }
  }

  std::shared_ptr<const ComputeGraph> graph_;
  std::vector<Tensor> values_;
  std::vector<Tensor> grads_;
  std::vector<bool> has_grad_;
  std::vector<bool> wanted_;
  bool input_gradients_ = true;
  bool forwarded_ = false;
  std::size_t relu_kinks_ = 0;
  std::uint64_t relu_units_ = 0;
  std::uint64_t relu_signature_ = 0;
};

}  // namespace iqn
