#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "iqn/error.hpp"
#include "iqn/tensor.hpp"

namespace iqn {

struct AdamHyperparameters {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 0.01 / 32.0;
};

struct AdamState {
  AdamHyperparameters hyper;
  TensorMap first_moment;
  TensorMap second_moment;
  std::uint64_t step_count = 0;
};

inline AdamState make_adam_state(const TensorMap& params,
                                 AdamHyperparameters hyper = {}) {
  AdamState state;
  state.hyper = hyper;
  for (const auto& [name, p] : params) {
    state.first_moment.emplace(name, Tensor::zeros(p.shape()));
    state.second_moment.emplace(name, Tensor::zeros(p.shape()));
  }
  return state;
}

// Bias-corrected Adam update, in place. Every parameter must have a
// gradient of the same shape; missing moments are created on first use.
inline void adam_step(TensorMap& params, const TensorMap& grads,
                      AdamState& state) {
  const AdamHyperparameters& h = state.hyper;
  if (!(h.learning_rate > 0.0)) {
    throw DomainError("adam learning rate must be positive");
  }
  for (const auto& [name, p] : params) {
    auto g = grads.find(name);
    if (g == grads.end()) {
      throw ShapeError("adam_step: missing gradient for '" + name + "'");
    }
    if (g->second.shape() != p.shape()) {
      throw ShapeError("adam_step: gradient for '" + name + "' has shape " +
                       shape_string(g->second.shape()) + ", parameter " +
                       shape_string(p.shape()));
    }
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (auto& [name, p] : params) {
    const Tensor& g = grads.at(name);
    auto [mit, m_new] = state.first_moment.try_emplace(name, p.shape());
    auto [vit, v_new] = state.second_moment.try_emplace(name, p.shape());
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    if (m.shape() != p.shape() || v.shape() != p.shape()) {
      throw ShapeError("adam_step: moment shape mismatch for '" + name + "'");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon);
    }
  }
}

}  // namespace iqn
