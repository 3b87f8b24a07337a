#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "iqn/error.hpp"
#include "iqn/graph.hpp"
#include "iqn/tensor.hpp"

namespace iqn {

struct GradCheckReport {
  double max_relative_error = 0.0;
  TensorMap::key_type worst_parameter;
  std::map<std::string, double> per_parameter;
  std::size_t compared = 0;
  // Coordinates whose finite-difference stencil crosses a kink.
  std::size_t excluded = 0;
  // Kinks (e.g. relu inputs exactly at 0) present at the base point.
  std::size_t kink_points = 0;
  double tolerance = 0.0;

  bool passed() const { return max_relative_error < tolerance; }
};

// One evaluation of a scalar objective. `signature` identifies the active
// piece of a piecewise-smooth function (relu masks, loss branch signs);
// a central difference whose endpoints disagree on it is not compared.
struct ObjectiveSample {
  double value = 0.0;
  std::uint64_t signature = 0;
  std::size_t kinks = 0;
};

using Objective = std::function<ObjectiveSample(const TensorMap&)>;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

// Compares `analytic` gradients against central differences of `objective`
// around `params`.
inline GradCheckReport grad_check(const Objective& objective,
                                  const TensorMap& params,
                                  const TensorMap& analytic, double step,
                                  double tolerance) {
  if (!(step > 0.0)) throw DomainError("grad_check step must be positive");
  GradCheckReport report;
  report.tolerance = tolerance;
  const ObjectiveSample base = objective(params);
  report.kink_points = base.kinks;
  TensorMap probe = params;
  for (const auto& [name, tensor] : params) {
    auto git = analytic.find(name);
    if (git == analytic.end()) {
      throw Error("grad_check: no analytic gradient for '" + name + "'");
    }
    if (git->second.shape() != tensor.shape()) {
      throw ShapeError("grad_check: gradient shape mismatch for '" + name + "'");
    }
    double worst = 0.0;
    Tensor& p = probe.at(name);
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double original = p[i];
      p[i] = original + step;
      const ObjectiveSample plus = objective(probe);
      p[i] = original - step;
      const ObjectiveSample minus = objective(probe);
      p[i] = original;
      if (plus.signature != base.signature ||
          minus.signature != base.signature) {
        ++report.excluded;
        continue;
      }
      const double numeric = (plus.value - minus.value) / (2.0 * step);
      const double err = relative_error(git->second[i], numeric);
      worst = std::max(worst, err);
      ++report.compared;
    }
    report.per_parameter[name] = worst;
    if (worst >= report.max_relative_error) {
      report.max_relative_error = worst;
      report.worst_parameter = name;
    }
  }
  return report;
}

// Graph form: the named output (or the single marked output) must be a
// scalar. Gradients come from the executor's reverse pass.
inline GradCheckReport grad_check(std::shared_ptr<const ComputeGraph> graph,
                                  const TensorMap& inputs,
                                  const TensorMap& params, double step,
                                  double tolerance,
                                  std::string output = {}) {
  if (output.empty()) {
    if (graph->outputs().size() != 1) {
      throw Error("grad_check needs a single marked output or an output name");
    }
    output = graph->outputs().front().first;
  }
  GraphExecutor exec(graph);
  exec.forward(inputs, params);
  if (exec.output(output).size() != 1) {
    throw ShapeError("grad_check requires a scalar output, '" + output +
                     "' has shape " +
                     shape_string(exec.output(output).shape()));
  }
  const TensorMap analytic = exec.backward(TensorMap{{output, Tensor::scalar(1.0)}});
  Objective f = [&](const TensorMap& p) {
    GraphExecutor e(graph);
    e.forward(inputs, p);
    return ObjectiveSample{e.output(output)[0], e.relu_signature(),
                           e.relu_kinks()};
  };
  return grad_check(f, params, analytic, step, tolerance);
}

}  // namespace iqn
