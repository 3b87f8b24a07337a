#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "iqn/error.hpp"
#include "iqn/random.hpp"

namespace iqn {

// ---------------------------------------------------------------------------
// Standard normal kernels

inline double normal_cdf(double z) {
  if (!std::isfinite(z)) throw DomainError("normal_cdf needs a finite argument");
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

// Wichura's AS 241 (PPND16). Relative accuracy about 1e-16 over (0, 1).
inline double normal_inv_cdf(double u) {
  if (!(u > 0.0 && u < 1.0)) {
    throw DomainError("normal_inv_cdf needs u strictly inside (0, 1)");
  }
  const double q = u - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  double r = std::sqrt(-std::log(q < 0.0 ? u : 1.0 - u));
  double x;
  if (r <= 5.0) {
    r -= 1.6;
    x = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
            3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
          4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
            6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
          2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    x = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
          5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
            1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -x : x;
}

// ---------------------------------------------------------------------------
// Distortion risk measures

enum class DistortionKind { kIdentity, kCpw, kWang, kPow, kCvar, kNorm };

struct DistortionMeasure {
  DistortionKind kind = DistortionKind::kIdentity;
  double eta = 0.0;

  static DistortionMeasure identity() { return {}; }
  static DistortionMeasure cpw(double eta) { return checked(DistortionKind::kCpw, eta); }
  static DistortionMeasure wang(double eta) { return checked(DistortionKind::kWang, eta); }
  static DistortionMeasure pow(double eta) { return checked(DistortionKind::kPow, eta); }
  static DistortionMeasure cvar(double eta) { return checked(DistortionKind::kCvar, eta); }
  static DistortionMeasure norm(int eta) {
    return checked(DistortionKind::kNorm, static_cast<double>(eta));
  }

  // Norm has no pointwise form; it only defines a sampling distribution.
  bool pointwise() const { return kind != DistortionKind::kNorm; }

  void validate() const {
    if (!std::isfinite(eta)) throw DomainError("distortion eta must be finite");
    switch (kind) {
      case DistortionKind::kCpw:
        if (!(eta > 0.0)) throw DomainError("CPW requires eta > 0");
        break;
      case DistortionKind::kCvar:
        if (!(eta > 0.0 && eta <= 1.0)) {
          throw DomainError("CVaR requires eta in (0, 1]");
        }
        break;
      case DistortionKind::kNorm:
        if (eta < 1.0 || eta != std::floor(eta)) {
          throw DomainError("Norm requires an integer eta >= 1");
        }
        break;
      default:
        break;
    }
  }

  friend bool operator==(const DistortionMeasure&, const DistortionMeasure&) = default;

 private:
  static DistortionMeasure checked(DistortionKind k, double eta) {
    DistortionMeasure m{k, eta};
    m.validate();
    return m;
  }
};

namespace detail {

inline std::string format_eta(double eta) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, eta);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline std::string to_string(const DistortionMeasure& m) {
  switch (m.kind) {
    case DistortionKind::kIdentity: return "neutral";
    case DistortionKind::kCpw: return "cpw:" + detail::format_eta(m.eta);
    case DistortionKind::kWang: return "wang:" + detail::format_eta(m.eta);
    case DistortionKind::kPow: return "pow:" + detail::format_eta(m.eta);
    case DistortionKind::kCvar: return "cvar:" + detail::format_eta(m.eta);
    case DistortionKind::kNorm: return "norm:" + detail::format_eta(m.eta);
  }
  return "?";
}

// Parses the `name:eta` grammar: neutral | cpw:E | wang:E | pow:E | cvar:E |
// norm:E.
inline DistortionMeasure parse_measure(std::string_view text) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  text = trim(text);
  if (text == "neutral" || text == "identity") return DistortionMeasure::identity();
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw ConfigError("distortion measure '" + std::string(text) +
                      "' must be 'neutral' or name:eta");
  }
  const std::string_view name = trim(text.substr(0, colon));
  const std::string_view num = trim(text.substr(colon + 1));
  double eta = 0.0;
  auto res = std::from_chars(num.data(), num.data() + num.size(), eta);
  if (res.ec != std::errc() || res.ptr != num.data() + num.size()) {
    throw ConfigError("bad eta in distortion measure '" + std::string(text) + "'");
  }
  DistortionMeasure m;
  if (name == "cpw") m.kind = DistortionKind::kCpw;
  else if (name == "wang") m.kind = DistortionKind::kWang;
  else if (name == "pow") m.kind = DistortionKind::kPow;
  else if (name == "cvar") m.kind = DistortionKind::kCvar;
  else if (name == "norm") m.kind = DistortionKind::kNorm;
  else throw ConfigError("unknown distortion measure '" + std::string(name) + "'");
  m.eta = eta;
  try {
    m.validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string(text) + ": " + e.what());
  }
  return m;
}

// beta(tau) for pointwise measures.
inline double apply(const DistortionMeasure& m, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("tau must lie in [0, 1]");
  switch (m.kind) {
    case DistortionKind::kIdentity:
      return tau;
    case DistortionKind::kCpw: {
      const double a = std::pow(tau, m.eta);
      const double b = std::pow(1.0 - tau, m.eta);
      return a / std::pow(a + b, 1.0 / m.eta);
    }
    case DistortionKind::kWang:
      // Continuity limits at the end points.
      if (tau == 0.0 || tau == 1.0) return tau;
      return normal_cdf(normal_inv_cdf(tau) + m.eta);
    case DistortionKind::kPow: {
      const double e = 1.0 / (1.0 + std::abs(m.eta));
      if (m.eta >= 0.0) return std::pow(tau, e);
      return 1.0 - std::pow(1.0 - tau, e);
    }
    case DistortionKind::kCvar:
      return m.eta * tau;
    case DistortionKind::kNorm:
      throw DomainError("norm is a sampling-only measure");
  }
  return tau;
}

// Draws beta(U), U ~ U([0,1]); Norm(eta) averages eta uniforms.
inline double sample_tau(const DistortionMeasure& m, Rng& rng) {
  if (m.kind == DistortionKind::kNorm) {
    const int count = static_cast<int>(m.eta);
    double s = 0.0;
    for (int i = 0; i < count; ++i) s += rng.uniform();
    return s / count;
  }
  return apply(m, rng.uniform());
}

// ---------------------------------------------------------------------------
// Quantile representations and distorted expectations

// Quantile values with their tau levels. As a distribution, `values` is read
// as a uniform mixture of N Diracs whose quantile function is the step
// function F^-1(tau) = values[i] on ((i-1)/N, i/N].
struct ReturnQuantiles {
  std::vector<double> taus;
  std::vector<double> values;

  static ReturnQuantiles from_values(std::vector<double> values) {
    ReturnQuantiles q;
    const std::size_t n = values.size();
    for (std::size_t i = 0; i < n; ++i) {
      q.taus.push_back((2.0 * static_cast<double>(i) + 1.0) / (2.0 * n));
    }
    q.values = std::move(values);
    return q;
  }

  std::size_t size() const { return values.size(); }

  bool sorted() const { return std::is_sorted(values.begin(), values.end()); }

  void validate() const {
    if (values.empty()) throw DomainError("quantile set must be non-empty");
    if (!sorted()) throw DomainError("quantile values must be non-decreasing");
  }

  // Step quantile function of the Dirac mixture.
  double at(double tau) const {
    const double n = static_cast<double>(values.size());
    const auto idx = static_cast<std::ptrdiff_t>(std::ceil(tau * n)) - 1;
    return values[static_cast<std::size_t>(
        std::clamp<std::ptrdiff_t>(idx, 0, static_cast<std::ptrdiff_t>(values.size()) - 1))];
  }
};

namespace detail {

// Lebesgue measure of {tau in [0,1] : beta(tau) <= u}, for monotone beta.
inline double preimage_measure(const DistortionMeasure& m, double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  switch (m.kind) {
    case DistortionKind::kIdentity:
      return u;
    case DistortionKind::kCvar:
      return std::min(u / m.eta, 1.0);
    case DistortionKind::kPow:
      if (m.eta >= 0.0) return std::pow(u, 1.0 + m.eta);
      return 1.0 - std::pow(1.0 - u, 1.0 + std::abs(m.eta));
    case DistortionKind::kWang:
      return normal_cdf(normal_inv_cdf(u) - m.eta);
    case DistortionKind::kCpw: {
      double lo = 0.0, hi = 1.0;
      while (hi - lo > 1e-13) {
        const double mid = 0.5 * (lo + hi);
        if (apply(m, mid) <= u) lo = mid;
        else hi = mid;
      }
      return 0.5 * (lo + hi);
    }
    case DistortionKind::kNorm:
      break;
  }
  throw DomainError("norm is a sampling-only measure");
}

}  // namespace detail

// Exact E_{tau~U}[F^-1(beta(tau))] for the step quantile function of
// `quantiles`: a weighted sum of the Dirac locations.
inline std::vector<double> distortion_weights(std::size_t n,
                                              const DistortionMeasure& m) {
  if (!m.pointwise()) throw DomainError("norm is a sampling-only measure");
  m.validate();
  if (m.kind == DistortionKind::kCpw) {
    // The bisection inverse needs a monotone map; CPW loses monotonicity for
    // small eta.
    double prev = 0.0;
    for (int i = 1; i <= 4096; ++i) {
      const double v = apply(m, i / 4096.0);
      if (v < prev) throw DomainError("CPW(eta) is not monotone for this eta");
      prev = v;
    }
  }
  std::vector<double> w(n);
  double prev = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    const double cur = detail::preimage_measure(m, static_cast<double>(i) / n);
    w[i - 1] = cur - prev;
    prev = cur;
  }
  return w;
}

inline double distorted_expectation_exact(const ReturnQuantiles& quantiles,
                                          const DistortionMeasure& m) {
  quantiles.validate();
  const auto w = distortion_weights(quantiles.size(), m);
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * quantiles.values[i];
  return s;
}

struct MonteCarloEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

inline MonteCarloEstimate distorted_expectation_mc_estimate(
    const std::function<double(double)>& quantile_fn,
    const DistortionMeasure& m, std::size_t samples, Rng& rng) {
  if (samples == 0) throw DomainError("Monte-Carlo sample count must be >= 1");
  // Welford accumulation.
  double mean = 0.0, m2 = 0.0;
  for (std::size_t k = 0; k < samples; ++k) {
    const double x = quantile_fn(sample_tau(m, rng));
    const double d = x - mean;
    mean += d / static_cast<double>(k + 1);
    m2 += d * (x - mean);
  }
  MonteCarloEstimate est;
  est.mean = mean;
  if (samples > 1) {
    est.standard_error =
        std::sqrt(m2 / static_cast<double>(samples - 1) / static_cast<double>(samples));
  }
  return est;
}

inline double distorted_expectation_mc(
    const std::function<double(double)>& quantile_fn,
    const DistortionMeasure& m, std::size_t samples, Rng& rng) {
  return distorted_expectation_mc_estimate(quantile_fn, m, samples, rng).mean;
}

}  // namespace iqn
