#pragma once

// Feedforward binary classifier with a flat parameter vector.
//
// Parameter layout, layer by layer: weights row-major [out][in], then biases
// [out]. The last layer has a single output unit whose value is the logit of
// p(y = 1 | x).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mural/rng.hpp"

namespace mural::net {

enum class Activation { relu };

struct MlpArchitecture {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_sizes;
  Activation activation = Activation::relu;

  bool operator==(const MlpArchitecture&) const = default;

  void validate() const {
    if (input_dim == 0) throw std::invalid_argument("mlp: input_dim must be >= 1");
    for (std::size_t h : hidden_sizes)
      if (h == 0) throw std::invalid_argument("mlp: hidden layer size must be >= 1");
  }

  /// Widths of every layer including input and the single output unit.
  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w;
    w.reserve(hidden_sizes.size() + 2);
    w.push_back(input_dim);
    w.insert(w.end(), hidden_sizes.begin(), hidden_sizes.end());
    w.push_back(1);
    return w;
  }

  std::size_t parameter_count() const {
    auto w = widths();
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) n += w[l] * w[l + 1] + w[l + 1];
    return n;
  }

  std::size_t max_width() const {
    auto w = widths();
    return *std::max_element(w.begin(), w.end());
  }
};

struct MlpModel {
  MlpArchitecture arch;
  std::vector<double> params;
  std::uint64_t seed = 0;

  bool operator==(const MlpModel&) const = default;
};

/// He-normal weights for hidden layers, 1/fan_in variance for the output
/// layer, zero biases.
inline MlpModel init_model(const MlpArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  MlpModel m{arch, std::vector<double>(arch.parameter_count(), 0.0), seed};
  Rng rng(stream_seed(seed, "mlp-init"));
  std::normal_distribution<double> normal(0.0, 1.0);
  auto w = arch.widths();
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const std::size_t in = w[l], out = w[l + 1];
    const bool last = (l + 2 == w.size());
    const double scale = std::sqrt((last ? 1.0 : 2.0) / static_cast<double>(in));
    for (std::size_t i = 0; i < in * out; ++i) m.params[off + i] = scale * normal(rng);
    off += in * out + out;
  }
  return m;
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline constexpr double kProbClamp = 1e-7;

/// One training example; y may be fractional (mixup) but lies in [0, 1].
struct Sample {
  std::span<const double> x;
  double y = 0.0;
  double w = 1.0;
};

namespace detail {

inline void check_input(const MlpModel& m, std::span<const double> x) {
  if (x.size() != m.arch.input_dim)
    throw std::invalid_argument("mlp: input has " + std::to_string(x.size()) +
                                " features, model expects " +
                                std::to_string(m.arch.input_dim));
}

inline void check_sample(const MlpModel& m, const Sample& s) {
  check_input(m, s.x);
  if (!(s.y >= 0.0 && s.y <= 1.0)) throw std::invalid_argument("mlp: label outside [0, 1]");
  if (!(s.w >= 0.0)) throw std::invalid_argument("mlp: negative sample weight");
}

// Scratch buffers for one forward/backward pass.
struct Workspace {
  std::vector<std::size_t> widths;
  std::vector<std::size_t> offsets;       // parameter offset of each layer
  std::vector<std::vector<double>> acts;  // post-activation values per layer
  std::vector<double> delta, next_delta;

  explicit Workspace(const MlpArchitecture& arch) : widths(arch.widths()) {
    const auto& w = widths;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
      offsets.push_back(off);
      off += w[l] * w[l + 1] + w[l + 1];
    }
    acts.resize(w.size());
    for (std::size_t l = 0; l < w.size(); ++l) acts[l].resize(w[l]);
    delta.resize(arch.max_width());
    next_delta.resize(arch.max_width());
  }
};

// Returns the logit; fills ws.acts (acts[0] = x, hidden acts post-ReLU).
inline double forward_pass(const MlpModel& m, std::span<const double> x, Workspace& ws) {
  const auto& w = ws.widths;
  std::copy(x.begin(), x.end(), ws.acts[0].begin());
  const double* p = m.params.data();
  const std::size_t layers = w.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = w[l], out = w[l + 1];
    const double* W = p;
    const double* b = p + in * out;
    const double* a = ws.acts[l].data();
    double* z = ws.acts[l + 1].data();
    const bool last = (l + 1 == layers);
    for (std::size_t o = 0; o < out; ++o) {
      const double* row = W + o * in;
      double s = b[o];
      for (std::size_t i = 0; i < in; ++i) s += row[i] * a[i];
      z[o] = (last || s > 0.0) ? s : 0.0;
    }
    p += in * out + out;
  }
  return ws.acts[layers][0];
}

// Adds d(loss)/d(params) for one sample given d(loss)/d(logit).
inline void backward_pass(const MlpModel& m, double dlogit, Workspace& ws,
                          std::span<double> grad) {
  const auto& w = ws.widths;
  const auto& offsets = ws.offsets;
  const std::size_t layers = w.size() - 1;
  ws.delta[0] = dlogit;
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = w[l], out = w[l + 1];
    const double* W = m.params.data() + offsets[l];
    double* gW = grad.data() + offsets[l];
    double* gb = gW + in * out;
    const double* a = ws.acts[l].data();
    for (std::size_t o = 0; o < out; ++o) {
      const double d = ws.delta[o];
      if (d == 0.0) continue;
      double* grow = gW + o * in;
      for (std::size_t i = 0; i < in; ++i) grow[i] += d * a[i];
      gb[o] += d;
    }
    if (l == 0) break;
    // Propagate through W and the ReLU of layer l (acts[l] > 0 iff active).
    for (std::size_t i = 0; i < in; ++i) ws.next_delta[i] = 0.0;
    for (std::size_t o = 0; o < out; ++o) {
      const double d = ws.delta[o];
      if (d == 0.0) continue;
      const double* row = W + o * in;
      for (std::size_t i = 0; i < in; ++i) ws.next_delta[i] += d * row[i];
    }
    for (std::size_t i = 0; i < in; ++i)
      ws.delta[i] = a[i] > 0.0 ? ws.next_delta[i] : 0.0;
  }
}

inline double clamped_bce(double p, double y) {
  const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  return -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
}

// d BCE(sigmoid(z), y) / dz. This is the derivative of clamped_bce wherever
// the clamp is inactive; past the clamp it keeps the unclamped value so a
// saturated wrong prediction can still be corrected.
inline double bce_dlogit(double p, double y) { return p - y; }

}  // namespace detail

inline double logit(const MlpModel& m, std::span<const double> x) {
  detail::check_input(m, x);
  detail::Workspace ws(m.arch);
  return detail::forward_pass(m, x, ws);
}

/// p(y = 1 | x), kept inside the open interval (0, 1) even when the
/// sigmoid saturates in double precision.
inline double forward(const MlpModel& m, std::span<const double> x) {
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  return std::clamp(sigmoid(logit(m, x)), lo, hi);
}

/// Sum over the batch of w * BCE(p, y), with p clamped to [1e-7, 1 - 1e-7].
inline double weighted_bce_loss(const MlpModel& m, std::span<const Sample> batch) {
  detail::Workspace ws(m.arch);
  double total = 0.0;
  for (const Sample& s : batch) {
    detail::check_sample(m, s);
    if (s.w == 0.0) continue;
    const double p = sigmoid(detail::forward_pass(m, s.x, ws));
    total += s.w * detail::clamped_bce(p, s.y);
  }
  return total;
}

/// Adds scale * d(weighted_bce_loss)/d(params) into grad and returns
/// scale * loss.
inline double accumulate_gradient(const MlpModel& m, std::span<const Sample> batch,
                                  std::span<double> grad, double scale = 1.0) {
  if (grad.size() != m.params.size())
    throw std::invalid_argument("mlp: gradient buffer has wrong length");
  detail::Workspace ws(m.arch);
  double total = 0.0;
  for (const Sample& s : batch) {
    detail::check_sample(m, s);
    if (s.w == 0.0) continue;
    const double p = sigmoid(detail::forward_pass(m, s.x, ws));
    total += s.w * detail::clamped_bce(p, s.y);
    const double d = scale * s.w * detail::bce_dlogit(p, s.y);
    if (d != 0.0) detail::backward_pass(m, d, ws, grad);
  }
  return scale * total;
}

/// Exact gradient of weighted_bce_loss (see bce_dlogit for the clamped region).
inline std::vector<double> gradient(const MlpModel& m, std::span<const Sample> batch) {
  std::vector<double> g(m.params.size(), 0.0);
  accumulate_gradient(m, batch, g);
  return g;
}

}  // namespace mural::net
