#pragma once

// Dense layers with hand-written backprop, softmax helpers and Adam/SGD.
// Everything is double precision.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uavmarl/error.hpp"
#include "uavmarl/rng.hpp"

namespace uavmarl {

enum class Activation { Tanh, ReLU, Identity };

inline std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::Tanh: return "tanh";
    case Activation::ReLU: return "relu";
    case Activation::Identity: return "identity";
  }
  return "tanh";
}

// Row-major values with a gradient buffer of identical shape. A vector is
// stored as rows = len, cols = 1.
struct ParamTensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<double> grad;

  ParamTensor() = default;
  ParamTensor(std::string tensor_name, std::size_t r, std::size_t c)
      : name(std::move(tensor_name)), rows(r), cols(c), values(r * c, 0.0), grad(r * c, 0.0) {}

  std::size_t size() const { return values.size(); }
  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

  bool all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
  }
};

struct DenseLayer {
  ParamTensor weight;  // out x in
  ParamTensor bias;    // out
  Activation activation = Activation::Tanh;

  std::size_t in_dim() const { return weight.cols; }
  std::size_t out_dim() const { return weight.rows; }
};

// Glorot-uniform weights, zero bias.
inline void glorot_init(ParamTensor& w, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(w.rows + w.cols));
  for (double& v : w.values) v = rng.uniform(-limit, limit);
}

inline DenseLayer make_dense(const std::string& name, std::size_t in, std::size_t out,
                             Activation act, Rng& rng) {
  DenseLayer layer{ParamTensor(name + ".weight", out, in), ParamTensor(name + ".bias", out, 1), act};
  glorot_init(layer.weight, rng);
  return layer;
}

namespace kernel {

// y += W x
inline void matvec_acc(const ParamTensor& w, std::span<const double> x, std::span<double> y) {
  const std::size_t in = w.cols;
  const double* row = w.values.data();
  for (std::size_t r = 0; r < w.rows; ++r, row += in) {
    double acc = y[r];
    for (std::size_t k = 0; k < in; ++k) acc += row[k] * x[k];
    y[r] = acc;
  }
}

// dx += W^T dy
inline void matvec_t_acc(const ParamTensor& w, std::span<const double> dy, std::span<double> dx) {
  const std::size_t in = w.cols;
  const double* row = w.values.data();
  for (std::size_t r = 0; r < w.rows; ++r, row += in) {
    const double g = dy[r];
    if (g == 0.0) continue;
    for (std::size_t k = 0; k < in; ++k) dx[k] += row[k] * g;
  }
}

// dW += dy x^T
inline void outer_acc(ParamTensor& w, std::span<const double> dy, std::span<const double> x) {
  const std::size_t in = w.cols;
  double* row = w.grad.data();
  for (std::size_t r = 0; r < w.rows; ++r, row += in) {
    const double g = dy[r];
    if (g == 0.0) continue;
    for (std::size_t k = 0; k < in; ++k) row[k] += g * x[k];
  }
}

inline void activate(Activation act, std::span<double> v) {
  switch (act) {
    case Activation::Tanh:
      for (double& x : v) x = std::tanh(x);
      break;
    case Activation::ReLU:
      for (double& x : v) x = x > 0.0 ? x : 0.0;
      break;
    case Activation::Identity: break;
  }
}

// In place: dy <- dy * act'(.), using the activation output y.
inline void activation_backward(Activation act, std::span<const double> y, std::span<double> dy) {
  switch (act) {
    case Activation::Tanh:
      for (std::size_t k = 0; k < dy.size(); ++k) dy[k] *= 1.0 - y[k] * y[k];
      break;
    case Activation::ReLU:
      for (std::size_t k = 0; k < dy.size(); ++k) dy[k] = y[k] > 0.0 ? dy[k] : 0.0;
      break;
    case Activation::Identity: break;
  }
}

}  // namespace kernel

struct LayerCache {
  std::vector<double> input;
  std::vector<double> pre;
  std::vector<double> output;
};

struct ForwardResult {
  std::vector<double> y;
  LayerCache cache;
};

inline ForwardResult forward(const DenseLayer& layer, std::span<const double> x) {
  if (x.size() != layer.in_dim()) {
    throw ArityError("dense forward: input has " + std::to_string(x.size()) + " entries, layer expects " +
                     std::to_string(layer.in_dim()));
  }
  ForwardResult out;
  out.cache.input.assign(x.begin(), x.end());
  out.cache.pre = layer.bias.values;
  kernel::matvec_acc(layer.weight, x, out.cache.pre);
  out.y = out.cache.pre;
  kernel::activate(layer.activation, out.y);
  out.cache.output = out.y;
  return out;
}

// Accumulates dL/dW and dL/db into the layer's grads; returns dL/dx.
inline std::vector<double> backward(DenseLayer& layer, const LayerCache& cache, std::span<const double> dy) {
  if (dy.size() != layer.out_dim() || cache.input.size() != layer.in_dim() ||
      cache.output.size() != layer.out_dim()) {
    throw ArityError("dense backward: cotangent or cache shape does not match layer " + layer.weight.name);
  }
  std::vector<double> da(dy.begin(), dy.end());
  kernel::activation_backward(layer.activation, cache.output, da);
  kernel::outer_acc(layer.weight, da, cache.input);
  for (std::size_t r = 0; r < da.size(); ++r) layer.bias.grad[r] += da[r];
  std::vector<double> dx(layer.in_dim(), 0.0);
  kernel::matvec_t_acc(layer.weight, da, dx);
  return dx;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

inline std::vector<double> log_softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const double mx = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (double v : out) sum += std::exp(v - mx);
  const double log_z = mx + std::log(sum);
  for (double& v : out) v -= log_z;
  return out;
}

enum class OptimizerKind { Adam, Sgd };

inline std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::Adam ? "adam" : "sgd";
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

// Adam with bias correction, or plain SGD. Moment buffers are bound to the
// parameter list on the first step; later calls must pass the same list.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config = {}) : config_(config) {}

  const OptimizerConfig& config() const { return config_; }
  long steps() const { return steps_; }

  void step(std::span<ParamTensor* const> params) {
    if (first_moment_.empty()) {
      for (const ParamTensor* p : params) {
        first_moment_.emplace_back(p->size(), 0.0);
        second_moment_.emplace_back(p->size(), 0.0);
      }
    }
    if (first_moment_.size() != params.size()) {
      throw ArityError("optimizer step: parameter list changed between steps");
    }
    ++steps_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      ParamTensor& p = *params[k];
      if (p.size() != first_moment_[k].size()) {
        throw ArityError("optimizer step: moment shape mismatch for " + p.name);
      }
      if (config_.kind == OptimizerKind::Sgd) {
        for (std::size_t e = 0; e < p.size(); ++e) p.values[e] -= config_.lr * p.grad[e];
      } else {
        auto& m = first_moment_[k];
        auto& v = second_moment_[k];
        for (std::size_t e = 0; e < p.size(); ++e) {
          const double g = p.grad[e];
          m[e] = config_.beta1 * m[e] + (1.0 - config_.beta1) * g;
          v[e] = config_.beta2 * v[e] + (1.0 - config_.beta2) * g * g;
          const double m_hat = m[e] / bc1;
          const double v_hat = v[e] / bc2;
          p.values[e] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
        }
      }
      p.zero_grad();
    }
  }

  const std::vector<std::vector<double>>& first_moments() const { return first_moment_; }
  const std::vector<std::vector<double>>& second_moments() const { return second_moment_; }

 private:
  OptimizerConfig config_;
  long steps_ = 0;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
};

}  // namespace uavmarl
