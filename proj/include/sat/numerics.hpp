#pragma once

// Dense 64-bit linear algebra, layer passes, Adam, cosine schedule and a
// counter-based random generator. Everything here is a pure function of its
// arguments; Rng is an explicit value that callers thread through.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sat/errors.hpp"

namespace sat {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("dot: length " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Random numbers

namespace detail {

inline std::uint64_t splitmix_finalize(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// SplitMix64 in counter form: draw i is finalize(key + (i+1)·gamma).
/// Substreams derive a fresh key from (key, label), so streams for
/// different labels never share state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(detail::splitmix_finalize(seed ^ kSeedSalt)) {}

  std::uint64_t next_u64() {
    ++counter_;
    return detail::splitmix_finalize(key_ + counter_ * kGamma);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw UsageError("Rng::below: empty range");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller; consumes two draws per call.
  double normal() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  Rng substream(std::string_view label) const {
    return Rng(FromKey{}, detail::splitmix_finalize(key_ ^ detail::fnv1a(label)));
  }

  Rng substream(std::uint64_t index) const {
    return Rng(FromKey{}, detail::splitmix_finalize((key_ + kGamma * (index + 1)) ^ kIndexSalt));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  struct FromKey {};
  Rng(FromKey, std::uint64_t derived_key) : key_(derived_key) {}

  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
  static constexpr std::uint64_t kSeedSalt = 0x5a7d0c3e91b2f468ULL;
  static constexpr std::uint64_t kIndexSalt = 0x2545f4914f6cdd1dULL;

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

inline Rng seeded_rng(std::uint64_t seed) { return Rng(seed); }

// ---------------------------------------------------------------------------
// Linear layers

enum class Activation { identity, tanh };

struct LinearLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Vec weight;  // row-major [out_dim x in_dim]
  Vec bias;    // [out_dim]

  LinearLayer() = default;
  LinearLayer(std::size_t in, std::size_t out)
      : in_dim(in), out_dim(out), weight(in * out, 0.0), bias(out, 0.0) {}

  double& w(std::size_t row, std::size_t col) { return weight[row * in_dim + col]; }
  double w(std::size_t row, std::size_t col) const { return weight[row * in_dim + col]; }

  friend bool operator==(const LinearLayer&, const LinearLayer&) = default;
};

/// What linear_backward needs from the forward pass.
struct LinearCache {
  Vec input;
  Vec output;  // post-activation
  Activation activation = Activation::identity;
};

struct LinearGrads {
  Vec grad_weight;
  Vec grad_bias;
  Vec grad_input;
};

inline LinearCache linear_forward(const LinearLayer& layer, std::span<const double> input,
                                  Activation activation) {
  if (input.size() != layer.in_dim) {
    throw ShapeError("linear_forward: expected input of length " + std::to_string(layer.in_dim) +
                     ", got " + std::to_string(input.size()));
  }
  LinearCache cache;
  cache.input.assign(input.begin(), input.end());
  cache.activation = activation;
  cache.output.resize(layer.out_dim);
  for (std::size_t r = 0; r < layer.out_dim; ++r) {
    const double* row = layer.weight.data() + r * layer.in_dim;
    double acc = layer.bias[r];
    for (std::size_t c = 0; c < layer.in_dim; ++c) acc += row[c] * input[c];
    cache.output[r] = activation == Activation::tanh ? std::tanh(acc) : acc;
  }
  return cache;
}

/// Backward pass that adds dW, db into `accum` (same shape as the layer) and
/// returns the gradient with respect to the layer input.
inline Vec linear_backward_accumulate(const LinearLayer& layer, const LinearCache& cache,
                                      std::span<const double> grad_output, LinearLayer& accum,
                                      double scale = 1.0) {
  if (grad_output.size() != layer.out_dim || cache.output.size() != layer.out_dim ||
      cache.input.size() != layer.in_dim) {
    throw ShapeError("linear_backward: gradient of length " + std::to_string(grad_output.size()) +
                     " does not match layer " + std::to_string(layer.out_dim) + "x" +
                     std::to_string(layer.in_dim));
  }
  if (accum.in_dim != layer.in_dim || accum.out_dim != layer.out_dim) {
    throw ShapeError("linear_backward: accumulator shape mismatch");
  }
  Vec grad_input(layer.in_dim, 0.0);
  for (std::size_t r = 0; r < layer.out_dim; ++r) {
    double g = grad_output[r];
    if (cache.activation == Activation::tanh) g *= 1.0 - cache.output[r] * cache.output[r];
    if (g == 0.0) continue;
    const double gs = g * scale;
    accum.bias[r] += gs;
    const double* row = layer.weight.data() + r * layer.in_dim;
    double* grow = accum.weight.data() + r * layer.in_dim;
    for (std::size_t c = 0; c < layer.in_dim; ++c) {
      grow[c] += gs * cache.input[c];
      grad_input[c] += g * row[c];
    }
  }
  return grad_input;
}

inline LinearGrads linear_backward(const LinearLayer& layer, const LinearCache& cache,
                                   std::span<const double> grad_output) {
  LinearLayer accum(layer.in_dim, layer.out_dim);
  Vec grad_input = linear_backward_accumulate(layer, cache, grad_output, accum);
  return {std::move(accum.weight), std::move(accum.bias), std::move(grad_input)};
}

// ---------------------------------------------------------------------------
// Optimization

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

struct AdamState {
  AdamConfig config;
  std::vector<Vec> first_moment;
  std::vector<Vec> second_moment;
  std::uint64_t step_count = 0;

  explicit AdamState(AdamConfig cfg = {}) : config(cfg) {}
};

/// One named parameter block and its gradient.
struct ParamBlock {
  std::string name;
  std::span<double> values;
  std::span<const double> grads;
};

/// Adam with bias correction. Weight decay is decoupled: every parameter is
/// first scaled by (1 - lr·weight_decay), then the Adam delta is applied.
/// Moments are allocated on the first call; later calls must present the
/// same block shapes.
inline void adam_step(std::span<const ParamBlock> blocks, AdamState& state, double lr) {
  if (!(lr > 0.0)) throw UsageError("adam_step: lr must be > 0");
  for (const auto& b : blocks) {
    if (b.values.size() != b.grads.size()) {
      throw ShapeError("adam_step: block '" + b.name + "' has " + std::to_string(b.values.size()) +
                       " params but " + std::to_string(b.grads.size()) + " grads");
    }
    if (!all_finite(b.grads)) {
      throw NumericError("adam_step: non-finite gradient in block '" + b.name + "'");
    }
  }
  if (state.step_count == 0 && state.first_moment.empty()) {
    for (const auto& b : blocks) {
      state.first_moment.emplace_back(b.values.size(), 0.0);
      state.second_moment.emplace_back(b.values.size(), 0.0);
    }
  }
  if (state.first_moment.size() != blocks.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                     " blocks, got " + std::to_string(blocks.size()));
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (state.first_moment[i].size() != blocks[i].values.size()) {
      throw ShapeError("adam_step: state shape mismatch for block '" + blocks[i].name + "'");
    }
  }

  const auto& cfg = state.config;
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - lr * cfg.weight_decay;

  for (std::size_t i = 0; i < blocks.size(); ++i) {
    auto values = blocks[i].values;
    auto grads = blocks[i].grads;
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grads[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      values[j] = values[j] * decay - lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

/// Cosine annealing without warmup. Steps past the end clamp to lr_min.
inline double cosine_lr(long long step, long long total_steps, double lr_init, double lr_min) {
  if (total_steps < 1) throw UsageError("cosine_lr: total_steps must be >= 1");
  if (step < 0) throw UsageError("cosine_lr: step must be >= 0");
  if (!(lr_init >= lr_min && lr_min >= 0.0)) {
    throw UsageError("cosine_lr: require lr_init >= lr_min >= 0");
  }
  if (step >= total_steps) return lr_min;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr_init - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

/// Central-difference gradient estimate, one coordinate at a time.
inline Vec finite_diff_grad(const std::function<double(std::span<const double>)>& loss_fn,
                            std::span<const double> params, double h) {
  if (!(h > 0.0)) throw UsageError("finite_diff_grad: h must be > 0");
  Vec theta(params.begin(), params.end());
  Vec grad(theta.size(), 0.0);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double orig = theta[i];
    theta[i] = orig + h;
    const double up = loss_fn(theta);
    theta[i] = orig - h;
    const double down = loss_fn(theta);
    theta[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor). The floor keeps
/// near-zero coordinates from dominating through cancellation noise.
inline double max_relative_error(std::span<const double> a, std::span<const double> b,
                                 double floor = 1e-6) {
  if (a.size() != b.size()) throw ShapeError("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace sat
