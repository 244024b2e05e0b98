#pragma once

// Dual-stream verification model. A commodity stream produces p, a threshold
// stream produces q; a pair scores s - t with s = p1·p2 and t = q1·q2.
// Two reduced variants share the code path: `lt` replaces t with one learned
// scalar and `baseline` with a frozen constant.

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sat/commodity.hpp"
#include "sat/errors.hpp"
#include "sat/numerics.hpp"

namespace sat {

enum class Variant { baseline, lt, sat };
enum class Modality { text, image, both };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::lt: return "lt";
    case Variant::sat: return "sat";
  }
  return "?";
}

inline std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::text: return "text";
    case Modality::image: return "image";
    case Modality::both: return "both";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "baseline") return Variant::baseline;
  if (s == "lt") return Variant::lt;
  if (s == "sat") return Variant::sat;
  throw UsageError("unknown variant '" + std::string(s) + "' (expected baseline, lt or sat)");
}

inline Modality parse_modality(std::string_view s) {
  if (s == "text") return Modality::text;
  if (s == "image") return Modality::image;
  if (s == "both") return Modality::both;
  throw UsageError("unknown modality '" + std::string(s) + "' (expected text, image or both)");
}

inline bool uses_text(Modality m) { return m != Modality::image; }
inline bool uses_image(Modality m) { return m != Modality::text; }

struct ModelConfig {
  std::size_t d1 = 32;
  std::size_t d2 = 32;
  std::size_t text_vocab = 0;
  std::size_t image_dim = 0;
  std::size_t hidden_dim = 32;
  Modality modality = Modality::both;
  Variant variant = Variant::sat;
  double fixed_threshold = 0.0;

  /// Threshold-embedding length actually produced (0 unless sat).
  std::size_t effective_d2() const { return variant == Variant::sat ? d2 : 0; }

  void validate() const {
    if (d1 < 1) throw UsageError("model: d1 must be >= 1");
    if (variant == Variant::sat && d2 < 1) throw UsageError("model: d2 must be >= 1");
    if (hidden_dim < 1) throw UsageError("model: hidden_dim must be >= 1");
    if (uses_text(modality) && text_vocab < 1) throw UsageError("model: text_vocab must be >= 1");
    if (uses_image(modality) && image_dim < 1) throw UsageError("model: image_dim must be >= 1");
    if (!std::isfinite(fixed_threshold)) throw UsageError("model: fixed_threshold must be finite");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// linear-tanh-linear per modality.
struct Encoder {
  LinearLayer hidden;
  LinearLayer out;

  friend bool operator==(const Encoder&, const Encoder&) = default;
};

struct StreamParams {
  std::optional<Encoder> text;
  std::optional<Encoder> image;
  LinearLayer fusion;  // concat of present modality embeddings -> stream output

  friend bool operator==(const StreamParams&, const StreamParams&) = default;
};

struct ModelParams {
  ModelConfig config;
  StreamParams commodity;
  std::optional<StreamParams> threshold;  // sat only
  double scalar_threshold = 0.0;          // lt: learned; baseline: fixed_threshold

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct EmbeddingPair {
  Vec p;
  Vec q;  // empty for baseline and lt
};

struct ScoreParts {
  double s = 0.0;
  double t = 0.0;
  double score = 0.0;
};

enum class Decision { different, identical };

// ---------------------------------------------------------------------------
// Construction

namespace detail {

inline StreamParams make_stream(const ModelConfig& cfg, std::size_t out_dim) {
  StreamParams sp;
  std::size_t fused = 0;
  if (uses_text(cfg.modality)) {
    sp.text = Encoder{LinearLayer(cfg.text_vocab, cfg.hidden_dim),
                      LinearLayer(cfg.hidden_dim, cfg.hidden_dim)};
    fused += cfg.hidden_dim;
  }
  if (uses_image(cfg.modality)) {
    sp.image = Encoder{LinearLayer(cfg.image_dim, cfg.hidden_dim),
                       LinearLayer(cfg.hidden_dim, cfg.hidden_dim)};
    fused += cfg.hidden_dim;
  }
  sp.fusion = LinearLayer(fused, out_dim);
  return sp;
}

inline void xavier_fill(LinearLayer& layer, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(layer.in_dim + layer.out_dim));
  for (double& w : layer.weight) w = rng.uniform(-a, a);
  std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
}

template <typename Stream, typename Fn>
void for_each_stream_block(Stream& sp, const std::string& prefix, Fn&& fn) {
  auto layer = [&](auto& l, const std::string& name) {
    fn(prefix + name + ".weight", std::span(l.weight));
    fn(prefix + name + ".bias", std::span(l.bias));
  };
  if (sp.text) {
    layer(sp.text->hidden, "text.hidden");
    layer(sp.text->out, "text.out");
  }
  if (sp.image) {
    layer(sp.image->hidden, "image.hidden");
    layer(sp.image->out, "image.out");
  }
  layer(sp.fusion, "fusion");
}

}  // namespace detail

/// Parameters with every weight and bias zeroed; the shape template for
/// gradient accumulators.
inline ModelParams zero_model(const ModelConfig& config) {
  config.validate();
  ModelParams mp;
  mp.config = config;
  mp.commodity = detail::make_stream(config, config.d1);
  if (config.variant == Variant::sat) mp.threshold = detail::make_stream(config, config.d2);
  mp.scalar_threshold = config.variant == Variant::baseline ? config.fixed_threshold : 0.0;
  return mp;
}

/// Xavier-uniform weights, zero biases, scalar threshold at 0 (baseline:
/// the configured fixed threshold).
inline ModelParams init_model(const ModelConfig& config, Rng rng) {
  ModelParams mp = zero_model(config);
  auto fill_stream = [&](StreamParams& sp) {
    if (sp.text) {
      detail::xavier_fill(sp.text->hidden, rng);
      detail::xavier_fill(sp.text->out, rng);
    }
    if (sp.image) {
      detail::xavier_fill(sp.image->hidden, rng);
      detail::xavier_fill(sp.image->out, rng);
    }
    detail::xavier_fill(sp.fusion, rng);
  };
  fill_stream(mp.commodity);
  if (mp.threshold) fill_stream(*mp.threshold);
  return mp;
}

/// Visits every named parameter block in a fixed order. The scalar
/// threshold is always the last block, named "scalar_threshold".
template <typename Params, typename Fn>
void for_each_block(Params& mp, Fn&& fn) {
  detail::for_each_stream_block(mp.commodity, "commodity.", fn);
  if (mp.threshold) detail::for_each_stream_block(*mp.threshold, "threshold.", fn);
  fn(std::string("scalar_threshold"), std::span(&mp.scalar_threshold, 1));
}

/// Blocks that receive optimizer updates (baseline's threshold is frozen).
inline bool is_trainable(const ModelConfig& cfg, std::string_view block) {
  return !(block == "scalar_threshold" && cfg.variant != Variant::lt);
}

inline std::size_t parameter_count(const ModelParams& mp) {
  std::size_t n = 0;
  for_each_block(mp, [&](const std::string&, auto values) { n += values.size(); });
  return n;
}

inline Vec flatten(const ModelParams& mp) {
  Vec out;
  for_each_block(mp, [&](const std::string&, auto values) {
    out.insert(out.end(), values.begin(), values.end());
  });
  return out;
}

inline void unflatten(ModelParams& mp, std::span<const double> flat) {
  if (flat.size() != parameter_count(mp)) throw ShapeError("unflatten: length mismatch");
  std::size_t at = 0;
  for_each_block(mp, [&](const std::string&, std::span<double> values) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(at), values.size(), values.begin());
    at += values.size();
  });
}

// ---------------------------------------------------------------------------
// Forward

struct EncoderCache {
  LinearCache hidden;
  LinearCache out;
};

struct StreamCache {
  std::optional<EncoderCache> text;
  std::optional<EncoderCache> image;
  LinearCache fusion;

  const Vec& output() const { return fusion.output; }
};

struct EncodeCache {
  StreamCache commodity;
  std::optional<StreamCache> threshold;

  EmbeddingPair embedding() const {
    return {commodity.output(), threshold ? threshold->output() : Vec{}};
  }
};

namespace detail {

inline Vec text_input(const Commodity& x, std::size_t vocab) {
  if (x.text_tokens.size() != vocab) {
    throw ShapeError("encode: commodity " + std::to_string(x.id) + " has " +
                     std::to_string(x.text_tokens.size()) + " text tokens, model expects " +
                     std::to_string(vocab));
  }
  return Vec(x.text_tokens.begin(), x.text_tokens.end());
}

inline void check_image(const Commodity& x, std::size_t dim) {
  if (x.image_feat.size() != dim) {
    throw ShapeError("encode: commodity " + std::to_string(x.id) + " has image_feat of length " +
                     std::to_string(x.image_feat.size()) + ", model expects " +
                     std::to_string(dim));
  }
}

inline EncoderCache encoder_forward(const Encoder& enc, std::span<const double> input) {
  EncoderCache c;
  c.hidden = linear_forward(enc.hidden, input, Activation::tanh);
  c.out = linear_forward(enc.out, c.hidden.output, Activation::identity);
  return c;
}

inline StreamCache stream_forward(const StreamParams& sp, const ModelConfig& cfg,
                                  const Commodity& x) {
  StreamCache c;
  Vec fused;
  if (sp.text) {
    const Vec in = text_input(x, cfg.text_vocab);
    c.text = encoder_forward(*sp.text, in);
    fused.insert(fused.end(), c.text->out.output.begin(), c.text->out.output.end());
  }
  if (sp.image) {
    check_image(x, cfg.image_dim);
    c.image = encoder_forward(*sp.image, x.image_feat);
    fused.insert(fused.end(), c.image->out.output.begin(), c.image->out.output.end());
  }
  c.fusion = linear_forward(sp.fusion, fused, Activation::identity);
  return c;
}

inline void encoder_backward(const Encoder& enc, const EncoderCache& c,
                             std::span<const double> grad_out, Encoder& accum, double scale) {
  const Vec g_hidden = linear_backward_accumulate(enc.out, c.out, grad_out, accum.out, scale);
  linear_backward_accumulate(enc.hidden, c.hidden, g_hidden, accum.hidden, scale);
}

/// Adds scale·dStream/dθ given the gradient w.r.t. the stream output.
inline void stream_backward(const StreamParams& sp, const StreamCache& c,
                            std::span<const double> grad_out, StreamParams& accum, double scale) {
  const Vec g_fused = linear_backward_accumulate(sp.fusion, c.fusion, grad_out, accum.fusion, scale);
  std::size_t offset = 0;
  if (sp.text) {
    const std::size_t n = sp.text->out.out_dim;
    encoder_backward(*sp.text, *c.text, std::span(g_fused).subspan(offset, n), *accum.text, scale);
    offset += n;
  }
  if (sp.image) {
    const std::size_t n = sp.image->out.out_dim;
    encoder_backward(*sp.image, *c.image, std::span(g_fused).subspan(offset, n), *accum.image,
                     scale);
  }
}

}  // namespace detail

inline EncodeCache encode_with_cache(const ModelParams& mp, const Commodity& x) {
  EncodeCache c;
  c.commodity = detail::stream_forward(mp.commodity, mp.config, x);
  if (mp.threshold) c.threshold = detail::stream_forward(*mp.threshold, mp.config, x);
  return c;
}

/// p = f(x), q = g(x). Features of an unused modality are ignored.
inline EmbeddingPair encode(const ModelParams& mp, const Commodity& x) {
  return encode_with_cache(mp, x).embedding();
}

/// z = [p, q].
inline Vec concat_embedding(const EmbeddingPair& e) {
  Vec z;
  z.reserve(e.p.size() + e.q.size());
  z.insert(z.end(), e.p.begin(), e.p.end());
  z.insert(z.end(), e.q.begin(), e.q.end());
  return z;
}

inline ScoreParts score_pair(const EmbeddingPair& e1, const EmbeddingPair& e2,
                             const ModelParams& mp) {
  const auto& cfg = mp.config;
  if (e1.p.size() != cfg.d1 || e2.p.size() != cfg.d1) {
    throw ShapeError("score_pair: commodity embeddings must have length d1=" +
                     std::to_string(cfg.d1));
  }
  ScoreParts parts;
  parts.s = dot(e1.p, e2.p);
  switch (cfg.variant) {
    case Variant::sat:
      if (e1.q.size() != cfg.d2 || e2.q.size() != cfg.d2) {
        throw ShapeError("score_pair: threshold embeddings must have length d2=" +
                         std::to_string(cfg.d2));
      }
      parts.t = dot(e1.q, e2.q);
      break;
    case Variant::lt:
      parts.t = mp.scalar_threshold;
      break;
    case Variant::baseline:
      parts.t = cfg.fixed_threshold;
      break;
  }
  parts.score = parts.s - parts.t;
  return parts;
}

/// Identical iff score > 0; a score of exactly 0 is "different".
inline Decision predict(const ScoreParts& parts) {
  return parts.score > 0.0 ? Decision::identical : Decision::different;
}

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Two-way cross entropy over (exp s, exp t), in logistic form.
inline double pair_loss(const ScoreParts& parts, int y) {
  const double margin = parts.s - parts.t;
  return y == 1 ? softplus(-margin) : softplus(margin);
}

struct LossGrad {
  double d_s = 0.0;
  double d_t = 0.0;
};

inline LossGrad loss_grad(const ScoreParts& parts, int y) {
  const double d_s = sigmoid(parts.s - parts.t) - static_cast<double>(y);
  return {d_s, -d_s};
}

// ---------------------------------------------------------------------------
// Batched training objective

struct PairRef {
  const Commodity* a = nullptr;
  const Commodity* b = nullptr;
  int y = 0;
};

struct BatchResult {
  double mean_loss = 0.0;
  ModelParams grads;
};

/// Mean pair loss over the batch and its exact gradient. Pairs are processed
/// and reduced in index order, so results are bit-stable.
inline BatchResult batch_forward_backward(const ModelParams& mp, std::span<const PairRef> batch) {
  if (batch.empty()) throw UsageError("batch_forward_backward: empty batch");
  BatchResult out{0.0, zero_model(mp.config)};
  out.grads.scalar_threshold = 0.0;
  const double scale = 1.0 / static_cast<double>(batch.size());

  double loss_sum = 0.0;
  for (const auto& pair : batch) {
    const EncodeCache c1 = encode_with_cache(mp, *pair.a);
    const EncodeCache c2 = encode_with_cache(mp, *pair.b);
    const EmbeddingPair e1 = c1.embedding();
    const EmbeddingPair e2 = c2.embedding();
    const ScoreParts parts = score_pair(e1, e2, mp);
    loss_sum += pair_loss(parts, pair.y);
    const LossGrad g = loss_grad(parts, pair.y);

    // ds/dp1 = p2, ds/dp2 = p1 (and likewise for t and q).
    Vec gp1(e2.p), gp2(e1.p);
    for (double& v : gp1) v *= g.d_s;
    for (double& v : gp2) v *= g.d_s;
    detail::stream_backward(mp.commodity, c1.commodity, gp1, out.grads.commodity, scale);
    detail::stream_backward(mp.commodity, c2.commodity, gp2, out.grads.commodity, scale);

    switch (mp.config.variant) {
      case Variant::sat: {
        Vec gq1(e2.q), gq2(e1.q);
        for (double& v : gq1) v *= g.d_t;
        for (double& v : gq2) v *= g.d_t;
        detail::stream_backward(*mp.threshold, *c1.threshold, gq1, *out.grads.threshold, scale);
        detail::stream_backward(*mp.threshold, *c2.threshold, gq2, *out.grads.threshold, scale);
        break;
      }
      case Variant::lt:
        out.grads.scalar_threshold += g.d_t * scale;
        break;
      case Variant::baseline:
        break;
    }
  }
  out.mean_loss = loss_sum * scale;
  return out;
}

/// Mean loss only; the objective the finite-difference oracle probes.
inline double batch_loss(const ModelParams& mp, std::span<const PairRef> batch) {
  if (batch.empty()) throw UsageError("batch_loss: empty batch");
  double sum = 0.0;
  for (const auto& pair : batch) {
    const ScoreParts parts = score_pair(encode(mp, *pair.a), encode(mp, *pair.b), mp);
    sum += pair_loss(parts, pair.y);
  }
  return sum / static_cast<double>(batch.size());
}

}  // namespace sat
