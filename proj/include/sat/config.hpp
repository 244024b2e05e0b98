#pragma once

// Flat key=value run configuration shared by every CLI subcommand.
//
//   # comment
//   steps=3000
//   attrs_text_only=0,1
//
// Keys are checked against a fixed schema; unknown keys are rejected.
// `seed` drives data generation and (for `train`) model initialization and
// shuffling; `ablate_seeds` lists the training seeds of the ablation grid.

#include <cstdint>
#include <functional>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "sat/data.hpp"
#include "sat/errors.hpp"
#include "sat/format.hpp"
#include "sat/model.hpp"
#include "sat/train.hpp"

namespace sat {

struct RunConfig {
  std::uint64_t seed = 0;
  GenConfig gen;
  std::size_t n_pos = 8000;
  std::size_t n_neg = 8000;
  double hard_fraction = 0.8;
  double split_ratio = kDefaultSplitRatio;
  TrainConfig train;
  std::vector<std::uint64_t> ablate_seeds{1, 2, 3};

  /// Generator settings with the run seed applied.
  GenConfig gen_config() const {
    GenConfig g = gen;
    g.seed = seed;
    return g;
  }

  /// Training settings for a dataset of the given feature dimensions.
  TrainConfig train_config(std::size_t text_vocab, std::size_t image_dim) const {
    TrainConfig t = train;
    t.seed = seed;
    t.model.text_vocab = text_vocab;
    t.model.image_dim = image_dim;
    return t;
  }
};

namespace detail {

template <typename T>
std::string join_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

template <typename T>
std::vector<T> parse_list(std::string_view s) {
  std::vector<T> out;
  if (s.empty()) return out;
  for (;;) {
    const auto comma = s.find(',');
    out.push_back(parse_int<T>(s.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct KeySpec {
  std::string_view key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SAT_SIZE_KEY(name, field)                                                     \
  KeySpec {                                                                           \
    name, [](RunConfig& c, std::string_view v) { c.field = parse_int<std::size_t>(v); }, \
        [](const RunConfig& c) { return std::to_string(c.field); }                    \
  }
#define SAT_LL_KEY(name, field)                                                     \
  KeySpec {                                                                         \
    name, [](RunConfig& c, std::string_view v) { c.field = parse_int<long long>(v); }, \
        [](const RunConfig& c) { return std::to_string(c.field); }                  \
  }
#define SAT_DOUBLE_KEY(name, field)                                              \
  KeySpec {                                                                      \
    name, [](RunConfig& c, std::string_view v) { c.field = parse_double(v); },   \
        [](const RunConfig& c) { return format_double(c.field); }                \
  }

inline const std::vector<KeySpec>& config_schema() {
  static const std::vector<KeySpec> schema = {
      {"seed", [](RunConfig& c, std::string_view v) { c.seed = parse_int<std::uint64_t>(v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      SAT_SIZE_KEY("n_products", gen.n_products),
      SAT_SIZE_KEY("variants_per_product", gen.variants_per_product),
      SAT_SIZE_KEY("categories", gen.categories),
      SAT_SIZE_KEY("key_attrs", gen.key_attrs),
      SAT_SIZE_KEY("values_per_attr", gen.values_per_attr),
      {"attrs_text_only",
       [](RunConfig& c, std::string_view v) { c.gen.attrs_text_only = parse_list<std::size_t>(v); },
       [](const RunConfig& c) { return join_list(c.gen.attrs_text_only); }},
      {"attrs_image_only",
       [](RunConfig& c, std::string_view v) { c.gen.attrs_image_only = parse_list<std::size_t>(v); },
       [](const RunConfig& c) { return join_list(c.gen.attrs_image_only); }},
      SAT_SIZE_KEY("image_dim", gen.image_dim),
      SAT_SIZE_KEY("filler_vocab", gen.filler_vocab),
      SAT_SIZE_KEY("filler_tokens", gen.filler_tokens),
      SAT_DOUBLE_KEY("noise_sigma", gen.noise_sigma),
      SAT_DOUBLE_KEY("category_scale_spread", gen.category_scale_spread),
      SAT_DOUBLE_KEY("sibling_fraction", gen.sibling_fraction),
      SAT_SIZE_KEY("n_pos", n_pos),
      SAT_SIZE_KEY("n_neg", n_neg),
      SAT_DOUBLE_KEY("hard_fraction", hard_fraction),
      SAT_DOUBLE_KEY("split_ratio", split_ratio),
      SAT_SIZE_KEY("d1", train.model.d1),
      SAT_SIZE_KEY("d2", train.model.d2),
      SAT_SIZE_KEY("hidden_dim", train.model.hidden_dim),
      {"modality", [](RunConfig& c, std::string_view v) { c.train.model.modality = parse_modality(v); },
       [](const RunConfig& c) { return std::string(to_string(c.train.model.modality)); }},
      {"variant", [](RunConfig& c, std::string_view v) { c.train.model.variant = parse_variant(v); },
       [](const RunConfig& c) { return std::string(to_string(c.train.model.variant)); }},
      SAT_DOUBLE_KEY("fixed_threshold", train.model.fixed_threshold),
      SAT_LL_KEY("steps", train.steps),
      SAT_SIZE_KEY("batch_size", train.batch_size),
      SAT_DOUBLE_KEY("lr_init", train.lr_init),
      SAT_DOUBLE_KEY("lr_min", train.lr_min),
      SAT_DOUBLE_KEY("weight_decay", train.weight_decay),
      SAT_DOUBLE_KEY("beta1", train.beta1),
      SAT_DOUBLE_KEY("beta2", train.beta2),
      SAT_DOUBLE_KEY("adam_eps", train.adam_eps),
      SAT_LL_KEY("eval_every", train.eval_every),
      {"ablate_seeds",
       [](RunConfig& c, std::string_view v) { c.ablate_seeds = parse_list<std::uint64_t>(v); },
       [](const RunConfig& c) { return join_list(c.ablate_seeds); }},
  };
  return schema;
}

#undef SAT_SIZE_KEY
#undef SAT_LL_KEY
#undef SAT_DOUBLE_KEY

}  // namespace detail

/// Applies one key=value assignment. Unknown keys and unparsable values
/// raise UsageError.
inline void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& entry : detail::config_schema()) {
    if (entry.key == key) {
      try {
        entry.set(cfg, value);
      } catch (const UsageError& e) {
        throw UsageError("config key '" + std::string(key) + "': " + e.what());
      }
      return;
    }
  }
  throw UsageError("unknown config key '" + std::string(key) + "'");
}

/// Applies "key=value".
inline void apply_assignment(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw UsageError("expected key=value, got '" + std::string(assignment) + "'");
  }
  set_config_value(cfg, detail::trim(assignment.substr(0, eq)),
                   detail::trim(assignment.substr(eq + 1)));
}

/// Reads assignments on top of `base`. Errors carry the line number.
inline RunConfig parse_config(std::istream& in, RunConfig base = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view(line);
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = detail::trim(view);
    if (view.empty()) continue;
    try {
      apply_assignment(base, view);
    } catch (const UsageError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
  auto in = open_input(path);
  return parse_config(in, std::move(base));
}

/// Every key in schema order. Parsing the output reproduces `cfg`.
inline void write_config(std::ostream& out, const RunConfig& cfg) {
  for (const auto& entry : detail::config_schema()) out << entry.key << '=' << entry.get(cfg) << '\n';
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& entry : detail::config_schema()) keys.emplace_back(entry.key);
  return keys;
}

}  // namespace sat
