#pragma once

// Training loop, checkpoints and the ablation harness.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "sat/data.hpp"
#include "sat/errors.hpp"
#include "sat/eval.hpp"
#include "sat/format.hpp"
#include "sat/model.hpp"
#include "sat/numerics.hpp"

namespace sat {

inline constexpr int kCheckpointSchemaVersion = 1;

struct TrainConfig {
  long long steps = 3000;
  std::size_t batch_size = 32;
  double lr_init = 3e-3;
  double lr_min = 1e-5;
  double weight_decay = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  long long eval_every = 500;
  std::uint64_t seed = 0;
  ModelConfig model;

  void validate() const {
    if (steps < 1) throw UsageError("train: steps must be >= 1");
    if (batch_size < 1) throw UsageError("train: batch_size must be >= 1");
    if (eval_every < 1) throw UsageError("train: eval_every must be >= 1");
    if (!(lr_init > 0.0 && lr_init >= lr_min && lr_min >= 0.0)) {
      throw UsageError("train: require lr_init > 0 and lr_init >= lr_min >= 0");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
      throw UsageError("train: betas must be in [0, 1)");
    }
    if (!(adam_eps >= 0.0) || !(weight_decay >= 0.0)) {
      throw UsageError("train: adam_eps and weight_decay must be >= 0");
    }
    model.validate();
  }
};

struct EvalRecord {
  long long step = 0;       // updates completed
  double train_loss = 0.0;  // mean batch loss since the previous record
  Metrics val;
  double lr = 0.0;          // rate used by the last update
};

struct TrainHistory {
  std::vector<EvalRecord> records;
  std::vector<double> lr_trace;     // one entry per update
  std::vector<double> loss_trace;   // mean batch loss per update, before the update
};

struct TrainResult {
  ModelParams params;
  TrainHistory history;
};

namespace detail {

/// Parameter/gradient block pairs that the optimizer updates.
inline std::vector<ParamBlock> trainable_blocks(ModelParams& params, const ModelParams& grads) {
  std::vector<ParamBlock> blocks;
  for_each_block(params, [&](const std::string& name, std::span<double> values) {
    blocks.push_back({name, values, {}});
  });
  std::size_t i = 0;
  for_each_block(grads, [&](const std::string&, std::span<const double> g) {
    blocks[i++].grads = g;
  });
  std::erase_if(blocks, [&](const ParamBlock& b) { return !is_trainable(params.config, b.name); });
  return blocks;
}

}  // namespace detail

/// Mini-batch Adam under a cosine schedule. Pairs are reshuffled at every
/// epoch start from a substream indexed by the step; the final partial batch
/// of an epoch is kept. Validation metrics are recorded every `eval_every`
/// updates and after the last one.
inline TrainResult train(const TrainConfig& cfg, const std::vector<PairExample>& train_pairs,
                         const std::vector<PairExample>& val_pairs, const Universe& universe) {
  cfg.validate();
  if (train_pairs.empty() || val_pairs.empty()) throw UsageError("train: empty dataset");
  const auto train_refs = resolve_pairs(universe, train_pairs);
  resolve_pairs(universe, val_pairs);

  const Rng root = seeded_rng(cfg.seed);
  TrainResult out{init_model(cfg.model, root.substream("init")), {}};
  AdamState adam(AdamConfig{cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay});
  const Rng shuffle_root = root.substream("shuffle");

  std::vector<std::size_t> order(train_refs.size());
  std::size_t cursor = 0;
  std::vector<PairRef> batch;
  double loss_since = 0.0;
  long long count_since = 0;

  for (long long step = 0; step < cfg.steps; ++step) {
    if (cursor == 0) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng epoch_rng = shuffle_root.substream(static_cast<std::uint64_t>(step));
      epoch_rng.shuffle(order);
    }
    const std::size_t end = std::min(cursor + cfg.batch_size, order.size());
    batch.clear();
    for (std::size_t i = cursor; i < end; ++i) batch.push_back(train_refs[order[i]]);
    cursor = end == order.size() ? 0 : end;

    BatchResult br = batch_forward_backward(out.params, batch);
    const double lr = cosine_lr(step, cfg.steps, cfg.lr_init, cfg.lr_min);
    const auto blocks = detail::trainable_blocks(out.params, br.grads);
    adam_step(blocks, adam, lr);

    out.history.lr_trace.push_back(lr);
    out.history.loss_trace.push_back(br.mean_loss);
    loss_since += br.mean_loss;
    ++count_since;

    const long long done = step + 1;
    if (done % cfg.eval_every == 0 || done == cfg.steps) {
      EvalRecord rec;
      rec.step = done;
      rec.train_loss = loss_since / static_cast<double>(count_since);
      rec.val = evaluate(out.params, val_pairs, universe).metrics;
      rec.lr = lr;
      out.history.records.push_back(rec);
      loss_since = 0.0;
      count_since = 0;
    }
  }
  return out;
}

inline void write_history_csv(std::ostream& out, const TrainHistory& h) {
  out << "step,train_loss,lr,f1,precision,recall,accuracy\n";
  for (const auto& r : h.records) {
    out << r.step << ',' << format_double(r.train_loss) << ',' << format_double(r.lr) << ','
        << format_fixed(r.val.f1) << ',' << format_fixed(r.val.precision) << ','
        << format_fixed(r.val.recall) << ',' << format_fixed(r.val.accuracy) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Checkpoints: a JSON header line, then one JSON line per named block.

inline void save_checkpoint(const std::string& path, const ModelParams& params) {
  const auto& c = params.config;
  auto out = open_output(path);
  nlohmann::ordered_json h;
  h["schema_version"] = kCheckpointSchemaVersion;
  h["variant"] = to_string(c.variant);
  h["modality"] = to_string(c.modality);
  h["d1"] = c.d1;
  h["d2"] = c.d2;
  h["text_vocab"] = c.text_vocab;
  h["image_dim"] = c.image_dim;
  h["hidden_dim"] = c.hidden_dim;
  h["fixed_threshold"] = c.fixed_threshold;
  out << h.dump() << '\n';
  for_each_block(params, [&](const std::string& name, std::span<const double> values) {
    nlohmann::ordered_json b;
    b["block"] = name;
    b["values"] = std::vector<double>(values.begin(), values.end());
    out << b.dump() << '\n';
  });
  if (!out) throw IoError("write failed for '" + path + "'");
}

struct CheckpointExpectation {
  std::optional<Variant> variant;
  std::optional<Modality> modality;
};

/// Loads a checkpoint, rejecting it when it disagrees with `expect`.
inline ModelParams load_checkpoint(const std::string& path, CheckpointExpectation expect = {}) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing checkpoint header", 1);
  ModelConfig cfg;
  try {
    const auto h = nlohmann::ordered_json::parse(line);
    const int version = h.at("schema_version").get<int>();
    if (version != kCheckpointSchemaVersion) {
      throw VersionError("unsupported checkpoint schema_version " + std::to_string(version));
    }
    cfg.variant = parse_variant(h.at("variant").get<std::string>());
    cfg.modality = parse_modality(h.at("modality").get<std::string>());
    cfg.d1 = h.at("d1").get<std::size_t>();
    cfg.d2 = h.at("d2").get<std::size_t>();
    cfg.text_vocab = h.at("text_vocab").get<std::size_t>();
    cfg.image_dim = h.at("image_dim").get<std::size_t>();
    cfg.hidden_dim = h.at("hidden_dim").get<std::size_t>();
    cfg.fixed_threshold = h.at("fixed_threshold").get<double>();
    cfg.validate();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad checkpoint header: ") + e.what(), 1);
  } catch (const UsageError& e) {
    throw ParseError(std::string("bad checkpoint header: ") + e.what(), 1);
  }
  if (expect.variant && *expect.variant != cfg.variant) {
    throw ConfigMismatchError("checkpoint holds variant '" + std::string(to_string(cfg.variant)) +
                              "', expected '" + std::string(to_string(*expect.variant)) + "'");
  }
  if (expect.modality && *expect.modality != cfg.modality) {
    throw ConfigMismatchError("checkpoint holds modality '" +
                              std::string(to_string(cfg.modality)) + "', expected '" +
                              std::string(to_string(*expect.modality)) + "'");
  }

  ModelParams params = zero_model(cfg);
  std::size_t lineno = 1;
  for_each_block(params, [&](const std::string& name, std::span<double> values) {
    ++lineno;
    if (!std::getline(in, line)) {
      throw ParseError("checkpoint ends before block '" + name + "'", lineno);
    }
    try {
      const auto b = nlohmann::ordered_json::parse(line);
      const auto found = b.at("block").get<std::string>();
      if (found != name) {
        throw ParseError("expected block '" + name + "', found '" + found + "'", lineno);
      }
      const auto& arr = b.at("values");
      if (arr.size() != values.size()) {
        throw ConfigMismatchError("block '" + name + "' has " + std::to_string(arr.size()) +
                                  " values, config requires " + std::to_string(values.size()));
      }
      for (std::size_t i = 0; i < values.size(); ++i) values[i] = arr[i].get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("bad block '" + name + "': " + e.what(), lineno);
    }
  });
  return params;
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationCell {
  Variant variant = Variant::sat;
  Modality modality = Modality::both;
  std::uint64_t seed = 0;

  friend bool operator==(const AblationCell&, const AblationCell&) = default;
};

struct AblationRow {
  AblationCell cell;
  Metrics metrics;
  std::vector<ScoreRecord> records;
};

/// {baseline, lt, sat} on both modalities, plus sat on text and image alone.
inline std::vector<AblationCell> default_ablation_grid(const std::vector<std::uint64_t>& seeds) {
  std::vector<AblationCell> grid;
  for (auto v : {Variant::baseline, Variant::lt, Variant::sat}) {
    for (auto s : seeds) grid.push_back({v, Modality::both, s});
  }
  for (auto m : {Modality::text, Modality::image}) {
    for (auto s : seeds) grid.push_back({Variant::sat, m, s});
  }
  return grid;
}

/// Trains and evaluates each cell on the same splits. Rows come back sorted
/// by (variant, modality, seed).
inline std::vector<AblationRow> run_ablation(std::vector<AblationCell> grid, const Universe& universe,
                                             const std::vector<PairExample>& train_pairs,
                                             const std::vector<PairExample>& val_pairs,
                                             const TrainConfig& base) {
  std::sort(grid.begin(), grid.end(), [](const AblationCell& a, const AblationCell& b) {
    return std::tuple(a.variant, a.modality, a.seed) < std::tuple(b.variant, b.modality, b.seed);
  });
  std::vector<AblationRow> rows;
  rows.reserve(grid.size());
  for (const auto& cell : grid) {
    TrainConfig cfg = base;
    cfg.model.variant = cell.variant;
    cfg.model.modality = cell.modality;
    cfg.seed = cell.seed;
    const auto trained = train(cfg, train_pairs, val_pairs, universe);
    auto ev = evaluate(trained.params, val_pairs, universe);
    rows.push_back({cell, ev.metrics, std::move(ev.records)});
  }
  return rows;
}

inline void write_results_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "variant,modality,seed,f1,precision,recall,accuracy\n";
  for (const auto& r : rows) {
    out << to_string(r.cell.variant) << ',' << to_string(r.cell.modality) << ',' << r.cell.seed
        << ',' << format_fixed(r.metrics.f1) << ',' << format_fixed(r.metrics.precision) << ','
        << format_fixed(r.metrics.recall) << ',' << format_fixed(r.metrics.accuracy) << '\n';
  }
}

}  // namespace sat
