#pragma once

// Pipeline entry points behind the `sat` executable. Each command reads its
// inputs, writes only under `out_dir`, and echoes what it ran with.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sat/config.hpp"
#include "sat/data.hpp"
#include "sat/errors.hpp"
#include "sat/eval.hpp"
#include "sat/format.hpp"
#include "sat/index.hpp"
#include "sat/model.hpp"
#include "sat/train.hpp"

namespace sat {

namespace fs = std::filesystem;

struct Dataset {
  GenConfig gen;
  Universe universe;
  std::vector<PairExample> train;
  std::vector<PairExample> val;
  std::size_t dropped = 0;
};

/// Universe, pairs and split, all derived from `cfg.seed`.
inline Dataset make_dataset(const RunConfig& cfg) {
  const GenConfig g = cfg.gen_config();
  g.validate();
  const Rng root = seeded_rng(cfg.seed);
  Dataset ds{g, gen_universe(g, root.substream("universe")), {}, {}, 0};
  const auto pairs =
      sample_pairs(ds.universe, cfg.n_pos, cfg.n_neg, cfg.hard_fraction, root.substream("pairs"));
  auto split = split_item_disjoint(pairs, cfg.split_ratio, root.substream("split"));
  ds.train = std::move(split.train);
  ds.val = std::move(split.val);
  ds.dropped = split.dropped;
  return ds;
}

namespace detail {

inline fs::path prepare_out_dir(const std::string& out_dir) {
  if (out_dir.empty()) throw UsageError("--out is required");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + out_dir + "': " + ec.message());
  return fs::path(out_dir);
}

inline void echo_config(const fs::path& dir, const RunConfig& cfg) {
  auto out = open_output((dir / "config.txt").string());
  write_config(out, cfg);
}

/// For commands driven by input files rather than a RunConfig.
inline void echo_invocation(const fs::path& dir,
                            const std::vector<std::pair<std::string, std::string>>& kv) {
  auto out = open_output((dir / "invocation.txt").string());
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
}

inline std::string data_file(const std::string& data_dir, const char* name) {
  return (fs::path(data_dir) / name).string();
}

}  // namespace detail

/// Writes universe.jsonl, train.jsonl, val.jsonl, split.txt and config.txt.
inline Dataset cmd_gen(const RunConfig& cfg, const std::string& out_dir) {
  const auto dir = detail::prepare_out_dir(out_dir);
  Dataset ds = make_dataset(cfg);
  write_universe((dir / "universe.jsonl").string(), ds.gen, ds.universe);
  write_pairs((dir / "train.jsonl").string(), ds.gen, ds.train);
  write_pairs((dir / "val.jsonl").string(), ds.gen, ds.val);
  {
    auto out = open_output((dir / "split.txt").string());
    out << "commodities=" << ds.universe.size() << "\ntrain_pairs=" << ds.train.size()
        << "\nval_pairs=" << ds.val.size() << "\ndropped_pairs=" << ds.dropped << '\n';
  }
  detail::echo_config(dir, cfg);
  return ds;
}

/// Writes checkpoint.jsonl, history.csv and config.txt.
inline TrainResult cmd_train(const RunConfig& cfg, const std::string& data_dir,
                             const std::string& out_dir) {
  const auto uf = read_universe(detail::data_file(data_dir, "universe.jsonl"));
  const auto train_pairs = read_pairs(detail::data_file(data_dir, "train.jsonl"));
  const auto val_pairs = read_pairs(detail::data_file(data_dir, "val.jsonl"));
  const TrainConfig tc = cfg.train_config(uf.config.text_vocab(), uf.config.image_dim);
  tc.validate();
  const auto dir = detail::prepare_out_dir(out_dir);
  TrainResult result = train(tc, train_pairs, val_pairs, uf.universe);
  save_checkpoint((dir / "checkpoint.jsonl").string(), result.params);
  {
    auto out = open_output((dir / "history.csv").string());
    write_history_csv(out, result.history);
  }
  detail::echo_config(dir, cfg);
  return result;
}

/// Writes metrics.txt, metrics.csv and scores.csv for the validation pairs.
inline Evaluation cmd_eval(const std::string& checkpoint, const std::string& data_dir,
                           const std::string& out_dir, const CheckpointExpectation& expect = {}) {
  const auto params = load_checkpoint(checkpoint, expect);
  const auto uf = read_universe(detail::data_file(data_dir, "universe.jsonl"));
  const auto val_pairs = read_pairs(detail::data_file(data_dir, "val.jsonl"));
  const auto dir = detail::prepare_out_dir(out_dir);
  Evaluation ev = evaluate(params, val_pairs, uf.universe);
  {
    auto out = open_output((dir / "metrics.txt").string());
    write_metrics(out, ev.metrics);
  }
  {
    const Metrics& m = ev.metrics;
    auto out = open_output((dir / "metrics.csv").string());
    out << "variant,modality,tp,fp,fn,tn,precision,recall,f1,accuracy\n"
        << to_string(params.config.variant) << ',' << to_string(params.config.modality) << ','
        << m.tp << ',' << m.fp << ',' << m.fn << ',' << m.tn << ',' << format_fixed(m.precision)
        << ',' << format_fixed(m.recall) << ',' << format_fixed(m.f1) << ','
        << format_fixed(m.accuracy) << '\n';
  }
  {
    auto out = open_output((dir / "scores.csv").string());
    write_scores_csv(out, ev.records);
  }
  detail::echo_invocation(dir, {{"command", "eval"}, {"checkpoint", checkpoint}, {"data", data_dir}});
  return ev;
}

/// Writes density.tsv, stats.txt and sweep.csv from a scores file.
inline DistributionStats cmd_dist(const std::string& scores_csv, const std::string& out_dir,
                                  std::size_t grid_points = 512) {
  const auto records = read_scores_csv(scores_csv);
  std::size_t n_pos = 0;
  for (const auto& r : records) n_pos += r.y == 1 ? 1 : 0;
  if (n_pos < 2 || records.size() - n_pos < 2) {
    throw UsageError("dist: need at least 2 scores per class");
  }
  const auto dir = detail::prepare_out_dir(out_dir);
  const auto curve = kde_by_class(records, 0.0, grid_points);
  const auto stats = distribution_stats(curve, records);
  const double sensitivity = threshold_sensitivity(records);
  {
    auto out = open_output((dir / "density.tsv").string());
    write_density_tsv(out, curve, stats.epsilon);
  }
  {
    auto out = open_output((dir / "stats.txt").string());
    write_distribution_stats(out, stats, curve, sensitivity);
  }
  {
    const double half = 0.5 * stats.score_stddev;
    auto out = open_output((dir / "sweep.csv").string());
    out << "offset,precision,recall,f1,accuracy\n";
    for (const auto& pt : threshold_sweep(records, detail::even_grid(-half, half, 41))) {
      out << format_double(pt.offset) << ',' << format_fixed(pt.metrics.precision) << ','
          << format_fixed(pt.metrics.recall) << ',' << format_fixed(pt.metrics.f1) << ','
          << format_fixed(pt.metrics.accuracy) << '\n';
    }
  }
  detail::echo_invocation(dir, {{"command", "dist"},
                                {"scores", scores_csv},
                                {"grid_points", std::to_string(grid_points)}});
  return stats;
}

struct IndexQuery {
  std::optional<CommodityId> query_id;
  std::optional<std::size_t> k;
  /// Keep only hits whose score exceeds this margin.
  std::optional<double> query_threshold;
};

/// Rejects flag combinations that have no meaning for `variant`.
inline void validate_index_query(const IndexQuery& q, std::optional<Variant> variant) {
  if (q.query_threshold && variant == Variant::baseline) {
    throw UsageError("--query-threshold cannot be combined with --variant baseline");
  }
  if ((q.k || q.query_threshold) && !q.query_id) {
    throw UsageError("--k and --query-threshold require --query-id");
  }
  if (q.query_threshold && !std::isfinite(*q.query_threshold)) {
    throw UsageError("--query-threshold must be finite");
  }
}

struct IndexOutcome {
  IndexStore store;
  IndexDiscrepancy discrepancy;
  std::vector<Hit> hits;
};

/// Writes index.txt and index_check.txt; with a query also hits.csv.
/// The consistency check covers the validation pairs.
inline IndexOutcome cmd_index(const std::string& checkpoint, const std::string& data_dir,
                              const std::string& out_dir, const IndexQuery& query = {},
                              const CheckpointExpectation& expect = {}) {
  validate_index_query(query, expect.variant);
  const auto params = load_checkpoint(checkpoint, expect);
  validate_index_query(query, params.config.variant);
  const auto uf = read_universe(detail::data_file(data_dir, "universe.jsonl"));
  const auto val_pairs = read_pairs(detail::data_file(data_dir, "val.jsonl"));
  if (query.query_id && !uf.universe.contains(*query.query_id)) {
    throw UsageError("--query-id " + std::to_string(*query.query_id) + " is not in the universe");
  }
  const auto dir = detail::prepare_out_dir(out_dir);

  IndexOutcome res;
  res.store = build_index(params, uf.universe);
  res.discrepancy = verify_index_consistency(res.store, params, uf.universe, val_pairs);
  {
    auto out = open_output((dir / "index.txt").string());
    write_index(out, res.store);
  }
  {
    auto out = open_output((dir / "index_check.txt").string());
    out << "pairs_checked=" << val_pairs.size()
        << "\nmax_abs_discrepancy=" << format_double(res.discrepancy.max_abs)
        << "\nworst_a=" << res.discrepancy.worst_a << "\nworst_b=" << res.discrepancy.worst_b
        << '\n';
  }
  std::vector<std::pair<std::string, std::string>> echo{
      {"command", "index"}, {"checkpoint", checkpoint}, {"data", data_dir}};
  if (query.query_id) {
    const std::size_t k = query.k.value_or(10);
    const auto qv = query_for(params, uf.universe.at(*query.query_id), res.store);
    res.hits = top_k(res.store, qv, k);
    if (query.query_threshold) {
      std::erase_if(res.hits, [&](const Hit& h) { return !(h.score > *query.query_threshold); });
    }
    auto out = open_output((dir / "hits.csv").string());
    write_hits_csv(out, res.hits);
    echo.emplace_back("query_id", std::to_string(*query.query_id));
    echo.emplace_back("k", std::to_string(k));
    if (query.query_threshold) echo.emplace_back("query_threshold", format_double(*query.query_threshold));
  }
  detail::echo_invocation(dir, echo);
  return res;
}

/// Runs the ablation grid on one generated dataset; writes results.csv,
/// distribution.csv, per-cell scores under cells/, and config.txt.
inline std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, const std::string& out_dir) {
  if (cfg.ablate_seeds.empty()) throw UsageError("ablate: ablate_seeds must not be empty");
  const Dataset ds = make_dataset(cfg);
  const TrainConfig base = cfg.train_config(ds.gen.text_vocab(), ds.gen.image_dim);
  base.validate();
  const auto dir = detail::prepare_out_dir(out_dir);
  auto rows = run_ablation(default_ablation_grid(cfg.ablate_seeds), ds.universe, ds.train, ds.val, base);
  {
    auto out = open_output((dir / "results.csv").string());
    write_results_csv(out, rows);
  }
  {
    auto out = open_output((dir / "distribution.csv").string());
    out << "variant,modality,seed,near_threshold_fraction,pos_mode,neg_mode\n";
    for (const auto& r : rows) {
      const auto st = distribution_stats(kde_by_class(r.records), r.records);
      out << to_string(r.cell.variant) << ',' << to_string(r.cell.modality) << ',' << r.cell.seed
          << ',' << format_double(st.near_threshold_fraction) << ','
          << format_double(st.pos_mode.location) << ',' << format_double(st.neg_mode.location)
          << '\n';
    }
  }
  fs::create_directories(dir / "cells");
  for (const auto& r : rows) {
    const std::string name = std::string(to_string(r.cell.variant)) + "_" +
                             std::string(to_string(r.cell.modality)) + "_" +
                             std::to_string(r.cell.seed) + ".csv";
    auto out = open_output((dir / "cells" / name).string());
    write_scores_csv(out, r.records);
  }
  detail::echo_config(dir, cfg);
  return rows;
}

}  // namespace sat
