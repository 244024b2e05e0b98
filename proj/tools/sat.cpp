// sat: command-line driver for generation, training, evaluation, score
// analysis, indexing and the ablation grid.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sat/commands.hpp"

namespace {

// One line, tab-separated key=value fields.
int report(const char* kind, int code, std::string message) {
  for (char& c : message) {
    if (c == '\n' || c == '\t') c = ' ';
  }
  std::cerr << "error\tkind=" << kind << "\tcode=" << code << "\tmessage=" << message << '\n';
  return code;
}

struct Options {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<std::string> modality;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::string scores;
  std::optional<std::size_t> k;
  std::optional<sat::CommodityId> query_id;
  std::optional<double> query_threshold;
  std::size_t grid_points = 512;
};

// File, then --set, then the dedicated flags.
sat::RunConfig effective_config(const Options& o) {
  sat::RunConfig cfg;
  if (!o.config_path.empty()) cfg = sat::load_config(o.config_path);
  for (const auto& s : o.sets) sat::apply_assignment(cfg, s);
  if (o.seed) cfg.seed = *o.seed;
  if (o.variant) cfg.train.model.variant = sat::parse_variant(*o.variant);
  if (o.modality) cfg.train.model.modality = sat::parse_modality(*o.modality);
  return cfg;
}

sat::CheckpointExpectation expectation(const Options& o) {
  sat::CheckpointExpectation e;
  if (o.variant) e.variant = sat::parse_variant(*o.variant);
  if (o.modality) e.modality = sat::parse_modality(*o.modality);
  return e;
}

void add_config_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config_path, "key=value configuration file");
  cmd->add_option("--set", o.sets, "override one key, e.g. --set steps=500")->allow_extra_args(false);
  cmd->add_option("--seed", o.seed, "run seed");
}

void add_model_flags(CLI::App* cmd, Options& o, const char* what) {
  cmd->add_option("--variant", o.variant, what)->check(CLI::IsMember({"baseline", "lt", "sat"}));
  cmd->add_option("--modality", o.modality, what)->check(CLI::IsMember({"text", "image", "both"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-adaptive threshold verification: data, training, evaluation and retrieval"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen", "generate a synthetic benchmark");
  add_config_flags(gen, o);
  gen->add_option("--out", o.out, "output directory")->required();

  auto* trn = app.add_subcommand("train", "train a model on a generated benchmark");
  add_config_flags(trn, o);
  add_model_flags(trn, o, "model setting (overrides the config)");
  trn->add_option("--data", o.data, "directory written by gen")->required();
  trn->add_option("--out", o.out, "output directory")->required();

  auto* evl = app.add_subcommand("eval", "score the validation pairs");
  add_model_flags(evl, o, "expected checkpoint setting");
  evl->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  evl->add_option("--data", o.data, "directory written by gen")->required();
  evl->add_option("--out", o.out, "output directory")->required();

  auto* dst = app.add_subcommand("dist", "score densities and near-threshold statistics");
  dst->add_option("--scores", o.scores, "scores.csv written by eval")->required();
  dst->add_option("--grid-points", o.grid_points, "density grid size")->check(CLI::Range(2, 1 << 20));
  dst->add_option("--out", o.out, "output directory")->required();

  auto* idx = app.add_subcommand("index", "build the retrieval index and optionally query it");
  add_model_flags(idx, o, "expected checkpoint setting");
  idx->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  idx->add_option("--data", o.data, "directory written by gen")->required();
  idx->add_option("--out", o.out, "output directory")->required();
  idx->add_option("--query-id", o.query_id, "commodity to query with");
  idx->add_option("--k", o.k, "number of hits (default 10)");
  idx->add_option("--query-threshold", o.query_threshold, "keep hits whose score exceeds this");

  auto* abl = app.add_subcommand("ablate", "run the variant and modality grid");
  add_config_flags(abl, o);
  abl->add_option("--out", o.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report("usage", 2, e.what());
  }

  try {
    if (gen->parsed()) {
      const auto ds = sat::cmd_gen(effective_config(o), o.out);
      std::cout << "commodities=" << ds.universe.size() << " train_pairs=" << ds.train.size()
                << " val_pairs=" << ds.val.size() << '\n';
    } else if (trn->parsed()) {
      const auto res = sat::cmd_train(effective_config(o), o.data, o.out);
      const auto& last = res.history.records.back();
      std::cout << "step=" << last.step << " train_loss=" << sat::format_fixed(last.train_loss, 6)
                << " val_f1=" << sat::format_fixed(last.val.f1) << '\n';
    } else if (evl->parsed()) {
      const auto ev = sat::cmd_eval(o.checkpoint, o.data, o.out, expectation(o));
      sat::write_metrics(std::cout, ev.metrics);
    } else if (dst->parsed()) {
      const auto st = sat::cmd_dist(o.scores, o.out, o.grid_points);
      std::cout << "near_threshold_fraction=" << sat::format_double(st.near_threshold_fraction)
                << '\n';
    } else if (idx->parsed()) {
      const sat::IndexQuery q{o.query_id, o.k, o.query_threshold};
      const auto res = sat::cmd_index(o.checkpoint, o.data, o.out, q, expectation(o));
      std::cout << "rows=" << res.store.size()
                << " max_abs_discrepancy=" << sat::format_double(res.discrepancy.max_abs) << '\n';
      if (o.query_id) sat::write_hits_csv(std::cout, res.hits);
    } else if (abl->parsed()) {
      const auto rows = sat::cmd_ablate(effective_config(o), o.out);
      sat::write_results_csv(std::cout, rows);
    }
  } catch (const sat::Error& e) {
    return report(e.kind(), e.exit_code(), e.what());
  } catch (const std::exception& e) {
    return report("internal", 1, e.what());
  }
  return 0;
}
