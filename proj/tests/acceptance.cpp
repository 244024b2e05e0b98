// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "sat/commands.hpp"
#include "sat/index.hpp"

using namespace sat;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Verdict()>& check) {
  const auto start = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  failures += v.pass ? 0 : 1;
  std::printf("criterion %d %s: %s (%s; %.1fs)\n", id, name, v.pass ? "PASS" : "FAIL",
              v.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

// Softmax over (exp s, exp t), written directly with log-sum-exp.
double softmax_form(double s, double t, int y) {
  const double m = std::max(s, t);
  const double lse = m + std::log(std::exp(s - m) + std::exp(t - m));
  return lse - (y == 1 ? s : t);
}

Verdict loss_form() {
  Rng r = seeded_rng(101);
  double worst = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double s = r.uniform(-20, 20), t = r.uniform(-20, 20);
    for (int y : {0, 1}) {
      worst = std::max(worst, std::abs(softmax_form(s, t, y) - pair_loss({s, t, s - t}, y)));
    }
  }
  return {worst < 1e-9, "max_abs_diff=" + fmt(worst)};
}

Verdict gradients() {
  GenConfig g;
  g.n_products = 24;
  g.variants_per_product = 4;
  g.categories = 3;
  const Universe u = gen_universe(g, seeded_rng(7));
  const auto& it = u.items();
  const std::vector<PairRef> batch{{&it[0], &it[1], label_for(it[0], it[1])},
                                   {&it[2], &it[9], label_for(it[2], it[9])},
                                   {&it[5], &it[17], label_for(it[5], it[17])}};
  double worst = 0.0;
  std::string worst_block;
  for (auto v : {Variant::sat, Variant::lt, Variant::baseline}) {
    for (std::uint64_t seed : {1, 2, 3}) {
      ModelConfig c;
      c.d1 = c.d2 = 4;
      c.hidden_dim = 8;
      c.text_vocab = g.text_vocab();
      c.image_dim = g.image_dim;
      c.variant = v;
      auto mp = init_model(c, seeded_rng(seed));
      if (v == Variant::lt) mp.scalar_threshold = 0.3;
      const Vec analytic = flatten(batch_forward_backward(mp, batch).grads);
      ModelParams probe = mp;
      const Vec numeric = finite_diff_grad(
          [&](std::span<const double> theta) {
            unflatten(probe, theta);
            return batch_loss(probe, batch);
          },
          flatten(mp), 1e-4);
      std::size_t at = 0;
      for_each_block(mp, [&](const std::string& name, auto values) {
        // Baseline's threshold is a constant, not a parameter.
        if (is_trainable(c, name) || name != "scalar_threshold") {
          const double e = max_relative_error(std::span(analytic).subspan(at, values.size()),
                                              std::span(numeric).subspan(at, values.size()));
          if (e > worst) {
            worst = e;
            worst_block = std::string(to_string(v)) + ":" + name;
          }
        }
        at += values.size();
      });
    }
  }
  return {worst < 1e-4, "max_block_rel_err=" + fmt(worst) + " at " + worst_block};
}

Verdict index_identity() {
  RunConfig cfg;
  cfg.gen.n_products = 120;
  cfg.n_pos = cfg.n_neg = 1500;
  cfg.train.steps = 300;
  cfg.seed = 11;
  const Dataset ds = make_dataset(cfg);
  const auto trained = train(cfg.train_config(ds.gen.text_vocab(), ds.gen.image_dim), ds.train,
                             ds.val, ds.universe);
  const auto& mp = trained.params;
  const auto store = build_index(mp, ds.universe);
  const auto& items = ds.universe.items();

  Rng r = seeded_rng(12);
  std::vector<PairExample> sample;
  for (int i = 0; i < 1000; ++i) {
    const auto& a = items[r.below(items.size())];
    const auto& b = items[r.below(items.size())];
    sample.push_back({a.id, b.id, label_for(a, b)});
  }
  const double disc = verify_index_consistency(store, mp, ds.universe, sample).max_abs;

  // Oracle: score every row independently, then a full stable sort.
  std::size_t mismatches = 0;
  double worst_pair = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto& q = items[r.below(items.size())];
    const auto query = query_for(mp, q, store);
    const auto eq = encode(mp, q);
    std::vector<Hit> oracle;
    for (std::size_t i = 0; i < store.size(); ++i) {
      const auto row = store.row(i);
      double s = 0.0;
      for (std::size_t j = 0; j < row.size(); ++j) s += row[j] * query.values[j];
      oracle.push_back({store.ids()[i], s - query.offset});
      worst_pair = std::max(
          worst_pair, std::abs(oracle.back().score -
                               score_pair(eq, encode(mp, ds.universe.at(store.ids()[i])), mp).score));
    }
    std::stable_sort(oracle.begin(), oracle.end(), [](const Hit& a, const Hit& b) {
      return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    const std::size_t k = 1 + r.below(items.size());
    const auto got = top_k(store, query, k);
    for (std::size_t i = 0; i < k; ++i) {
      mismatches += got[i].id != oracle[i].id || got[i].score != oracle[i].score;
    }
  }
  const bool pass = disc < 1e-9 && worst_pair < 1e-9 && mismatches == 0;
  return {pass, "max_discrepancy=" + fmt(std::max(disc, worst_pair)) +
                    " topk_mismatches=" + std::to_string(mismatches)};
}

struct Benchmark {
  std::vector<AblationRow> rows;

  double mean_f1(Variant v, Modality m) const {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : rows) {
      if (r.cell.variant == v && r.cell.modality == m) sum += r.metrics.f1, ++n;
    }
    return sum / n;
  }
};

const Benchmark& benchmark() {
  static const Benchmark b = [] {
    const RunConfig cfg;
    const Dataset ds = make_dataset(cfg);
    const TrainConfig base = cfg.train_config(ds.gen.text_vocab(), ds.gen.image_dim);
    return Benchmark{run_ablation(default_ablation_grid(cfg.ablate_seeds), ds.universe, ds.train,
                                  ds.val, base)};
  }();
  return b;
}

Verdict method_trend() {
  const auto& b = benchmark();
  const double sat = b.mean_f1(Variant::sat, Modality::both);
  const double lt = b.mean_f1(Variant::lt, Modality::both);
  const double base = b.mean_f1(Variant::baseline, Modality::both);
  return {sat >= lt + 0.02 && lt >= base,
          "f1 sat=" + fmt(sat) + " lt=" + fmt(lt) + " baseline=" + fmt(base)};
}

Verdict modality_trend() {
  const auto& b = benchmark();
  const double both = b.mean_f1(Variant::sat, Modality::both);
  const double text = b.mean_f1(Variant::sat, Modality::text);
  const double image = b.mean_f1(Variant::sat, Modality::image);
  return {both >= std::max(text, image) + 0.02 && text >= 0.60 && image >= 0.60,
          "f1 both=" + fmt(both) + " text=" + fmt(text) + " image=" + fmt(image)};
}

Verdict near_threshold_mass() {
  double sat = 0.0, lt = 0.0;
  bool sides = true;
  int n_sat = 0, n_lt = 0;
  for (const auto& r : benchmark().rows) {
    if (r.cell.modality != Modality::both || r.cell.variant == Variant::baseline) continue;
    const auto st = distribution_stats(kde_by_class(r.records), r.records);
    if (r.cell.variant == Variant::sat) {
      sat += st.near_threshold_fraction, ++n_sat;
      sides = sides && st.modes_on_correct_sides;
    } else {
      lt += st.near_threshold_fraction, ++n_lt;
    }
  }
  sat /= n_sat;
  lt /= n_lt;
  return {sat < lt && sides, "near_mass sat=" + fmt(sat) + " lt=" + fmt(lt) +
                                 " sat_modes_correct=" + (sides ? "yes" : "no")};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SAT_CLI_PATH) + " " + args + " > /dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  const auto dir = fs::temp_directory_path() / "sat_acceptance_determinism";
  fs::remove_all(dir);
  const std::string first = (dir / "first").string(), second = (dir / "second").string();
  const int a = run_cli("ablate --seed 4 --set n_products=80 --set n_pos=1000 --set n_neg=1000 "
                        "--set steps=150 --set d1=16 --set d2=16 --set hidden_dim=16 --out '" +
                        first + "'");
  if (a != 0) return {false, "first run exited " + std::to_string(a)};
  const int b = run_cli("ablate --config '" + first + "/config.txt' --out '" + second + "'");
  if (b != 0) return {false, "rerun exited " + std::to_string(b)};
  const auto ra = slurp(dir / "first" / "results.csv");
  const auto rb = slurp(dir / "second" / "results.csv");
  const bool same = !ra.empty() && ra == rb &&
                    slurp(dir / "first" / "distribution.csv") == slurp(dir / "second" / "distribution.csv");
  return {same, "results.csv bytes=" + std::to_string(ra.size()) + (same ? " identical" : " differ")};
}

Verdict decision_rule() {
  std::size_t checked = 0;
  bool ok = true;
  for (const auto& r : benchmark().rows) {
    ok = ok && threshold_sweep(r.records, {0.0})[0].metrics == r.metrics;
    ++checked;
  }
  // Hand-computed confusion examples.
  const auto m1 = metrics_from_counts(3, 1, 1, 5);
  ok = ok && m1.precision == 0.75 && m1.recall == 0.75 && m1.f1 == 0.75 && m1.accuracy == 0.8;
  const auto m2 = metrics_from_counts(2, 0, 2, 1);
  ok = ok && m2.precision == 1.0 && m2.recall == 0.5 && std::abs(m2.f1 - 2.0 / 3.0) < 1e-15 &&
       m2.accuracy == 0.6;
  const auto m3 = metrics_from_counts(0, 0, 4, 6);
  ok = ok && m3.precision == 0.0 && m3.recall == 0.0 && m3.f1 == 0.0 && m3.accuracy == 0.6;
  // A score of exactly 0 is "different".
  const std::vector<ScoreRecord> recs{{1, 2, 1, 1.0, 1.0, 0.0}, {1, 3, 0, 0.5, 0.0, 0.5},
                                      {2, 3, 1, 2.0, 0.5, 1.5}, {3, 4, 0, 0.0, 1.0, -1.0}};
  const auto m4 = metrics_at_offset(recs, 0.0);
  ok = ok && m4.tp == 1 && m4.fp == 1 && m4.fn == 1 && m4.tn == 1;
  return {ok, "sweep_vs_evaluate cells=" + std::to_string(checked) + " hand_examples=4"};
}

}  // namespace

int main() {
  report(1, "loss-form equivalence", loss_form);
  report(2, "gradient correctness", gradients);
  report(3, "index identity", index_identity);
  report(4, "method F1 ordering", method_trend);
  report(5, "modality F1 ordering", modality_trend);
  report(6, "near-threshold mass", near_threshold_mass);
  report(7, "ablation determinism", determinism);
  report(8, "decision rule and metrics", decision_rule);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
