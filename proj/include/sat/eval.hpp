#pragma once

// Verification metrics at the decision threshold 0, score-distribution
// analysis by Gaussian KDE, and threshold-sensitivity sweeps.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "sat/data.hpp"
#include "sat/errors.hpp"
#include "sat/format.hpp"
#include "sat/model.hpp"

namespace sat {

/// Resolves ids against the universe; any unknown id fails the whole call.
inline std::vector<PairRef> resolve_pairs(const Universe& u, const std::vector<PairExample>& pairs) {
  std::vector<PairRef> refs;
  refs.reserve(pairs.size());
  for (const auto& p : pairs) refs.push_back({&u.at(p.a), &u.at(p.b), p.y});
  return refs;
}

struct Metrics {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0, accuracy = 0.0;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

/// Fills the ratios from the counts. Zero denominators give 0.
inline Metrics metrics_from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn,
                                   std::uint64_t tn) {
  Metrics m{tp, fp, fn, tn};
  const auto d = [](std::uint64_t x) { return static_cast<double>(x); };
  m.precision = tp + fp == 0 ? 0.0 : d(tp) / d(tp + fp);
  m.recall = tp + fn == 0 ? 0.0 : d(tp) / d(tp + fn);
  m.f1 = m.precision + m.recall == 0.0 ? 0.0
                                       : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  const std::uint64_t total = tp + fp + fn + tn;
  m.accuracy = total == 0 ? 0.0 : d(tp + tn) / d(total);
  return m;
}

struct ScoreRecord {
  CommodityId a = 0;
  CommodityId b = 0;
  int y = 0;
  double s = 0.0;
  double t = 0.0;
  double score = 0.0;

  friend bool operator==(const ScoreRecord&, const ScoreRecord&) = default;
};

/// Confusion counts for the rule "identical iff score > offset".
inline Metrics metrics_at_offset(const std::vector<ScoreRecord>& records, double offset) {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (const auto& r : records) {
    const bool identical = r.score > offset;
    if (identical) {
      (r.y == 1 ? tp : fp) += 1;
    } else {
      (r.y == 1 ? fn : tn) += 1;
    }
  }
  return metrics_from_counts(tp, fp, fn, tn);
}

struct Evaluation {
  Metrics metrics;
  std::vector<ScoreRecord> records;
};

/// Scores every pair (each commodity is encoded once) and aggregates the
/// decisions of `predict`.
inline Evaluation evaluate(const ModelParams& mp, const std::vector<PairExample>& pairs,
                           const Universe& universe) {
  if (pairs.empty()) throw UsageError("evaluate: no pairs");
  const auto refs = resolve_pairs(universe, pairs);
  std::unordered_map<CommodityId, EmbeddingPair> cache;
  auto embedding_of = [&](const Commodity& c) -> const EmbeddingPair& {
    auto it = cache.find(c.id);
    if (it == cache.end()) it = cache.emplace(c.id, encode(mp, c)).first;
    return it->second;
  };

  Evaluation out;
  out.records.reserve(pairs.size());
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const ScoreParts parts = score_pair(embedding_of(*refs[i].a), embedding_of(*refs[i].b), mp);
    const bool identical = predict(parts) == Decision::identical;
    const int y = refs[i].y;
    if (identical) {
      (y == 1 ? tp : fp) += 1;
    } else {
      (y == 1 ? fn : tn) += 1;
    }
    out.records.push_back({pairs[i].a, pairs[i].b, y, parts.s, parts.t, parts.score});
  }
  out.metrics = metrics_from_counts(tp, fp, fn, tn);
  return out;
}

// ---------------------------------------------------------------------------
// Score distributions

namespace detail {

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1); 0 for fewer than two values.
inline double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Linear-interpolated quantile of sorted data (type 7).
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double gaussian_density_at(const std::vector<double>& data, double x, double h) {
  const double norm = 1.0 / (static_cast<double>(data.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  double acc = 0.0;
  for (double d : data) {
    const double u = (x - d) / h;
    acc += std::exp(-0.5 * u * u);
  }
  return acc * norm;
}

inline Vec even_grid(double lo, double hi, std::size_t points) {
  Vec g(points);
  if (points == 1) {
    g[0] = 0.5 * (lo + hi);
    return g;
  }
  const double step = (hi - lo) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) g[i] = lo + step * static_cast<double>(i);
  g.back() = hi;
  return g;
}

}  // namespace detail

struct Bandwidth {
  double value = 0.0;
  bool fallback = false;  // auto rule degenerate (all scores identical)
};

/// Silverman's rule h = 0.9·min(σ, IQR/1.34)·n^(-1/5). A zero IQR falls
/// back to σ; when every score is identical h = max(|v|, 1)·1e-3 and the
/// result is flagged.
inline Bandwidth silverman_bandwidth(const std::vector<double>& scores) {
  if (scores.size() < 2) throw UsageError("kde: need at least 2 scores");
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  const double sigma = detail::stddev_of(scores);
  const double iqr = detail::quantile_sorted(sorted, 0.75) - detail::quantile_sorted(sorted, 0.25);
  double spread = std::min(sigma, iqr / 1.34);
  if (!(spread > 0.0)) spread = sigma;
  if (!(spread > 0.0)) {
    return {std::max(std::abs(sorted.front()), 1.0) * 1e-3, true};
  }
  return {0.9 * spread * std::pow(static_cast<double>(scores.size()), -0.2), false};
}

/// One density estimate on its own grid.
struct Kde {
  Vec grid;
  Vec density;
  Bandwidth bandwidth;
};

/// Gaussian KDE on an even grid over [min - 4h, max + 4h]. A bandwidth <= 0
/// (or omitted) selects Silverman's rule.
inline Kde kde(const std::vector<double>& scores, double bandwidth = 0.0,
               std::size_t grid_points = 512) {
  if (scores.size() < 2) throw UsageError("kde: need at least 2 scores");
  if (grid_points < 2) throw UsageError("kde: need at least 2 grid points");
  Kde out;
  out.bandwidth = bandwidth > 0.0 ? Bandwidth{bandwidth, false} : silverman_bandwidth(scores);
  const double h = out.bandwidth.value;
  const auto [mn, mx] = std::minmax_element(scores.begin(), scores.end());
  out.grid = detail::even_grid(*mn - 4.0 * h, *mx + 4.0 * h, grid_points);
  out.density.resize(grid_points);
  for (std::size_t i = 0; i < grid_points; ++i) {
    out.density[i] = detail::gaussian_density_at(scores, out.grid[i], h);
  }
  return out;
}

/// Positive- and negative-class densities on one shared grid.
struct DensityCurve {
  Vec grid;
  Vec density_pos;
  Vec density_neg;
  Bandwidth bandwidth_pos;
  Bandwidth bandwidth_neg;
};

/// Both class densities on a grid spanning all scores ±4 of the larger
/// bandwidth, so each curve keeps its ±4h support.
inline DensityCurve kde_by_class(const std::vector<double>& pos, const std::vector<double>& neg,
                                 double bandwidth = 0.0, std::size_t grid_points = 512) {
  if (pos.size() < 2 || neg.size() < 2) throw UsageError("kde: need at least 2 scores per class");
  if (grid_points < 2) throw UsageError("kde: need at least 2 grid points");
  DensityCurve c;
  c.bandwidth_pos = bandwidth > 0.0 ? Bandwidth{bandwidth, false} : silverman_bandwidth(pos);
  c.bandwidth_neg = bandwidth > 0.0 ? Bandwidth{bandwidth, false} : silverman_bandwidth(neg);
  const double h = std::max(c.bandwidth_pos.value, c.bandwidth_neg.value);
  double lo = std::min(*std::min_element(pos.begin(), pos.end()),
                       *std::min_element(neg.begin(), neg.end()));
  double hi = std::max(*std::max_element(pos.begin(), pos.end()),
                       *std::max_element(neg.begin(), neg.end()));
  c.grid = detail::even_grid(lo - 4.0 * h, hi + 4.0 * h, grid_points);
  c.density_pos.resize(grid_points);
  c.density_neg.resize(grid_points);
  for (std::size_t i = 0; i < grid_points; ++i) {
    c.density_pos[i] = detail::gaussian_density_at(pos, c.grid[i], c.bandwidth_pos.value);
    c.density_neg[i] = detail::gaussian_density_at(neg, c.grid[i], c.bandwidth_neg.value);
  }
  return c;
}

inline DensityCurve kde_by_class(const std::vector<ScoreRecord>& records, double bandwidth = 0.0,
                                 std::size_t grid_points = 512) {
  std::vector<double> pos, neg;
  for (const auto& r : records) (r.y == 1 ? pos : neg).push_back(r.score);
  return kde_by_class(pos, neg, bandwidth, grid_points);
}

inline double trapezoid(std::span<const double> x, std::span<const double> y) {
  double acc = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) acc += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return acc;
}

struct Mode {
  double location = 0.0;
  double height = 0.0;
  double distance_from_zero = 0.0;
};

inline Mode mode_of(std::span<const double> grid, std::span<const double> density) {
  const auto it = std::max_element(density.begin(), density.end());
  const auto i = static_cast<std::size_t>(it - density.begin());
  return {grid[i], *it, std::abs(grid[i])};
}

struct DistributionStats {
  Mode pos_mode;
  Mode neg_mode;
  double score_stddev = 0.0;
  double epsilon = 0.0;               // 0.25 · stddev of all scores
  double near_threshold_fraction = 0.0;  // share of pairs with |score| < epsilon
  bool modes_on_correct_sides = false;   // pos mode > 0 and neg mode < 0
};

/// Quantitative surrogates for how crowded the scores are around the
/// decision threshold: class modes and the near-threshold mass.
inline DistributionStats distribution_stats(const DensityCurve& curve,
                                            const std::vector<ScoreRecord>& records) {
  if (curve.density_pos.size() != curve.grid.size() ||
      curve.density_neg.size() != curve.grid.size()) {
    throw ShapeError("distribution_stats: curves must share the grid");
  }
  DistributionStats st;
  st.pos_mode = mode_of(curve.grid, curve.density_pos);
  st.neg_mode = mode_of(curve.grid, curve.density_neg);
  std::vector<double> scores;
  scores.reserve(records.size());
  for (const auto& r : records) scores.push_back(r.score);
  st.score_stddev = detail::stddev_of(scores);
  st.epsilon = 0.25 * st.score_stddev;
  std::size_t near = 0;
  for (double s : scores) near += std::abs(s) < st.epsilon ? 1 : 0;
  st.near_threshold_fraction =
      scores.empty() ? 0.0 : static_cast<double>(near) / static_cast<double>(scores.size());
  st.modes_on_correct_sides = st.pos_mode.location > 0.0 && st.neg_mode.location < 0.0;
  return st;
}

struct SweepPoint {
  double offset = 0.0;
  Metrics metrics;
};

/// Metrics under the shifted rule "identical iff score > offset".
inline std::vector<SweepPoint> threshold_sweep(const std::vector<ScoreRecord>& records,
                                               const std::vector<double>& offsets) {
  std::vector<SweepPoint> out;
  out.reserve(offsets.size());
  for (double o : offsets) out.push_back({o, metrics_at_offset(records, o)});
  return out;
}

/// Largest F1 drop relative to offset 0 over `points` offsets evenly spaced
/// in [-0.5σ, 0.5σ], σ the stddev of all scores.
inline double threshold_sensitivity(const std::vector<ScoreRecord>& records,
                                    std::size_t points = 41) {
  if (records.empty() || points < 2) return 0.0;
  std::vector<double> scores;
  for (const auto& r : records) scores.push_back(r.score);
  const double half = 0.5 * detail::stddev_of(scores);
  const double f1_zero = metrics_at_offset(records, 0.0).f1;
  double worst = 0.0;
  for (const auto& pt : threshold_sweep(records, detail::even_grid(-half, half, points))) {
    worst = std::max(worst, f1_zero - pt.metrics.f1);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Output files

inline void write_scores_csv(std::ostream& out, const std::vector<ScoreRecord>& records) {
  out << "a,b,y,s,t,score\n";
  for (const auto& r : records) {
    out << r.a << ',' << r.b << ',' << r.y << ',' << format_double(r.s) << ','
        << format_double(r.t) << ',' << format_double(r.score) << '\n';
  }
}

inline std::vector<ScoreRecord> read_scores_csv(const std::string& path) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line) || line != "a,b,y,s,t,score") {
    throw ParseError("expected header 'a,b,y,s,t,score'", 1);
  }
  std::vector<ScoreRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      f.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (f.size() != 6) throw ParseError("expected 6 fields", lineno);
    try {
      ScoreRecord r;
      r.a = parse_int<CommodityId>(f[0]);
      r.b = parse_int<CommodityId>(f[1]);
      r.y = parse_int<int>(f[2]);
      r.s = parse_double(f[3]);
      r.t = parse_double(f[4]);
      r.score = parse_double(f[5]);
      out.push_back(r);
    } catch (const UsageError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return out;
}

/// Key=value metrics, one per line.
inline void write_metrics(std::ostream& out, const Metrics& m) {
  out << "tp=" << m.tp << "\nfp=" << m.fp << "\nfn=" << m.fn << "\ntn=" << m.tn
      << "\nprecision=" << format_fixed(m.precision) << "\nrecall=" << format_fixed(m.recall)
      << "\nf1=" << format_fixed(m.f1) << "\naccuracy=" << format_fixed(m.accuracy) << '\n';
}

inline void write_density_tsv(std::ostream& out, const DensityCurve& c, double epsilon) {
  out << "# kernel=gaussian bandwidth_rule="
      << (c.bandwidth_pos.fallback || c.bandwidth_neg.fallback ? "fallback" : "silverman")
      << " bandwidth_pos=" << format_double(c.bandwidth_pos.value)
      << " bandwidth_neg=" << format_double(c.bandwidth_neg.value)
      << " epsilon=" << format_double(epsilon) << '\n';
  out << "x\tdensity_pos\tdensity_neg\n";
  for (std::size_t i = 0; i < c.grid.size(); ++i) {
    out << format_double(c.grid[i]) << '\t' << format_double(c.density_pos[i]) << '\t'
        << format_double(c.density_neg[i]) << '\n';
  }
}

inline void write_distribution_stats(std::ostream& out, const DistributionStats& st,
                                     const DensityCurve& c, double sensitivity) {
  out << "pos_mode_location=" << format_double(st.pos_mode.location) << '\n'
      << "pos_mode_height=" << format_double(st.pos_mode.height) << '\n'
      << "pos_mode_distance=" << format_double(st.pos_mode.distance_from_zero) << '\n'
      << "neg_mode_location=" << format_double(st.neg_mode.location) << '\n'
      << "neg_mode_height=" << format_double(st.neg_mode.height) << '\n'
      << "neg_mode_distance=" << format_double(st.neg_mode.distance_from_zero) << '\n'
      << "score_stddev=" << format_double(st.score_stddev) << '\n'
      << "epsilon=" << format_double(st.epsilon) << '\n'
      << "near_threshold_fraction=" << format_double(st.near_threshold_fraction) << '\n'
      << "modes_on_correct_sides=" << (st.modes_on_correct_sides ? 1 : 0) << '\n'
      << "max_f1_drop_half_sigma=" << format_double(sensitivity) << '\n'
      << "bandwidth_pos=" << format_double(c.bandwidth_pos.value) << '\n'
      << "bandwidth_neg=" << format_double(c.bandwidth_neg.value) << '\n'
      << "bandwidth_fallback=" << (c.bandwidth_pos.fallback || c.bandwidth_neg.fallback ? 1 : 0)
      << '\n';
}

}  // namespace sat
