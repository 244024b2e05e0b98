#pragma once

// Exact inner-product retrieval over complete embeddings.
//
// Rows store z = [p, q]. A query is [p, -q], so query·row = p1·p2 - q1·q2,
// which is exactly the pair score. One inner product per candidate suffices.
// Variants without a threshold stream store q of length 0 and carry their
// constant threshold as a query offset instead.

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sat/data.hpp"
#include "sat/errors.hpp"
#include "sat/format.hpp"
#include "sat/model.hpp"

namespace sat {

inline constexpr int kIndexSchemaVersion = 1;

class IndexStore {
 public:
  IndexStore() = default;
  IndexStore(std::size_t d1, std::size_t d2, std::vector<CommodityId> ids, Vec rows)
      : d1_(d1), d2_(d2), ids_(std::move(ids)), rows_(std::move(rows)) {
    if (rows_.size() != ids_.size() * width()) throw ShapeError("index: row data size mismatch");
    if (!std::is_sorted(ids_.begin(), ids_.end()) ||
        std::adjacent_find(ids_.begin(), ids_.end()) != ids_.end()) {
      throw IntegrityError("index: ids must be unique and ascending");
    }
  }

  std::size_t d1() const { return d1_; }
  std::size_t d2() const { return d2_; }
  std::size_t width() const { return d1_ + d2_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<CommodityId>& ids() const { return ids_; }

  std::span<const double> row(std::size_t i) const {
    return std::span(rows_).subspan(i * width(), width());
  }

  /// Row position of `id`.
  std::size_t position(CommodityId id) const {
    const auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
    if (it == ids_.end() || *it != id) {
      throw IntegrityError("index: id " + std::to_string(id) + " not indexed");
    }
    return static_cast<std::size_t>(it - ids_.begin());
  }

  /// Returns a copy with one row overwritten; for fault-injection tests.
  IndexStore with_row(std::size_t i, std::span<const double> values) const {
    if (values.size() != width()) throw ShapeError("index: replacement row has wrong width");
    IndexStore copy = *this;
    std::copy(values.begin(), values.end(), copy.rows_.begin() + static_cast<std::ptrdiff_t>(i * width()));
    return copy;
  }

  friend bool operator==(const IndexStore&, const IndexStore&) = default;

 private:
  std::size_t d1_ = 0;
  std::size_t d2_ = 0;
  std::vector<CommodityId> ids_;
  Vec rows_;
};

/// Encodes every commodity once; rows follow ascending id.
inline IndexStore build_index(const ModelParams& params, const Universe& universe) {
  const std::size_t d1 = params.config.d1;
  const std::size_t d2 = params.config.effective_d2();
  std::vector<CommodityId> ids;
  Vec rows;
  ids.reserve(universe.size());
  rows.reserve(universe.size() * (d1 + d2));
  for (const auto& c : universe.items()) {
    const Vec z = concat_embedding(encode(params, c));
    ids.push_back(c.id);
    rows.insert(rows.end(), z.begin(), z.end());
  }
  return IndexStore(d1, d2, std::move(ids), std::move(rows));
}

struct QueryVector {
  Vec values;
  double offset = 0.0;  // subtracted from every inner product
};

/// The pair-independent part of the threshold: 0 for sat.
inline double constant_threshold(const ModelParams& params) {
  switch (params.config.variant) {
    case Variant::sat: return 0.0;
    case Variant::lt: return params.scalar_threshold;
    case Variant::baseline: return params.config.fixed_threshold;
  }
  return 0.0;
}

/// [p, -q].
inline QueryVector make_query(const EmbeddingPair& e, double offset = 0.0) {
  QueryVector qv;
  qv.offset = offset;
  qv.values.reserve(e.p.size() + e.q.size());
  qv.values.insert(qv.values.end(), e.p.begin(), e.p.end());
  for (double v : e.q) qv.values.push_back(-v);
  return qv;
}

/// make_query with the dimensions checked against the store.
inline QueryVector make_query(const EmbeddingPair& e, const IndexStore& store,
                              double offset = 0.0) {
  if (e.p.size() != store.d1() || e.q.size() != store.d2()) {
    throw ShapeError("make_query: embedding (" + std::to_string(e.p.size()) + "," +
                     std::to_string(e.q.size()) + ") does not match index (" +
                     std::to_string(store.d1()) + "," + std::to_string(store.d2()) + ")");
  }
  return make_query(e, offset);
}

/// Query for a commodity under `params`, offset included.
inline QueryVector query_for(const ModelParams& params, const Commodity& c, const IndexStore& store) {
  return make_query(encode(params, c), store, constant_threshold(params));
}

struct Hit {
  CommodityId id = 0;
  double score = 0.0;

  friend bool operator==(const Hit&, const Hit&) = default;
};

/// The k rows with the largest query·row - offset, best first; equal scores rank by
/// ascending id.
inline std::vector<Hit> top_k(const IndexStore& store, const QueryVector& query, std::size_t k) {
  if (k < 1 || k > store.size()) {
    throw UsageError("top_k: k=" + std::to_string(k) + " outside [1, " +
                     std::to_string(store.size()) + "]");
  }
  if (query.values.size() != store.width()) throw ShapeError("top_k: query width mismatch");
  std::vector<Hit> hits(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    hits[i] = {store.ids()[i], dot(query.values, store.row(i)) - query.offset};
  }
  const auto better = [](const Hit& a, const Hit& b) {
    return a.score > b.score || (a.score == b.score && a.id < b.id);
  };
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), better);
  hits.resize(k);
  return hits;
}

struct IndexDiscrepancy {
  double max_abs = 0.0;
  CommodityId worst_a = 0;
  CommodityId worst_b = 0;
};

/// Largest |score_pair - (query·row - offset)| over the sample. An empty sample gives 0.
inline IndexDiscrepancy verify_index_consistency(const IndexStore& store, const ModelParams& params,
                                                 const Universe& universe,
                                                 const std::vector<PairExample>& sample) {
  IndexDiscrepancy out;
  for (const auto& p : sample) {
    const EmbeddingPair ea = encode(params, universe.at(p.a));
    const EmbeddingPair eb = encode(params, universe.at(p.b));
    const double direct = score_pair(ea, eb, params).score;
    const QueryVector qv = make_query(ea, store, constant_threshold(params));
    const double via_index = dot(qv.values, store.row(store.position(p.b))) - qv.offset;
    const double diff = std::abs(direct - via_index);
    if (diff > out.max_abs) out = {diff, p.a, p.b};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files

/// JSON header line, then `id v1 ... v(d1+d2)` per row.
inline void write_index(std::ostream& out, const IndexStore& store) {
  nlohmann::ordered_json h;
  h["schema_version"] = kIndexSchemaVersion;
  h["d1"] = store.d1();
  h["d2"] = store.d2();
  h["n"] = store.size();
  out << h.dump() << '\n';
  for (std::size_t i = 0; i < store.size(); ++i) {
    out << store.ids()[i];
    for (double v : store.row(i)) out << ' ' << format_double(v);
    out << '\n';
  }
}

inline IndexStore read_index(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing index header", 1);
  std::size_t d1 = 0, d2 = 0, n = 0;
  try {
    const auto h = nlohmann::ordered_json::parse(line);
    const int version = h.at("schema_version").get<int>();
    if (version != kIndexSchemaVersion) {
      throw VersionError("unsupported index schema_version " + std::to_string(version));
    }
    d1 = h.at("d1").get<std::size_t>();
    d2 = h.at("d2").get<std::size_t>();
    n = h.at("n").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad index header: ") + e.what(), 1);
  }
  std::vector<CommodityId> ids;
  Vec rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::string_view rest(line);
    std::vector<std::string_view> fields;
    while (!rest.empty()) {
      const auto sp = rest.find(' ');
      fields.push_back(rest.substr(0, sp));
      if (sp == std::string_view::npos) break;
      rest.remove_prefix(sp + 1);
    }
    if (fields.size() != 1 + d1 + d2) {
      throw ParseError("expected " + std::to_string(1 + d1 + d2) + " fields, found " +
                           std::to_string(fields.size()),
                       lineno);
    }
    try {
      ids.push_back(parse_int<CommodityId>(fields[0]));
      for (std::size_t i = 1; i < fields.size(); ++i) rows.push_back(parse_double(fields[i]));
    } catch (const UsageError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  if (ids.size() != n) {
    throw ParseError("header promises " + std::to_string(n) + " rows, found " +
                         std::to_string(ids.size()),
                     lineno);
  }
  return IndexStore(d1, d2, std::move(ids), std::move(rows));
}

inline void write_hits_csv(std::ostream& out, const std::vector<Hit>& hits) {
  out << "rank,id,score\n";
  for (std::size_t i = 0; i < hits.size(); ++i) {
    out << (i + 1) << ',' << hits[i].id << ',' << format_double(hits[i].score) << '\n';
  }
}

}  // namespace sat
