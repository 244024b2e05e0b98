#pragma once

// Synthetic commodity universe and pair datasets.
//
// Each abstract product has a category and K key attributes; its variants
// (the commodities) share those attributes and differ only in filler text
// tokens and image noise. Some attributes are visible only in text, some only
// in the image, the rest in both. Image features carry a per-category scale,
// so raw inner products have category-dependent magnitude.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sat/commodity.hpp"
#include "sat/errors.hpp"
#include "sat/format.hpp"
#include "sat/numerics.hpp"

namespace sat {

inline constexpr int kDatasetSchemaVersion = 1;

struct GenConfig {
  std::size_t n_products = 350;
  std::size_t variants_per_product = 8;
  std::size_t categories = 8;
  std::size_t key_attrs = 6;
  std::size_t values_per_attr = 3;
  std::vector<std::size_t> attrs_text_only{0, 1};
  std::vector<std::size_t> attrs_image_only{2, 3};
  std::size_t image_dim = 24;
  std::size_t filler_vocab = 24;
  std::size_t filler_tokens = 3;
  double noise_sigma = 0.15;
  double category_scale_spread = 0.2;
  /// Probability that a new product is a one-attribute mutation of an
  /// earlier product in the same category (keeps hard negatives available).
  double sibling_fraction = 0.6;
  std::uint64_t seed = 0;

  std::size_t text_vocab() const { return categories + key_attrs * values_per_attr + filler_vocab; }

  bool text_visible(std::size_t attr) const {
    return std::find(attrs_image_only.begin(), attrs_image_only.end(), attr) ==
           attrs_image_only.end();
  }
  bool image_visible(std::size_t attr) const {
    return std::find(attrs_text_only.begin(), attrs_text_only.end(), attr) ==
           attrs_text_only.end();
  }

  void validate() const {
    if (n_products < 2) throw UsageError("gen: n_products must be >= 2");
    if (variants_per_product < 1) throw UsageError("gen: variants_per_product must be >= 1");
    if (categories < 1) throw UsageError("gen: categories must be >= 1");
    if (key_attrs < 1) throw UsageError("gen: key_attrs must be >= 1");
    if (values_per_attr < 2) throw UsageError("gen: values_per_attr must be >= 2");
    if (image_dim < 1) throw UsageError("gen: image_dim must be >= 1");
    if (filler_tokens > 0 && filler_vocab < 1) {
      throw UsageError("gen: filler_tokens > 0 needs filler_vocab >= 1");
    }
    if (!(noise_sigma >= 0.0)) throw UsageError("gen: noise_sigma must be >= 0");
    if (!(category_scale_spread >= 0.0 && category_scale_spread < 1.0)) {
      throw UsageError("gen: category_scale_spread must be in [0, 1)");
    }
    if (!(sibling_fraction >= 0.0 && sibling_fraction <= 1.0)) {
      throw UsageError("gen: sibling_fraction must be in [0, 1]");
    }
    for (auto a : attrs_text_only) {
      if (a >= key_attrs) throw UsageError("gen: attrs_text_only index out of range");
    }
    for (auto a : attrs_image_only) {
      if (a >= key_attrs) throw UsageError("gen: attrs_image_only index out of range");
      if (!text_visible(a) && !image_visible(a)) {
        throw UsageError("gen: attribute " + std::to_string(a) + " is both text-only and image-only");
      }
    }
    const double combos = std::pow(static_cast<double>(values_per_attr),
                                   static_cast<double>(key_attrs));
    if (combos < 2.0 * static_cast<double>(n_products)) {
      throw UsageError("gen: too few attribute combinations for n_products distinct products");
    }
  }

  friend bool operator==(const GenConfig&, const GenConfig&) = default;
};

inline nlohmann::ordered_json to_json(const GenConfig& c) {
  nlohmann::ordered_json j;
  j["n_products"] = c.n_products;
  j["variants_per_product"] = c.variants_per_product;
  j["categories"] = c.categories;
  j["key_attrs"] = c.key_attrs;
  j["values_per_attr"] = c.values_per_attr;
  j["attrs_text_only"] = c.attrs_text_only;
  j["attrs_image_only"] = c.attrs_image_only;
  j["image_dim"] = c.image_dim;
  j["filler_vocab"] = c.filler_vocab;
  j["filler_tokens"] = c.filler_tokens;
  j["noise_sigma"] = c.noise_sigma;
  j["category_scale_spread"] = c.category_scale_spread;
  j["sibling_fraction"] = c.sibling_fraction;
  j["seed"] = c.seed;
  j["text_vocab"] = c.text_vocab();
  return j;
}

inline GenConfig gen_config_from_json(const nlohmann::ordered_json& j) {
  GenConfig c;
  c.n_products = j.at("n_products").get<std::size_t>();
  c.variants_per_product = j.at("variants_per_product").get<std::size_t>();
  c.categories = j.at("categories").get<std::size_t>();
  c.key_attrs = j.at("key_attrs").get<std::size_t>();
  c.values_per_attr = j.at("values_per_attr").get<std::size_t>();
  c.attrs_text_only = j.at("attrs_text_only").get<std::vector<std::size_t>>();
  c.attrs_image_only = j.at("attrs_image_only").get<std::vector<std::size_t>>();
  c.image_dim = j.at("image_dim").get<std::size_t>();
  c.filler_vocab = j.at("filler_vocab").get<std::size_t>();
  c.filler_tokens = j.at("filler_tokens").get<std::size_t>();
  c.noise_sigma = j.at("noise_sigma").get<double>();
  c.category_scale_spread = j.at("category_scale_spread").get<double>();
  c.sibling_fraction = j.at("sibling_fraction").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

/// Commodities indexed by id, stored in ascending id order.
class Universe {
 public:
  Universe() = default;
  explicit Universe(std::vector<Commodity> items) : items_(std::move(items)) {
    std::sort(items_.begin(), items_.end(),
              [](const Commodity& a, const Commodity& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < items_.size(); ++i) {
      if (!index_.emplace(items_[i].id, i).second) {
        throw IntegrityError("duplicate commodity id " + std::to_string(items_[i].id));
      }
    }
  }

  const std::vector<Commodity>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool contains(CommodityId id) const { return index_.count(id) != 0; }

  const Commodity& at(CommodityId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw IntegrityError("unknown commodity id " + std::to_string(id));
    return items_[it->second];
  }

  friend bool operator==(const Universe& a, const Universe& b) { return a.items_ == b.items_; }

 private:
  std::vector<Commodity> items_;
  std::unordered_map<CommodityId, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Generation

inline Universe gen_universe(const GenConfig& cfg, Rng rng) {
  cfg.validate();
  const std::size_t K = cfg.key_attrs;
  const std::size_t V = cfg.values_per_attr;
  const std::size_t D = cfg.image_dim;

  Rng code_rng = rng.substream("codebook");
  const double unit = 1.0 / std::sqrt(static_cast<double>(D));
  auto draw_code = [&] {
    Vec v(D);
    for (double& x : v) x = code_rng.normal() * unit;
    return v;
  };
  std::vector<Vec> category_code(cfg.categories);
  for (auto& c : category_code) c = draw_code();
  std::vector<std::vector<Vec>> attr_code(K, std::vector<Vec>(V));
  for (auto& per_attr : attr_code) {
    for (auto& c : per_attr) c = draw_code();
  }
  Rng scale_rng = rng.substream("category_scale");
  Vec category_scale(cfg.categories);
  for (double& s : category_scale) {
    s = scale_rng.uniform(1.0 - cfg.category_scale_spread, 1.0 + cfg.category_scale_spread);
  }

  // Products: distinct attribute tuples, a share of them one-attribute
  // siblings of an earlier product in the same category.
  struct Product {
    int category;
    std::vector<int> attrs;
  };
  Rng prod_rng = rng.substream("products");
  std::vector<Product> products;
  std::set<std::vector<int>> seen;
  std::vector<std::vector<std::size_t>> by_category(cfg.categories);
  while (products.size() < cfg.n_products) {
    Product p;
    p.category = static_cast<int>(prod_rng.below(cfg.categories));
    const auto& peers = by_category[static_cast<std::size_t>(p.category)];
    if (!peers.empty() && prod_rng.uniform() < cfg.sibling_fraction) {
      p.attrs = products[peers[prod_rng.below(peers.size())]].attrs;
      const std::size_t a = prod_rng.below(K);
      const int shift = 1 + static_cast<int>(prod_rng.below(V - 1));
      p.attrs[a] = (p.attrs[a] + shift) % static_cast<int>(V);
    } else {
      p.attrs.resize(K);
      for (auto& v : p.attrs) v = static_cast<int>(prod_rng.below(V));
    }
    if (!seen.insert(p.attrs).second) continue;
    by_category[static_cast<std::size_t>(p.category)].push_back(products.size());
    products.push_back(std::move(p));
  }

  const std::size_t vocab = cfg.text_vocab();
  const std::size_t filler_base = cfg.categories + K * V;
  Rng variant_root = rng.substream("variants");
  std::vector<Commodity> items;
  items.reserve(cfg.n_products * cfg.variants_per_product);
  for (std::size_t pi = 0; pi < products.size(); ++pi) {
    const Product& prod = products[pi];
    const auto cat = static_cast<std::size_t>(prod.category);
    Rng vr = variant_root.substream(static_cast<std::uint64_t>(pi));

    Vec clean = category_code[cat];
    for (std::size_t a = 0; a < K; ++a) {
      if (!cfg.image_visible(a)) continue;
      const auto& code = attr_code[a][static_cast<std::size_t>(prod.attrs[a])];
      for (std::size_t d = 0; d < D; ++d) clean[d] += code[d];
    }

    for (std::size_t v = 0; v < cfg.variants_per_product; ++v) {
      Commodity c;
      c.id = static_cast<CommodityId>(items.size());
      c.category = prod.category;
      c.key_attrs = prod.attrs;
      c.text_tokens.assign(vocab, 0);
      c.text_tokens[cat] += 1;
      for (std::size_t a = 0; a < K; ++a) {
        if (cfg.text_visible(a)) {
          c.text_tokens[cfg.categories + a * V + static_cast<std::size_t>(prod.attrs[a])] += 1;
        }
      }
      for (std::size_t f = 0; f < cfg.filler_tokens; ++f) {
        c.text_tokens[filler_base + vr.below(cfg.filler_vocab)] += 1;
      }
      c.image_feat.resize(D);
      for (std::size_t d = 0; d < D; ++d) {
        const double noise = cfg.noise_sigma > 0.0 ? cfg.noise_sigma * vr.normal() : 0.0;
        c.image_feat[d] = category_scale[cat] * (clean[d] + noise);
      }
      items.push_back(std::move(c));
    }
  }
  return Universe(std::move(items));
}

inline int label_for(const Commodity& a, const Commodity& b) {
  return a.key_attrs == b.key_attrs ? 1 : 0;
}

namespace detail {

inline std::size_t hamming(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i] ? 1 : 0;
  return d;
}

struct ProductGroup {
  int category = 0;
  std::vector<int> attrs;
  std::vector<CommodityId> members;  // ascending id
};

inline std::vector<ProductGroup> group_products(const Universe& u) {
  std::map<std::vector<int>, std::size_t> lookup;
  std::vector<ProductGroup> groups;
  for (const auto& c : u.items()) {
    auto [it, inserted] = lookup.emplace(c.key_attrs, groups.size());
    if (inserted) groups.push_back({c.category, c.key_attrs, {}});
    groups[it->second].members.push_back(c.id);
  }
  return groups;
}

}  // namespace detail

/// Positives are two variants of one product. Hard negatives pair a
/// commodity with a same-category product whose key attributes differ in
/// one position (or the closest such product when none exists); the rest of
/// the negatives are uniform over other products.
inline std::vector<PairExample> sample_pairs(const Universe& universe, std::size_t n_pos,
                                             std::size_t n_neg, double hard_fraction, Rng rng) {
  if (!(hard_fraction >= 0.0 && hard_fraction <= 1.0)) {
    throw UsageError("sample_pairs: hard_fraction must be in [0, 1]");
  }
  const auto groups = detail::group_products(universe);
  if (groups.size() < 2) throw UsageError("sample_pairs: universe needs >= 2 products");

  std::vector<std::pair<CommodityId, CommodityId>> positive_pool;
  for (const auto& g : groups) {
    for (std::size_t i = 0; i < g.members.size(); ++i) {
      for (std::size_t j = i + 1; j < g.members.size(); ++j) {
        positive_pool.emplace_back(g.members[i], g.members[j]);
      }
    }
  }
  if (n_pos > positive_pool.size()) {
    throw UsageError("sample_pairs: requested " + std::to_string(n_pos) + " positives but only " +
                     std::to_string(positive_pool.size()) + " exist");
  }

  // Hard partner candidates per product: same category at minimal Hamming
  // distance; products alone in their category fall back to the nearest
  // product anywhere.
  std::vector<std::vector<std::size_t>> hard_candidates(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    std::size_t best_same = SIZE_MAX, best_any = SIZE_MAX;
    std::vector<std::size_t> same, any;
    for (std::size_t j = 0; j < groups.size(); ++j) {
      if (i == j) continue;
      const std::size_t d = detail::hamming(groups[i].attrs, groups[j].attrs);
      if (groups[j].category == groups[i].category) {
        if (d < best_same) {
          best_same = d;
          same.clear();
        }
        if (d == best_same) same.push_back(j);
      }
      if (d < best_any) {
        best_any = d;
        any.clear();
      }
      if (d == best_any) any.push_back(j);
    }
    hard_candidates[i] = same.empty() ? std::move(any) : std::move(same);
  }
  std::unordered_map<CommodityId, std::size_t> group_of;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (auto id : groups[g].members) group_of[id] = g;
  }

  Rng pos_rng = rng.substream("positives");
  Rng neg_rng = rng.substream("negatives");
  Rng order_rng = rng.substream("order");

  std::vector<PairExample> out;
  out.reserve(n_pos + n_neg);
  // Partial Fisher-Yates: the first n_pos slots become a uniform sample.
  for (std::size_t i = 0; i < n_pos; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(pos_rng.below(positive_pool.size() - i));
    std::swap(positive_pool[i], positive_pool[j]);
    out.push_back({positive_pool[i].first, positive_pool[i].second, 1});
  }

  const auto n_hard = static_cast<std::size_t>(std::llround(hard_fraction * static_cast<double>(n_neg)));
  std::set<std::pair<CommodityId, CommodityId>> used;
  const auto& items = universe.items();
  const std::size_t max_attempts = 100 * (n_neg + 1);
  std::size_t attempts = 0;
  for (std::size_t k = 0; k < n_neg; ++k) {
    for (;;) {
      if (++attempts > max_attempts) {
        throw UsageError("sample_pairs: could not draw " + std::to_string(n_neg) +
                         " distinct negative pairs");
      }
      const CommodityId a = items[neg_rng.below(items.size())].id;
      const std::size_t ga = group_of.at(a);
      std::size_t gb;
      if (k < n_hard) {
        const auto& cand = hard_candidates[ga];
        gb = cand[neg_rng.below(cand.size())];
      } else {
        gb = static_cast<std::size_t>(neg_rng.below(groups.size() - 1));
        if (gb >= ga) ++gb;
      }
      const auto& members = groups[gb].members;
      const CommodityId b = members[neg_rng.below(members.size())];
      const auto key = std::minmax(a, b);
      if (!used.insert(key).second) continue;
      out.push_back({a, b, 0});
      break;
    }
  }

  order_rng.shuffle(out);
  for (auto& p : out) {
    if (order_rng.below(2) == 1) std::swap(p.a, p.b);
    p.y = label_for(universe.at(p.a), universe.at(p.b));
  }
  return out;
}

struct SplitResult {
  std::vector<PairExample> train;
  std::vector<PairExample> val;
  std::size_t dropped = 0;
};

/// Fraction of commodities assigned to train so that, with uniform pair
/// endpoints, a share `pair_ratio` of the surviving pairs is train.
inline double commodity_fraction_for(double pair_ratio) {
  const double a = std::sqrt(pair_ratio);
  const double b = std::sqrt(1.0 - pair_ratio);
  return a / (a + b);
}

/// Train:val of about 5.6:1 by pair count.
inline constexpr double kDefaultSplitRatio = 5.6 / 6.6;

/// Partitions the commodities, then keeps each pair on the side that holds
/// both of its endpoints. Straddling pairs are dropped.
inline SplitResult split_item_disjoint(const std::vector<PairExample>& pairs, double ratio,
                                       Rng rng) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw UsageError("split: ratio must be in (0, 1)");
  std::vector<CommodityId> ids;
  for (const auto& p : pairs) {
    ids.push_back(p.a);
    ids.push_back(p.b);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  rng.shuffle(ids);
  const auto n_train =
      static_cast<std::size_t>(std::llround(commodity_fraction_for(ratio) * static_cast<double>(ids.size())));
  std::unordered_map<CommodityId, bool> in_train;
  for (std::size_t i = 0; i < ids.size(); ++i) in_train[ids[i]] = i < n_train;

  SplitResult out;
  for (const auto& p : pairs) {
    const bool a = in_train.at(p.a), b = in_train.at(p.b);
    if (a && b) {
      out.train.push_back(p);
    } else if (!a && !b) {
      out.val.push_back(p);
    } else {
      ++out.dropped;
    }
  }
  if (out.train.empty() || out.val.empty()) {
    throw UsageError("split: ratio " + format_double(ratio) + " leaves an empty side");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files: one JSON object per line; line 1 is the header.

namespace detail {

inline nlohmann::ordered_json dataset_header(std::string_view kind, const GenConfig& cfg,
                                             std::size_t count) {
  nlohmann::ordered_json h;
  h["schema_version"] = kDatasetSchemaVersion;
  h["kind"] = kind;
  h["params"] = to_json(cfg);
  h["count"] = count;
  return h;
}

struct Header {
  GenConfig params;
  std::size_t count = 0;
};

inline nlohmann::ordered_json parse_line(const std::string& line, std::size_t lineno) {
  try {
    return nlohmann::ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed record: ") + e.what(), lineno);
  }
}

inline Header read_header(std::istream& in, std::string_view kind) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  const auto h = parse_line(line, 1);
  try {
    const int version = h.at("schema_version").get<int>();
    if (version != kDatasetSchemaVersion) {
      throw VersionError("unsupported schema_version " + std::to_string(version) +
                         " (expected " + std::to_string(kDatasetSchemaVersion) + ")");
    }
    if (h.at("kind").get<std::string>() != kind) {
      throw ParseError("expected kind '" + std::string(kind) + "', found '" +
                           h.at("kind").get<std::string>() + "'",
                       1);
    }
    return {gen_config_from_json(h.at("params")), h.at("count").get<std::size_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad header: ") + e.what(), 1);
  }
}

}  // namespace detail

inline void write_universe(const std::string& path, const GenConfig& cfg, const Universe& u) {
  auto out = open_output(path);
  out << detail::dataset_header("universe", cfg, u.size()).dump() << '\n';
  for (const auto& c : u.items()) {
    nlohmann::ordered_json j;
    j["id"] = c.id;
    j["category"] = c.category;
    j["key_attrs"] = c.key_attrs;
    auto sparse = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < c.text_tokens.size(); ++t) {
      if (c.text_tokens[t] != 0) sparse.push_back({t, c.text_tokens[t]});
    }
    j["text_tokens"] = std::move(sparse);
    j["image_feat"] = c.image_feat;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

struct UniverseFile {
  GenConfig config;
  Universe universe;
};

inline UniverseFile read_universe(const std::string& path) {
  auto in = open_input(path);
  const auto header = detail::read_header(in, "universe");
  const std::size_t vocab = header.params.text_vocab();
  std::vector<Commodity> items;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto j = detail::parse_line(line, lineno);
    try {
      Commodity c;
      c.id = j.at("id").get<CommodityId>();
      c.category = j.at("category").get<int>();
      c.key_attrs = j.at("key_attrs").get<std::vector<int>>();
      c.text_tokens.assign(vocab, 0);
      for (const auto& entry : j.at("text_tokens")) {
        const auto tok = entry.at(0).get<std::size_t>();
        if (tok >= vocab) throw ParseError("token index out of range", lineno);
        c.text_tokens[tok] = entry.at(1).get<std::uint32_t>();
      }
      c.image_feat = j.at("image_feat").get<Vec>();
      if (c.key_attrs.size() != header.params.key_attrs ||
          c.image_feat.size() != header.params.image_dim) {
        throw ParseError("record dimensions disagree with header", lineno);
      }
      items.push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad commodity record: ") + e.what(), lineno);
    }
  }
  if (items.size() != header.count) {
    throw ParseError("truncated file: header promises " + std::to_string(header.count) +
                         " records, found " + std::to_string(items.size()),
                     lineno);
  }
  return {header.params, Universe(std::move(items))};
}

inline void write_pairs(const std::string& path, const GenConfig& cfg,
                        const std::vector<PairExample>& pairs) {
  auto out = open_output(path);
  out << detail::dataset_header("pairs", cfg, pairs.size()).dump() << '\n';
  for (const auto& p : pairs) {
    nlohmann::ordered_json j;
    j["a"] = p.a;
    j["b"] = p.b;
    j["y"] = p.y;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline std::vector<PairExample> read_pairs(const std::string& path) {
  auto in = open_input(path);
  const auto header = detail::read_header(in, "pairs");
  std::vector<PairExample> pairs;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto j = detail::parse_line(line, lineno);
    try {
      PairExample p{j.at("a").get<CommodityId>(), j.at("b").get<CommodityId>(),
                    j.at("y").get<int>()};
      if (p.y != 0 && p.y != 1) throw ParseError("label must be 0 or 1", lineno);
      pairs.push_back(p);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad pair record: ") + e.what(), lineno);
    }
  }
  if (pairs.size() != header.count) {
    throw ParseError("truncated file: header promises " + std::to_string(header.count) +
                         " records, found " + std::to_string(pairs.size()),
                     lineno);
  }
  return pairs;
}

}  // namespace sat
