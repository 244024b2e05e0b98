#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "sat/data.hpp"
#include "support.hpp"

using namespace sat;
using sat::testing::scratch_dir;
using sat::testing::slurp;
using sat::testing::small_gen;
using sat::testing::small_universe;
using sat::testing::spit;

namespace {

GenConfig medium_gen() {
  GenConfig g;
  g.n_products = 120;
  g.variants_per_product = 6;
  return g;
}

std::set<CommodityId> endpoints(const std::vector<PairExample>& pairs) {
  std::set<CommodityId> ids;
  for (const auto& p : pairs) {
    ids.insert(p.a);
    ids.insert(p.b);
  }
  return ids;
}

}  // namespace

TEST(GenConfig, Defaults) {
  const GenConfig g;
  EXPECT_NO_THROW(g.validate());
  EXPECT_GT(g.category_scale_spread, 0.0);
  EXPECT_FALSE(g.attrs_text_only.empty());
  EXPECT_FALSE(g.attrs_image_only.empty());
  EXPECT_EQ(g.text_vocab(), g.categories + g.key_attrs * g.values_per_attr + g.filler_vocab);
}

TEST(GenConfig, RejectsInvalid) {
  GenConfig g = small_gen();
  g.values_per_attr = 1;
  EXPECT_THROW(g.validate(), UsageError);
  g = small_gen();
  g.attrs_image_only = {0};  // 0 is already text-only
  EXPECT_THROW(g.validate(), UsageError);
  g = small_gen();
  g.category_scale_spread = 1.0;
  EXPECT_THROW(g.validate(), UsageError);
  g = small_gen();
  g.key_attrs = 2;
  g.values_per_attr = 2;
  g.attrs_text_only = {};
  g.attrs_image_only = {};
  EXPECT_THROW(g.validate(), UsageError);  // 4 combinations for 24 products
}

TEST(Universe, Deterministic) {
  EXPECT_EQ(small_universe(3), small_universe(3));
  EXPECT_FALSE(small_universe(3) == small_universe(4));
}

TEST(Universe, SizeAndVariantsShareKeyAttributes) {
  const auto g = small_gen();
  const auto u = small_universe();
  ASSERT_EQ(u.size(), g.n_products * g.variants_per_product);
  std::set<std::vector<int>> products;
  for (const auto& c : u.items()) {
    const auto& first = u.at(c.id - c.id % static_cast<CommodityId>(g.variants_per_product));
    EXPECT_EQ(c.key_attrs, first.key_attrs);
    EXPECT_EQ(c.category, first.category);
    products.insert(c.key_attrs);
  }
  EXPECT_EQ(products.size(), g.n_products);
}

TEST(Universe, NoiselessVariantsShareImageFeatures) {
  GenConfig g = small_gen();
  g.noise_sigma = 0.0;
  g.category_scale_spread = 0.0;
  const auto u = gen_universe(g, seeded_rng(1));
  for (const auto& c : u.items()) {
    const auto& first = u.at(c.id - c.id % static_cast<CommodityId>(g.variants_per_product));
    EXPECT_EQ(c.image_feat, first.image_feat);
  }
}

TEST(Universe, ModalityExclusiveAttributesStayOutOfText) {
  const auto g = small_gen();
  const auto u = small_universe();
  for (const auto& c : u.items()) {
    for (auto a : g.attrs_image_only) {
      for (std::size_t v = 0; v < g.values_per_attr; ++v) {
        EXPECT_EQ(c.text_tokens[g.categories + a * g.values_per_attr + v], 0u);
      }
    }
    for (auto a : g.attrs_text_only) {
      EXPECT_EQ(c.text_tokens[g.categories + a * g.values_per_attr +
                              static_cast<std::size_t>(c.key_attrs[a])],
                1u);
    }
  }
}

TEST(Universe, ImageOnlyAttributeChangesImage) {
  // Two products that differ only in an image-only attribute must have
  // different noiseless images but the same attribute tokens.
  GenConfig g = small_gen();
  g.noise_sigma = 0.0;
  g.filler_tokens = 0;
  const auto u = gen_universe(g, seeded_rng(2));
  const auto a = g.attrs_image_only.front();
  bool found = false;
  for (const auto& x : u.items()) {
    for (const auto& y : u.items()) {
      if (x.category != y.category || x.key_attrs == y.key_attrs) continue;
      auto ka = x.key_attrs, kb = y.key_attrs;
      ka[a] = kb[a] = 0;
      if (ka != kb) continue;
      found = true;
      EXPECT_EQ(x.text_tokens, y.text_tokens);
      EXPECT_NE(x.image_feat, y.image_feat);
    }
  }
  EXPECT_TRUE(found) << "generator produced no image-only siblings";
}

TEST(Universe, DuplicateIdsRejected) {
  auto items = small_universe().items();
  items[1].id = items[0].id;
  EXPECT_THROW(Universe{items}, IntegrityError);
  EXPECT_THROW(small_universe().at(-1), IntegrityError);
}

TEST(Pairs, LabelsSoundAndCountsExact) {
  const auto u = small_universe();
  const auto pairs = sample_pairs(u, 60, 90, 0.8, seeded_rng(1));
  ASSERT_EQ(pairs.size(), 150u);
  std::size_t pos = 0;
  for (const auto& p : pairs) {
    EXPECT_NE(p.a, p.b);
    EXPECT_EQ(p.y == 1, u.at(p.a).key_attrs == u.at(p.b).key_attrs);
    pos += static_cast<std::size_t>(p.y);
  }
  EXPECT_EQ(pos, 60u);
}

TEST(Pairs, Deterministic) {
  const auto u = small_universe();
  EXPECT_EQ(sample_pairs(u, 30, 30, 0.5, seeded_rng(9)), sample_pairs(u, 30, 30, 0.5, seeded_rng(9)));
}

TEST(Pairs, HardNegativesShareCategory) {
  const auto u = gen_universe(medium_gen(), seeded_rng(5));
  std::map<int, std::set<std::vector<int>>> products_per_category;
  for (const auto& c : u.items()) products_per_category[c.category].insert(c.key_attrs);
  const auto pairs = sample_pairs(u, 200, 800, 1.0, seeded_rng(2));
  for (const auto& p : pairs) {
    if (p.y == 1) continue;
    const auto& a = u.at(p.a);
    if (products_per_category[a.category].size() >= 2) {
      EXPECT_EQ(a.category, u.at(p.b).category);
    }
  }
}

TEST(Pairs, UniformNegativesMatchCategoryShare) {
  const auto g = medium_gen();
  const auto u = gen_universe(g, seeded_rng(5));
  std::map<int, double> products_in;
  for (const auto& c : u.items()) products_in[c.category] += 1.0 / static_cast<double>(g.variants_per_product);
  // Oracle: anchor uniform over commodities, partner uniform over the other
  // products.
  const double P = static_cast<double>(g.n_products);
  double expected = 0.0;
  for (const auto& [cat, n] : products_in) expected += (n / P) * (n - 1.0) / (P - 1.0);
  EXPECT_NEAR(expected, 1.0 / static_cast<double>(g.categories), 0.05);

  const std::size_t n_neg = 4000;
  const auto pairs = sample_pairs(u, 100, n_neg, 0.0, seeded_rng(3));
  double same = 0.0;
  for (const auto& p : pairs) {
    if (p.y == 0) same += u.at(p.a).category == u.at(p.b).category;
  }
  const double rate = same / static_cast<double>(n_neg);
  const double sigma = std::sqrt(expected * (1.0 - expected) / static_cast<double>(n_neg));
  EXPECT_NEAR(rate, expected, 3.0 * sigma);
}

TEST(Pairs, RejectsImpossibleRequests) {
  const auto u = small_universe();
  EXPECT_THROW(sample_pairs(u, 100000, 10, 0.5, seeded_rng(1)), UsageError);
  EXPECT_THROW(sample_pairs(u, 10, 10, 1.5, seeded_rng(1)), UsageError);
}

TEST(Split, DisjointDeterministicAndNearTargetRatio) {
  const auto u = gen_universe(medium_gen(), seeded_rng(8));
  const auto pairs = sample_pairs(u, 1500, 1500, 0.8, seeded_rng(8));
  const auto a = split_item_disjoint(pairs, kDefaultSplitRatio, seeded_rng(4));
  const auto b = split_item_disjoint(pairs, kDefaultSplitRatio, seeded_rng(4));
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.val, b.val);

  const auto tr = endpoints(a.train), va = endpoints(a.val);
  for (auto id : tr) EXPECT_EQ(va.count(id), 0u);
  EXPECT_EQ(a.train.size() + a.val.size() + a.dropped, pairs.size());

  const double ratio = static_cast<double>(a.train.size()) / static_cast<double>(a.val.size());
  EXPECT_NEAR(ratio, 5.6, 0.2 * 5.6);
}

TEST(Split, CommodityFractionFormula) {
  // With a fraction r of commodities on the train side, a share r^2 of
  // pairs lands in train and (1-r)^2 in val.
  for (double f : {0.5, 0.7, kDefaultSplitRatio, 0.95}) {
    const double r = commodity_fraction_for(f);
    EXPECT_NEAR(r * r / (r * r + (1 - r) * (1 - r)), f, 1e-12);
  }
  EXPECT_THROW(split_item_disjoint({}, 0.0, seeded_rng(1)), UsageError);
}

TEST(DatasetFiles, UniverseAndPairsRoundTrip) {
  GenConfig g = small_gen();
  g.n_products = 25;  // 100 commodities
  const auto u = gen_universe(g, seeded_rng(1));
  ASSERT_EQ(u.size(), 100u);
  const auto dir = scratch_dir("data_roundtrip");
  write_universe((dir / "u.jsonl").string(), g, u);
  const auto back = read_universe((dir / "u.jsonl").string());
  EXPECT_EQ(back.universe, u);
  EXPECT_EQ(back.config, g);

  const auto pairs = sample_pairs(u, 20, 20, 0.5, seeded_rng(1));
  write_pairs((dir / "p.jsonl").string(), g, pairs);
  EXPECT_EQ(read_pairs((dir / "p.jsonl").string()), pairs);
}

TEST(DatasetFiles, HeaderFieldOrder) {
  const auto dir = scratch_dir("data_header");
  write_universe((dir / "u.jsonl").string(), small_gen(), small_universe());
  const auto text = slurp(dir / "u.jsonl");
  EXPECT_EQ(text.rfind("{\"schema_version\":1,\"kind\":\"universe\",\"params\":{", 0), 0u);
  const auto line2 = text.substr(text.find('\n') + 1, 40);
  EXPECT_EQ(line2.rfind("{\"id\":0,\"category\":", 0), 0u);
}

TEST(DatasetFiles, TruncationNamesTheLine) {
  const auto dir = scratch_dir("data_trunc");
  write_universe((dir / "u.jsonl").string(), small_gen(), small_universe());
  auto text = slurp(dir / "u.jsonl");
  // Keep the header and 10 records, then cut the 11th mid-line.
  std::size_t pos = 0;
  for (int i = 0; i < 11; ++i) pos = text.find('\n', pos) + 1;
  spit(dir / "cut.jsonl", text.substr(0, pos + 15));
  try {
    read_universe((dir / "cut.jsonl").string());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 12u);
  }
  spit(dir / "short.jsonl", text.substr(0, pos));
  EXPECT_THROW(read_universe((dir / "short.jsonl").string()), ParseError);
}

TEST(DatasetFiles, FutureSchemaVersionRejected) {
  const auto dir = scratch_dir("data_version");
  write_universe((dir / "u.jsonl").string(), small_gen(), small_universe());
  auto text = slurp(dir / "u.jsonl");
  text.replace(text.find("\"schema_version\":1"), 18, "\"schema_version\":999");
  spit(dir / "v.jsonl", text);
  EXPECT_THROW(read_universe((dir / "v.jsonl").string()), VersionError);
}

TEST(DatasetFiles, WrongKindAndMissingFile) {
  const auto dir = scratch_dir("data_kind");
  const auto u = small_universe();
  write_pairs((dir / "p.jsonl").string(), small_gen(), sample_pairs(u, 5, 5, 0.5, seeded_rng(1)));
  EXPECT_THROW(read_universe((dir / "p.jsonl").string()), ParseError);
  EXPECT_THROW(read_universe((dir / "absent.jsonl").string()), IoError);
}

TEST(DatasetFiles, BadLabelRejected) {
  const auto dir = scratch_dir("data_label");
  const auto u = small_universe();
  write_pairs((dir / "p.jsonl").string(), small_gen(), sample_pairs(u, 5, 5, 0.5, seeded_rng(1)));
  auto text = slurp(dir / "p.jsonl");
  const auto at = text.find("\"y\":", text.find('\n'));
  text[at + 4] = '7';
  spit(dir / "bad.jsonl", text);
  try {
    read_pairs((dir / "bad.jsonl").string());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}
