#pragma once

#include <cstdint>
#include <vector>

#include "sat/numerics.hpp"

namespace sat {

using CommodityId = std::int64_t;

/// One item: ground-truth attributes plus the two observable modalities.
struct Commodity {
  CommodityId id = 0;
  int category = 0;
  std::vector<int> key_attrs;
  std::vector<std::uint32_t> text_tokens;  // dense count vector, length text_vocab
  Vec image_feat;

  friend bool operator==(const Commodity&, const Commodity&) = default;
};

/// y = 1 iff the two commodities share every key attribute.
struct PairExample {
  CommodityId a = 0;
  CommodityId b = 0;
  int y = 0;

  friend bool operator==(const PairExample&, const PairExample&) = default;
};

}  // namespace sat
