#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "sat/data.hpp"
#include "sat/model.hpp"

namespace sat::testing {

/// A few dozen commodities; fast enough for per-test generation.
inline GenConfig small_gen(std::uint64_t seed = 7) {
  GenConfig g;
  g.n_products = 24;
  g.variants_per_product = 4;
  g.categories = 3;
  g.seed = seed;
  return g;
}

inline Universe small_universe(std::uint64_t seed = 7) {
  return gen_universe(small_gen(seed), seeded_rng(seed));
}

inline ModelConfig tiny_model(const GenConfig& g, Variant v = Variant::sat,
                              Modality m = Modality::both) {
  ModelConfig c;
  c.d1 = 4;
  c.d2 = 4;
  c.hidden_dim = 8;
  c.text_vocab = g.text_vocab();
  c.image_dim = g.image_dim;
  c.variant = v;
  c.modality = m;
  return c;
}

/// Fresh scratch directory, removed first if it exists.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sat_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace sat::testing
