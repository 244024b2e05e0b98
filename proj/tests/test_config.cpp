#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "sat/config.hpp"

using namespace sat;

TEST(Config, DefaultsEchoAndReparseIdentically) {
  const RunConfig cfg;
  std::stringstream out;
  write_config(out, cfg);
  std::istringstream in(out.str());
  const auto back = parse_config(in);
  std::stringstream again;
  write_config(again, back);
  EXPECT_EQ(out.str(), again.str());
  EXPECT_EQ(back.gen, cfg.gen);
  EXPECT_EQ(back.train.model, cfg.train.model);
}

TEST(Config, EveryKeyAppearsOnce) {
  const auto keys = config_keys();
  EXPECT_EQ(std::set<std::string>(keys.begin(), keys.end()).size(), keys.size());
  std::stringstream out;
  write_config(out, RunConfig{});
  std::size_t lines = 0;
  for (std::string line; std::getline(out, line);) ++lines;
  EXPECT_EQ(lines, keys.size());
}

TEST(Config, NonDefaultValuesRoundTripExactly) {
  RunConfig cfg;
  cfg.seed = 123456789012345ULL;
  cfg.gen.noise_sigma = 0.1 + 0.2;  // not representable as a short decimal
  cfg.gen.attrs_text_only = {0, 4};
  cfg.gen.attrs_image_only = {};
  cfg.train.lr_init = 1.0 / 3.0;
  cfg.train.model.variant = Variant::lt;
  cfg.train.model.modality = Modality::image;
  cfg.ablate_seeds = {9, 8};
  std::stringstream out;
  write_config(out, cfg);
  std::istringstream in(out.str());
  const auto back = parse_config(in);
  EXPECT_EQ(back.seed, cfg.seed);
  EXPECT_EQ(back.gen, cfg.gen);
  EXPECT_EQ(back.train.lr_init, cfg.train.lr_init);
  EXPECT_EQ(back.train.model, cfg.train.model);
  EXPECT_EQ(back.ablate_seeds, cfg.ablate_seeds);
}

TEST(Config, CommentsBlankLinesAndWhitespace) {
  std::istringstream in("# header\n\n  steps = 42  # trailing\nvariant=lt\r\n");
  const auto cfg = parse_config(in);
  EXPECT_EQ(cfg.train.steps, 42);
  EXPECT_EQ(cfg.train.model.variant, Variant::lt);
}

TEST(Config, UnknownKeyRejectedWithLine) {
  std::istringstream in("steps=10\nlearning_rate=0.1\n");
  try {
    parse_config(in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
  }
}

TEST(Config, BadValuesRejected) {
  for (const char* text : {"steps=ten\n", "variant=fast\n", "noise_sigma=\n", "seed=-1\n",
                           "attrs_text_only=0,,1\n", "no_equals_sign\n"}) {
    std::istringstream in(text);
    EXPECT_THROW(parse_config(in), ParseError) << text;
  }
}

TEST(Config, OverridesApplyOnTopOfFile) {
  std::istringstream in("steps=10\nseed=4\n");
  auto cfg = parse_config(in);
  apply_assignment(cfg, "steps=20");
  EXPECT_EQ(cfg.train.steps, 20);
  EXPECT_EQ(cfg.seed, 4u);
  EXPECT_THROW(apply_assignment(cfg, "nope=1"), UsageError);
}

TEST(Config, SeedFlowsIntoGenerationAndTraining) {
  RunConfig cfg;
  cfg.seed = 77;
  EXPECT_EQ(cfg.gen_config().seed, 77u);
  const auto tc = cfg.train_config(12, 5);
  EXPECT_EQ(tc.seed, 77u);
  EXPECT_EQ(tc.model.text_vocab, 12u);
  EXPECT_EQ(tc.model.image_dim, 5u);
}

TEST(Config, MissingFileIsIoError) {
  EXPECT_THROW(load_config("/nonexistent/dir/cfg.txt"), IoError);
}
