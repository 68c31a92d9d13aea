#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "ismallnet/archive.hpp"
#include "ismallnet/data.hpp"
#include "ismallnet/errors.hpp"
#include "ismallnet/png_io.hpp"
#include "test_util.hpp"

namespace ismallnet {
namespace {

namespace fs = std::filesystem;

Sample make_sample(const std::string& id, int h, int w, int seed) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> level(0, 255);
  Sample s{id, GrayImage(h, w), BinaryMask(h, w, 0)};
  for (auto& v : s.image.values()) v = level(rng) / 255.0f;
  for (int r = 2; r < 5; ++r) s.mask(r, 3 + seed % 4) = 1;
  return s;
}

TEST(Dataset, EmptySplitGivesEmptySequence) {
  TempDir dir;
  write_split(dir.path(), "train", {});
  EXPECT_TRUE(load_dataset(dir.path(), "train").empty());
}

TEST(Dataset, LoadsInSplitOrderWithShapes) {
  TempDir dir;
  save_sample(dir.path(), make_sample("b_second", 64, 32, 1));
  save_sample(dir.path(), make_sample("a_first", 64, 32, 2));
  write_split(dir.path(), "train", {"b_second", "a_first"});

  const auto samples = load_dataset(dir.path(), "train", LoadOptions{64, 32});
  ASSERT_EQ(samples.size(), 2u);
  EXPECT_EQ(samples[0].id, "b_second");
  EXPECT_EQ(samples[1].id, "a_first");
  for (const auto& s : samples) {
    EXPECT_EQ(s.image.height(), 64);
    EXPECT_EQ(s.image.width(), 32);
    EXPECT_TRUE(s.image.same_shape(s.mask));
  }
}

TEST(Dataset, ResizesToConfiguredSize) {
  TempDir dir;
  save_sample(dir.path(), make_sample("x", 40, 50, 3));
  write_split(dir.path(), "test", {"x"});
  const auto samples = load_dataset(dir.path(), "test", LoadOptions{64, 64});
  ASSERT_EQ(samples.size(), 1u);
  EXPECT_EQ(samples[0].image.height(), 64);
  EXPECT_EQ(samples[0].mask.width(), 64);
  for (auto v : samples[0].mask.values()) EXPECT_TRUE(v == 0 || v == 1);
  for (auto v : samples[0].image.values()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Dataset, CrlfSplitFilesAreAccepted) {
  TempDir dir;
  save_sample(dir.path(), make_sample("only", 32, 32, 4));
  fs::create_directories(dir.path() / "splits");
  std::ofstream(dir.path() / "splits" / "train.txt") << "only\r\n\r\n";
  EXPECT_EQ(load_dataset(dir.path(), "train", LoadOptions{32, 32}).size(), 1u);
}

TEST(Dataset, MissingMaskNamesTheId) {
  TempDir dir;
  save_sample(dir.path(), make_sample("present", 32, 32, 5));
  fs::remove(dir.path() / "masks" / "present.png");
  write_split(dir.path(), "train", {"present"});
  try {
    load_dataset(dir.path(), "train", LoadOptions{32, 32});
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("present"), std::string::npos);
  }
}

TEST(Dataset, NonBinaryMaskIsDataError) {
  TempDir dir;
  save_sample(dir.path(), make_sample("grey", 32, 32, 6));
  Gray8 bad(32, 32, 0);
  bad(4, 4) = 120;
  write_png_gray8(dir.path() / "masks" / "grey.png", bad);
  write_split(dir.path(), "train", {"grey"});
  EXPECT_THROW(load_dataset(dir.path(), "train", LoadOptions{32, 32}), DataError);
}

TEST(Dataset, MissingSplitFileIsLoadError) {
  TempDir dir;
  EXPECT_THROW(load_dataset(dir.path(), "nope"), LoadError);
}

TEST(Dataset, MaskRoundTripIsLossless) {
  TempDir dir;
  std::mt19937_64 rng(11);
  for (int k = 0; k < 5; ++k) {
    Sample s = make_sample("s" + std::to_string(k), 32, 64, k);
    std::bernoulli_distribution coin(0.3);
    for (auto& v : s.mask.values()) v = coin(rng) ? 1 : 0;
    save_sample(dir.path(), s);
    write_split(dir.path(), "rt", {s.id});
    const auto back = load_dataset(dir.path(), "rt", LoadOptions{32, 64});
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0].mask, s.mask);
  }
}

TEST(Resize, NearestKeepsMasksBinaryAndBilinearKeepsConstants) {
  BinaryMask m(3, 5, 0);
  m(1, 2) = 1;
  const auto up = resize_nearest(m, 32, 32);
  int ones = 0;
  for (auto v : up.values()) {
    EXPECT_TRUE(v == 0 || v == 1);
    ones += v;
  }
  EXPECT_GT(ones, 0);
  const auto flat = resize_bilinear(GrayImage(7, 9, 0.25f), 32, 64);
  for (auto v : flat.values()) EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(Scr, EqualMeansGiveZero) {
  GrayImage img(4, 4);
  BinaryMask mask(4, 4, 0);
  const float values[] = {0.2f, 0.4f, 0.2f, 0.4f};
  for (int i = 0; i < 16; ++i) img.values()[i] = values[i % 4];
  mask(0, 0) = 1;  // 0.2
  mask(0, 1) = 1;  // 0.4 -> target mean 0.3 == background mean 0.3
  EXPECT_NEAR(scr(img, mask), 0.0, 1e-7);
}

TEST(Scr, HandComputedFourByFour) {
  // Background: fourteen pixels at 0.2 and one noise pixel at 0.5.
  // mu_b = 3.3 / 15 = 0.22, sigma_b^2 = (14 * 0.02^2 + 0.28^2) / 15 = 0.0056
  GrayImage img(4, 4, 0.2f);
  BinaryMask mask(4, 4, 0);
  img(3, 3) = 0.5f;
  const double mu_b = 0.22;
  const double sigma_b = std::sqrt(0.0056);
  mask(0, 0) = 1;
  img(0, 0) = static_cast<float>(mu_b + sigma_b);
  EXPECT_NEAR(scr(img, mask), 1.0, 1e-6);
}

TEST(Scr, DomainErrors) {
  GrayImage img(4, 4, 0.3f);
  img(1, 1) = 0.5f;
  EXPECT_THROW(scr(img, BinaryMask(4, 4, 1)), DomainError);
  EXPECT_THROW(scr(img, BinaryMask(4, 4, 0)), DomainError);
  BinaryMask one(4, 4, 0);
  one(1, 1) = 1;
  EXPECT_THROW(scr(GrayImage(4, 4, 0.3f), one), DomainError);
}

TEST(Synth, SameSeedIsBitIdentical) {
  SynthConfig cfg;
  cfg.height = cfg.width = 64;
  cfg.seed = 42;
  const Sample a = synthesize_sample(cfg);
  const Sample b = synthesize_sample(cfg);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.mask, b.mask);
  cfg.seed = 43;
  EXPECT_NE(synthesize_sample(cfg).image, a.image);
}

TEST(Synth, NoTargetsGivesEmptyMask) {
  SynthConfig cfg;
  cfg.height = cfg.width = 64;
  cfg.num_targets = 0;
  const Sample s = synthesize_sample(cfg);
  EXPECT_EQ(count_foreground(s.mask), 0);
  for (auto v : s.image.values()) {
    EXPECT_GE(v, 0.09f);
    EXPECT_LE(v, 0.61f);
  }
}

TEST(Synth, RealizedScrWithinTenPercent) {
  SynthConfig cfg;
  cfg.height = cfg.width = 128;
  cfg.target_scr = 5.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    cfg.seed = seed;
    const Sample s = synthesize_sample(cfg);
    const double measured = scr(s.image, s.mask);
    EXPECT_GE(measured, 4.5) << "seed " << seed;
    EXPECT_LE(measured, 5.5) << "seed " << seed;
  }
}

TEST(Synth, ComponentCountMatchesTargetCount) {
  SynthConfig cfg;
  cfg.height = cfg.width = 96;
  cfg.radius_min = 0.5;
  cfg.radius_max = 6.0;
  for (int n = 0; n <= 5; ++n) {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
      cfg.num_targets = n;
      cfg.seed = seed * 31 + n;
      EXPECT_EQ(label_components(synthesize_sample(cfg).mask).count, n) << "n=" << n << " seed=" << seed;
    }
  }
}

TEST(Synth, SubPixelTargetIsSinglePixel) {
  SynthConfig cfg;
  cfg.height = cfg.width = 64;
  cfg.num_targets = 1;
  cfg.radius_min = cfg.radius_max = 0.5;
  EXPECT_EQ(count_foreground(synthesize_sample(cfg).mask), 1);
}

TEST(Synth, ImpossiblePlacementIsSynthesisError) {
  SynthConfig cfg;
  cfg.height = cfg.width = 32;
  cfg.num_targets = 40;
  cfg.radius_min = cfg.radius_max = 6.0;
  EXPECT_THROW(synthesize_sample(cfg), SynthesisError);
}

TEST(Synth, InvalidConfig) {
  SynthConfig cfg;
  cfg.height = 100;
  EXPECT_THROW(synthesize_sample(cfg), ConfigError);
  cfg.height = 64;
  cfg.radius_min = 0.2;
  EXPECT_THROW(synthesize_sample(cfg), ConfigError);
}

TEST(Synth, SavedSamplesReloadIdentically) {
  TempDir dir;
  SynthConfig cfg;
  cfg.height = cfg.width = 64;
  const auto samples = synthesize_dataset(cfg, 3);
  std::vector<std::string> ids;
  for (const auto& s : samples) {
    save_sample(dir.path(), s);
    ids.push_back(s.id);
  }
  write_split(dir.path(), "train", ids);
  const auto back = load_dataset(dir.path(), "train", LoadOptions{64, 64});
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].mask, samples[i].mask);
    EXPECT_EQ(back[i].image, samples[i].image);
  }
}

TEST(Archive, RoundTripAndDeterministicBytes) {
  TempDir dir;
  Archive a;
  a.manifest = "{\"k\":1}";
  a.arrays["w"] = NamedArray{{2, 3}, {1, 2, 3, 4, 5, 6}};
  a.arrays["b"] = NamedArray{{1}, {-0.5f}};
  save_archive(dir.path() / "a.bin", a);
  save_archive(dir.path() / "b.bin", a);
  const Archive back = load_archive(dir.path() / "a.bin");
  EXPECT_EQ(back.manifest, a.manifest);
  EXPECT_EQ(back.arrays.at("w").values, a.arrays.at("w").values);
  EXPECT_EQ(back.arrays.at("w").shape, a.arrays.at("w").shape);
  EXPECT_EQ(read_bytes(dir.path() / "a.bin"), read_bytes(dir.path() / "b.bin"));
  a.arrays["bad"] = NamedArray{{4}, {1}};
  EXPECT_THROW(save_archive(dir.path() / "c.bin", a), ShapeError);
}

TEST(Components, EightVersusFourConnectivity) {
  BinaryMask m(3, 3, 0);
  m(0, 0) = m(1, 1) = m(2, 2) = 1;
  EXPECT_EQ(label_components(m, true).count, 1);
  EXPECT_EQ(label_components(m, false).count, 3);
}

}  // namespace
}  // namespace ismallnet
