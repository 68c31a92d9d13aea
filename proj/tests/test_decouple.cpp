#include <gtest/gtest.h>

#include <random>

#include "ismallnet/decouple.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace ismallnet {
namespace {

BinaryMask square(int size, int side, int top, int left) {
  BinaryMask m(size, size, 0);
  for (int r = top; r < top + side; ++r) {
    for (int c = left; c < left + side; ++c) m(r, c) = 1;
  }
  return m;
}

TEST(DistanceTransform, AllBackgroundIsZero) {
  const RealMap d = distance_to_background(BinaryMask(7, 5, 0));
  for (double v : d.values()) EXPECT_EQ(v, 0.0);
}

TEST(DistanceTransform, IsolatedPixelIsOne) {
  BinaryMask m(5, 5, 0);
  m(2, 2) = 1;
  EXPECT_DOUBLE_EQ(distance_to_background(m)(2, 2), 1.0);
}

TEST(DistanceTransform, SquareMatchesBruteForce) {
  const BinaryMask m = square(9, 5, 2, 2);
  const RealMap fast = distance_to_background(m);
  const RealMap slow = oracle::brute_force_distance(m);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(fast.values()[i], slow.values()[i], 1e-12);
  EXPECT_DOUBLE_EQ(fast(4, 4), 3.0);
}

TEST(DistanceTransform, AllForegroundUsesSentinel) {
  const RealMap d = distance_to_background(BinaryMask(6, 9, 1));
  for (double v : d.values()) EXPECT_EQ(v, 9.0);
}

TEST(DistanceTransform, RandomMasksMatchBruteForce) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> side(1, 16), comps(0, 4);
  for (int trial = 0; trial < 60; ++trial) {
    const BinaryMask m = oracle::random_mask(rng, side(rng), side(rng), comps(rng));
    const RealMap fast = distance_to_background(m);
    const RealMap slow = oracle::brute_force_distance(m);
    for (std::size_t i = 0; i < m.size(); ++i) ASSERT_NEAR(fast.values()[i], slow.values()[i], 1e-9);
  }
}

TEST(Decouple, EmptyMask) {
  const DecoupledLabel l = decouple(BinaryMask(8, 8, 0));
  for (std::size_t i = 0; i < l.gt.size(); ++i) {
    EXPECT_EQ(l.interior.values()[i], 0.0);
    EXPECT_EQ(l.boundary.values()[i], 0.0);
  }
}

TEST(Decouple, SinglePixelTargetIsAllInterior) {
  BinaryMask m(8, 8, 0);
  m(3, 4) = 1;
  const DecoupledLabel l = decouple(m);
  EXPECT_DOUBLE_EQ(l.interior(3, 4), 1.0);
  EXPECT_DOUBLE_EQ(l.boundary(3, 4), 0.0);
}

TEST(Decouple, PerComponentNormalization) {
  BinaryMask m = square(32, 3, 2, 2);
  for (int r = 12; r < 21; ++r) {
    for (int c = 14; c < 23; ++c) m(r, c) = 1;
  }
  const DecoupledLabel l = decouple(m);
  // Brute-force per-component peak: centre of the 3x3 square has d = 2, of the 9x9 square d = 5.
  const RealMap d = oracle::brute_force_distance(m);
  EXPECT_DOUBLE_EQ(d(3, 3), 2.0);
  EXPECT_DOUBLE_EQ(d(16, 18), 5.0);
  EXPECT_DOUBLE_EQ(l.interior(3, 3), 1.0);
  EXPECT_DOUBLE_EQ(l.interior(16, 18), 1.0);
  EXPECT_DOUBLE_EQ(l.interior(2, 2), 0.5);
  EXPECT_DOUBLE_EQ(l.interior(12, 14), 0.2);
  EXPECT_DOUBLE_EQ(l.boundary(12, 14), 0.8);
}

TEST(Decouple, ReconstructionIdentityAndSupport) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> side(8, 64), comps(0, 5);
  for (int trial = 0; trial < 100; ++trial) {
    const BinaryMask m = oracle::random_mask(rng, side(rng), side(rng), comps(rng));
    const DecoupledLabel l = decouple(m);
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double in = l.interior.values()[i], bd = l.boundary.values()[i];
      ASSERT_LE(std::abs(in + bd - m.values()[i]), 1e-6);
      ASSERT_GE(in, 0.0);
      ASSERT_LE(in, 1.0);
      ASSERT_GE(bd, 0.0);
      if (!m.values()[i]) {
        ASSERT_EQ(in, 0.0);
        ASSERT_EQ(bd, 0.0);
      } else {
        ASSERT_GT(in, 0.0);  // interior shares gt's support
      }
    }
  }
}

TEST(Decouple, TranslationEquivariance) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const BinaryMask base = oracle::random_mask(rng, 24, 24, 3);
    BinaryMask padded(40, 40, 0), shifted(40, 40, 0);
    for (int r = 0; r < 24; ++r) {
      for (int c = 0; c < 24; ++c) {
        padded(r + 4, c + 4) = base(r, c);
        shifted(r + 11, c + 9) = base(r, c);
      }
    }
    const DecoupledLabel a = decouple(padded), b = decouple(shifted);
    for (int r = 0; r < 24; ++r) {
      for (int c = 0; c < 24; ++c) {
        ASSERT_DOUBLE_EQ(a.interior(r + 4, c + 4), b.interior(r + 11, c + 9));
        ASSERT_DOUBLE_EQ(a.boundary(r + 4, c + 4), b.boundary(r + 11, c + 9));
      }
    }
  }
}

TEST(Decouple, InteriorRisesTowardsTheCentreOfConvexTargets) {
  BinaryMask m(41, 41, 0);
  for (int r = 0; r < 41; ++r) {
    for (int c = 0; c < 41; ++c) m(r, c) = std::hypot(r - 20, c - 20) <= 12.0;
  }
  const DecoupledLabel l = decouple(m);
  // Straight paths from border pixels on the 4 axes and diagonals to the centre.
  const int dirs[8][2] = {{0, 1}, {1, 0}, {0, -1}, {-1, 0}, {1, 1}, {-1, -1}, {1, -1}, {-1, 1}};
  for (const auto& d : dirs) {
    int steps = 0;
    while (m(20 + (steps + 1) * d[0], 20 + (steps + 1) * d[1])) ++steps;
    double prev = -1.0;
    for (int s = steps; s >= 0; --s) {
      const double v = l.interior(20 + s * d[0], 20 + s * d[1]);
      ASSERT_GE(v, prev);
      prev = v;
    }
    EXPECT_DOUBLE_EQ(prev, 1.0);
  }
}

TEST(Decouple, CacheRoundTrip) {
  TempDir dir;
  std::mt19937_64 rng(9);
  const BinaryMask m = oracle::random_mask(rng, 32, 48, 3);
  const DecoupledLabel l = decouple(m);
  save_decoupled(dir.path() / "x.bin", l);
  const DecoupledLabel back = load_decoupled(dir.path() / "x.bin", m);
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_NEAR(back.interior.values()[i], l.interior.values()[i], 1e-7);
    EXPECT_LE(std::abs(back.interior.values()[i] + back.boundary.values()[i] - m.values()[i]), 1e-6);
  }
  EXPECT_THROW(load_decoupled(dir.path() / "x.bin", BinaryMask(32, 32, 0)), ShapeError);
}

}  // namespace
}  // namespace ismallnet
