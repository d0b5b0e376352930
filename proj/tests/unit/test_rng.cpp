#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "sgdflow/rng.hpp"

using namespace sgdflow;

namespace {

// Known-answer vectors for Philox4x32-10, generated with an independent
// implementation (randomgen).
TEST(Philox, ZeroCounterZeroKey) {
  constexpr auto out = philox4x32_10({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out, (PhiloxCounter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
}

TEST(Philox, UnitCounter) {
  EXPECT_EQ(philox4x32_10({1, 0, 0, 0}, {0, 0}),
            (PhiloxCounter{0xf8e4cca4u, 0x5cb200dbu, 0xb1a574ebu, 0x097eff67u}));
}

TEST(Philox, AllOnesKey) {
  EXPECT_EQ(philox4x32_10({0, 0, 0, 0}, {0xffffffffu, 0xffffffffu}),
            (PhiloxCounter{0x72a47709u, 0x15474739u, 0x9f41b01fu, 0x22799a5au}));
}

TEST(Philox, PiDigits) {
  EXPECT_EQ(philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}),
            (PhiloxCounter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(RandomStream, SameSeedAndStreamReplays) {
  RandomStream a(42, 7), b(42, 7);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u32(), b.next_u32());
  EXPECT_EQ(a.seed(), 42u);
  EXPECT_EQ(a.stream_id(), 7u);
}

TEST(RandomStream, StreamsAndSeedsDiffer) {
  std::set<std::uint32_t> firsts;
  for (std::uint64_t s = 0; s < 64; ++s) {
    firsts.insert(RandomStream(1, s).next_u32());
    firsts.insert(RandomStream(2 + s, 0).next_u32());
  }
  EXPECT_EQ(firsts.size(), 128u);
}

TEST(RandomStream, UniformRange) {
  RandomStream rng(3, 0);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double v = rng.uniform_open();
    ASSERT_GT(v, 0.0);
    ASSERT_LT(v, 1.0);
  }
}

TEST(RandomStream, NormalMoments) {
  RandomStream rng(11, 5);
  const int n = 200000;
  double s1 = 0.0, s2 = 0.0, s4 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s1 += z;
    s2 += z * z;
    s4 += z * z * z * z;
  }
  EXPECT_NEAR(s1 / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(s4 / n, 3.0, 4.0 * std::sqrt(96.0 / n));
}

}  // namespace
