#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tgseg/rle.hpp"

using namespace tgseg;

TEST(Rle, ColumnMajorStartingWithBackground) {
  BinaryMask m(3, 2);
  m.set(1, 0, true);
  m.set(2, 0, true);
  m.set(0, 1, true);
  const Rle r = rle_encode(m);
  EXPECT_EQ(r.height, 3);
  EXPECT_EQ(r.width, 2);
  EXPECT_EQ(r.counts, (std::vector<std::uint32_t>{1, 3, 2}));

  BinaryMask first(2, 2);
  first.set(0, 0, true);
  EXPECT_EQ(rle_encode(first).counts, (std::vector<std::uint32_t>{0, 1, 3}));
  EXPECT_EQ(rle_encode(BinaryMask(2, 3)).counts, (std::vector<std::uint32_t>{6}));
}

TEST(Rle, RoundTripRandomMasks) {
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    const int h = rng.integer(1, 30), w = rng.integer(1, 30);
    const BinaryMask m = t % 2 ? oracle::random_mask(rng, h, w, 0.3) : oracle::random_blobs(rng, h, w);
    const Rle r = rle_encode(m);
    EXPECT_EQ(rle_decode(r), m);
    EXPECT_EQ(rle_counts_from_string(rle_counts_to_string(r.counts)), r.counts);
  }
}

TEST(Rle, DecodeRejectsWrongCoverage) {
  EXPECT_THROW(rle_decode({2, 2, {1, 2}}), Error);
  EXPECT_THROW(rle_decode({2, 2, {3, 2}}), Error);
}

TEST(RleString, HandEncodedCases) {
  EXPECT_EQ(rle_counts_to_string({1, 3, 2}), "132");
  EXPECT_EQ(rle_counts_to_string({5, 2, 5, 2}), "5250");
  EXPECT_EQ(rle_counts_to_string({10, 20, 3, 4}), ":d03@");
  EXPECT_EQ(rle_counts_to_string({100}), "T3");
  EXPECT_EQ(rle_counts_from_string(":d03@"), (std::vector<std::uint32_t>{10, 20, 3, 4}));
  EXPECT_EQ(rle_counts_from_string("T3"), (std::vector<std::uint32_t>{100}));
}

TEST(RleString, LargeCountsRoundTrip) {
  const std::vector<std::uint32_t> counts{0, 1048576, 7, 1, 1048000, 3, 65536};
  EXPECT_EQ(rle_counts_from_string(rle_counts_to_string(counts)), counts);
}
