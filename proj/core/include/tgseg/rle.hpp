#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tgseg/mask.hpp"

namespace tgseg {

// COCO-style run-length encoding. Pixels are visited in column-major order
// (x outer, y inner); counts alternate background/foreground runs starting
// with background, so the first count is 0 when pixel (0, 0) is set.
//
// String form, as in the COCO API: each count is delta-coded against the
// count two positions earlier (from the fourth count on), then written as
// little-endian groups of 5 bits; every group becomes the character
// 48 + (bits | 0x20 if more groups follow), and the last group's 0x10 bit
// carries the sign.
struct Rle {
  int height = 0;
  int width = 0;
  std::vector<std::uint32_t> counts;

  friend bool operator==(const Rle&, const Rle&) = default;
};

Rle rle_encode(const BinaryMask& mask);
/// Throws invalid_input when the counts do not cover height * width pixels.
BinaryMask rle_decode(const Rle& rle);

std::string rle_counts_to_string(const std::vector<std::uint32_t>& counts);
std::vector<std::uint32_t> rle_counts_from_string(std::string_view text);

}  // namespace tgseg
