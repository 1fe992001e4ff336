#include "tgseg/rle.hpp"

namespace tgseg {

Rle rle_encode(const BinaryMask& mask) {
  Rle r{mask.height(), mask.width(), {}};
  bool current = false;
  std::uint32_t run = 0;
  for (int x = 0; x < mask.width(); ++x) {
    for (int y = 0; y < mask.height(); ++y) {
      if (mask(y, x) != current) {
        r.counts.push_back(run);
        run = 0;
        current = !current;
      }
      ++run;
    }
  }
  r.counts.push_back(run);
  return r;
}

BinaryMask rle_decode(const Rle& rle) {
  BinaryMask mask(rle.height, rle.width);
  const std::uint64_t total = static_cast<std::uint64_t>(rle.height) * rle.width;
  std::uint64_t pos = 0;
  bool value = false;
  for (std::uint32_t c : rle.counts) {
    if (pos + c > total) throw Error(ErrorCode::invalid_input, "RLE counts exceed the mask size");
    if (value) {
      for (std::uint64_t k = pos; k < pos + c; ++k) {
        mask.set(static_cast<int>(k % rle.height), static_cast<int>(k / rle.height), true);
      }
    }
    pos += c;
    value = !value;
  }
  if (pos != total) throw Error(ErrorCode::invalid_input, "RLE counts do not cover the mask");
  return mask;
}

std::string rle_counts_to_string(const std::vector<std::uint32_t>& counts) {
  std::string s;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    long long x = counts[i];
    if (i > 2) x -= static_cast<long long>(counts[i - 2]);
    bool more = true;
    while (more) {
      int c = static_cast<int>(x & 0x1f);
      x >>= 5;
      more = (c & 0x10) ? x != -1 : x != 0;
      if (more) c |= 0x20;
      s.push_back(static_cast<char>(c + 48));
    }
  }
  return s;
}

std::vector<std::uint32_t> rle_counts_from_string(std::string_view text) {
  std::vector<std::uint32_t> counts;
  std::size_t p = 0;
  while (p < text.size()) {
    long long x = 0;
    int k = 0;
    bool more = true;
    while (more) {
      if (p >= text.size()) throw Error(ErrorCode::invalid_input, "truncated RLE string");
      const int c = text[p] - 48;
      if (c < 0 || c > 63) throw Error(ErrorCode::invalid_input, "invalid character in RLE string");
      x |= static_cast<long long>(c & 0x1f) << (5 * k);
      more = (c & 0x20) != 0;
      ++p;
      ++k;
      if (!more && (c & 0x10)) x |= -1LL << (5 * k);
    }
    if (counts.size() > 2) x += counts[counts.size() - 2];
    if (x < 0 || x > 0xffffffffLL) throw Error(ErrorCode::invalid_input, "RLE count out of range");
    counts.push_back(static_cast<std::uint32_t>(x));
  }
  return counts;
}

}  // namespace tgseg
