#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tgseg/tensor.hpp"

namespace tgseg {

/// Boolean H x W mask, row-major, one byte per pixel (0 or 1).
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, bool fill = false);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool operator()(int y, int x) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int y, int x, bool v) { bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }

  std::span<const std::uint8_t> bits() const noexcept { return bits_; }
  std::size_t count() const noexcept;
  bool same_shape(const BinaryMask& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_;
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Thresholds logits at `threshold` (0 on logits == 0.5 on probabilities).
BinaryMask threshold_logits(const Grid2D& logits, double threshold = 0.0);

/// Nearest-neighbour resize (pixel-center sampling).
BinaryMask resize_nearest(const BinaryMask& mask, int out_height, int out_width);

/// Tight bounding box (x_min, y_min, x_max, y_max) in pixel-edge coordinates,
/// i.e. x_max = last column + 1. Returns false for an empty mask.
bool mask_bounding_box(const BinaryMask& mask, double box[4]);

}  // namespace tgseg
