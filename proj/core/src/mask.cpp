#include "tgseg/mask.hpp"

#include <algorithm>
#include <numeric>

namespace tgseg {

BinaryMask::BinaryMask(int height, int width, bool fill) : height_(height), width_(width) {
  if (height < 1 || width < 1) throw Error(ErrorCode::invalid_size, "mask dimensions must be positive");
  bits_.assign(static_cast<std::size_t>(height) * width, fill ? 1 : 0);
}

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BinaryMask threshold_logits(const Grid2D& logits, double threshold) {
  BinaryMask m(logits.height(), logits.width());
  for (int y = 0; y < logits.height(); ++y) {
    for (int x = 0; x < logits.width(); ++x) m.set(y, x, logits(y, x) > threshold);
  }
  return m;
}

BinaryMask resize_nearest(const BinaryMask& mask, int out_height, int out_width) {
  if (out_height == mask.height() && out_width == mask.width()) return mask;
  BinaryMask out(out_height, out_width);
  for (int y = 0; y < out_height; ++y) {
    const int sy = std::min(mask.height() - 1,
                            static_cast<int>((y + 0.5) * mask.height() / out_height));
    for (int x = 0; x < out_width; ++x) {
      const int sx = std::min(mask.width() - 1, static_cast<int>((x + 0.5) * mask.width() / out_width));
      out.set(y, x, mask(sy, sx));
    }
  }
  return out;
}

bool mask_bounding_box(const BinaryMask& mask, double box[4]) {
  int x0 = mask.width(), y0 = mask.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(y, x)) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) return false;
  box[0] = x0;
  box[1] = y0;
  box[2] = x1 + 1;
  box[3] = y1 + 1;
  return true;
}

}  // namespace tgseg
