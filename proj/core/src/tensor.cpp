#include "tgseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace tgseg {

namespace {

bool finite_span(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

Grid2D::Grid2D(int height, int width, double fill)
    : height_(height), width_(width) {
  if (height < 1 || width < 1) {
    throw Error(ErrorCode::invalid_size, "grid dimensions must be positive");
  }
  values_.assign(static_cast<std::size_t>(height) * width, fill);
}

Grid2D::Grid2D(int height, int width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (height < 1 || width < 1) {
    throw Error(ErrorCode::invalid_size, "grid dimensions must be positive");
  }
  if (values_.size() != static_cast<std::size_t>(height) * width) {
    throw Error(ErrorCode::shape_mismatch, "grid value count does not match dimensions");
  }
}

bool Grid2D::all_finite() const noexcept { return finite_span(values_); }

FeatureMap::FeatureMap(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 1 || width < 1 || channels < 1) {
    throw Error(ErrorCode::invalid_size, "feature map dimensions must be positive");
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

bool FeatureMap::all_finite() const noexcept { return finite_span(data_); }

Grid2D FeatureMap::channel(int c) const {
  Grid2D out(height_, width_);
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) out(y, x) = at(y, x, c);
  }
  return out;
}

Tensor::Tensor(std::vector<int> dims, double fill) : shape(std::move(dims)) {
  const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                        [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
  data.assign(n, fill);
}

Tensor zeros_like(const Tensor& t) { return Tensor(t.shape, 0.0); }

}  // namespace tgseg
