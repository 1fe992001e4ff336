#include "tgseg/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tgseg::numerics {

Grid2D spatial_softmax(const Grid2D& grid) {
  if (grid.empty()) throw Error(ErrorCode::invalid_input, "softmax of an empty grid");
  if (!grid.all_finite()) throw Error(ErrorCode::invalid_input, "softmax input contains non-finite values");
  const auto in = grid.values();
  const double peak = *std::max_element(in.begin(), in.end());
  Grid2D out(grid.height(), grid.width());
  auto o = out.values();
  double total = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    o[i] = std::exp(in[i] - peak);
    total += o[i];
  }
  for (double& v : o) v /= total;
  return out;
}

double dot(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw Error(ErrorCode::shape_mismatch, "cosine similarity of vectors with different dimensions");
  }
  const double nu = norm(u);
  const double nv = norm(v);
  if (!(nu > 0.0) || !(nv > 0.0)) {
    throw Error(ErrorCode::degenerate_vector, "cosine similarity of a zero-norm vector");
  }
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

void cosine_similarity_grad_v(std::span<const double> u, std::span<const double> v, double upstream,
                              std::span<double> grad_v) {
  const double nu = norm(u);
  const double nv = norm(v);
  if (!(nu > 0.0) || !(nv > 0.0)) {
    throw Error(ErrorCode::degenerate_vector, "cosine gradient at a zero-norm vector");
  }
  const double c = dot(u, v) / (nu * nv);
  const double inv = 1.0 / (nu * nv);
  const double self = c / (nv * nv);
  for (std::size_t i = 0; i < v.size(); ++i) {
    grad_v[i] += upstream * (u[i] * inv - self * v[i]);
  }
}

ResampleAxis resample_axis(int in_size, int out_size) {
  if (in_size < 1 || out_size < 1) {
    throw Error(ErrorCode::invalid_size, "resample dimensions must be positive");
  }
  ResampleAxis axis;
  axis.lo.resize(out_size);
  axis.hi.resize(out_size);
  axis.frac.resize(out_size);
  const double scale = static_cast<double>(in_size) / out_size;
  for (int i = 0; i < out_size; ++i) {
    double src = (i + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int lo = static_cast<int>(std::floor(src));
    if (lo > in_size - 1) lo = in_size - 1;
    const int hi = std::min(lo + 1, in_size - 1);
    axis.lo[i] = lo;
    axis.hi[i] = hi;
    axis.frac[i] = (hi == lo) ? 0.0 : src - lo;
  }
  return axis;
}

namespace {

// Applies the separable interpolation to a channels-last buffer.
void resample_into(std::span<const double> in, int ih, int iw, int ch, std::span<double> out, int oh,
                   int ow) {
  const ResampleAxis ry = resample_axis(ih, oh);
  const ResampleAxis rx = resample_axis(iw, ow);
  for (int y = 0; y < oh; ++y) {
    const double fy = ry.frac[y];
    const double* r0 = in.data() + static_cast<std::size_t>(ry.lo[y]) * iw * ch;
    const double* r1 = in.data() + static_cast<std::size_t>(ry.hi[y]) * iw * ch;
    for (int x = 0; x < ow; ++x) {
      const double fx = rx.frac[x];
      const std::size_t a = static_cast<std::size_t>(rx.lo[x]) * ch;
      const std::size_t b = static_cast<std::size_t>(rx.hi[x]) * ch;
      double* o = out.data() + (static_cast<std::size_t>(y) * ow + x) * ch;
      for (int c = 0; c < ch; ++c) {
        const double top = r0[a + c] + fx * (r0[b + c] - r0[a + c]);
        const double bot = r1[a + c] + fx * (r1[b + c] - r1[a + c]);
        o[c] = top + fy * (bot - top);
      }
    }
  }
}

void resample_adjoint_into(std::span<const double> gout, int oh, int ow, int ch, std::span<double> gin,
                           int ih, int iw) {
  const ResampleAxis ry = resample_axis(ih, oh);
  const ResampleAxis rx = resample_axis(iw, ow);
  for (int y = 0; y < oh; ++y) {
    const double fy = ry.frac[y];
    double* r0 = gin.data() + static_cast<std::size_t>(ry.lo[y]) * iw * ch;
    double* r1 = gin.data() + static_cast<std::size_t>(ry.hi[y]) * iw * ch;
    for (int x = 0; x < ow; ++x) {
      const double fx = rx.frac[x];
      const std::size_t a = static_cast<std::size_t>(rx.lo[x]) * ch;
      const std::size_t b = static_cast<std::size_t>(rx.hi[x]) * ch;
      const double* g = gout.data() + (static_cast<std::size_t>(y) * ow + x) * ch;
      const double w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx;
      const double w10 = fy * (1 - fx), w11 = fy * fx;
      for (int c = 0; c < ch; ++c) {
        r0[a + c] += w00 * g[c];
        r0[b + c] += w01 * g[c];
        r1[a + c] += w10 * g[c];
        r1[b + c] += w11 * g[c];
      }
    }
  }
}

}  // namespace

Grid2D bilinear_resample(const Grid2D& grid, int out_height, int out_width) {
  if (out_height < 1 || out_width < 1) {
    throw Error(ErrorCode::invalid_size, "resample output dimensions must be positive");
  }
  Grid2D out(out_height, out_width);
  resample_into(grid.values(), grid.height(), grid.width(), 1, out.values(), out_height, out_width);
  return out;
}

FeatureMap bilinear_resample(const FeatureMap& map, int out_height, int out_width) {
  if (out_height < 1 || out_width < 1) {
    throw Error(ErrorCode::invalid_size, "resample output dimensions must be positive");
  }
  FeatureMap out(out_height, out_width, map.channels());
  resample_into(map.data(), map.height(), map.width(), map.channels(), out.data(), out_height,
                out_width);
  return out;
}

Grid2D bilinear_resample_adjoint(const Grid2D& grad_out, int in_height, int in_width) {
  Grid2D gin(in_height, in_width);
  resample_adjoint_into(grad_out.values(), grad_out.height(), grad_out.width(), 1, gin.values(),
                        in_height, in_width);
  return gin;
}

FeatureMap bilinear_resample_adjoint(const FeatureMap& grad_out, int in_height, int in_width) {
  FeatureMap gin(in_height, in_width, grad_out.channels());
  resample_adjoint_into(grad_out.data(), grad_out.height(), grad_out.width(), grad_out.channels(),
                        gin.data(), in_height, in_width);
  return gin;
}

}  // namespace tgseg::numerics
