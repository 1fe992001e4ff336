#pragma once

#include <span>
#include <vector>

#include "tgseg/tensor.hpp"

namespace tgseg::numerics {

/// Softmax over every position of the grid treated as one distribution.
/// Uses max-subtraction. Throws invalid_input on non-finite values.
Grid2D spatial_softmax(const Grid2D& grid);

/// Cosine similarity of two equal-length vectors, clamped to [-1, 1].
/// Throws degenerate_vector if either vector has zero norm; never returns 0 silently.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

/// Accumulates d cos(u, v) / d v, scaled by `upstream`, into `grad_v`.
void cosine_similarity_grad_v(std::span<const double> u, std::span<const double> v, double upstream,
                              std::span<double> grad_v);

// Bilinear resampling with align_corners = false: destination pixel i samples the
// source coordinate
//     src = (i + 0.5) * in_size / out_size - 0.5,
// clamped below at 0; neighbours are floor(src) and min(floor(src) + 1, in_size - 1)
// with weights (1 - frac, frac). Resampling to the identical size is the identity.

/// Precomputed per-axis interpolation taps.
struct ResampleAxis {
  std::vector<int> lo;
  std::vector<int> hi;
  std::vector<double> frac;
};

ResampleAxis resample_axis(int in_size, int out_size);

Grid2D bilinear_resample(const Grid2D& grid, int out_height, int out_width);
FeatureMap bilinear_resample(const FeatureMap& map, int out_height, int out_width);

/// Adjoint (transpose) of bilinear_resample: maps a gradient on the output grid
/// back to the input grid of the given size.
Grid2D bilinear_resample_adjoint(const Grid2D& grad_out, int in_height, int in_width);
FeatureMap bilinear_resample_adjoint(const FeatureMap& grad_out, int in_height, int in_width);

double norm(std::span<const double> v);
double dot(std::span<const double> u, std::span<const double> v);

}  // namespace tgseg::numerics
