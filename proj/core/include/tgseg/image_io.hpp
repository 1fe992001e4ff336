#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tgseg/mask.hpp"
#include "tgseg/tensor.hpp"

namespace tgseg::io {

enum class ImageFormat { png, jpeg, unknown };

ImageFormat sniff_format(std::span<const std::uint8_t> bytes) noexcept;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Decodes PNG or JPEG bytes into an RGB image with values in [0, 1].
FeatureMap decode_image(std::span<const std::uint8_t> bytes);
FeatureMap read_image(const std::filesystem::path& path);

/// 8-bit RGB PNG (values clamped to [0, 1] and rounded).
std::vector<std::uint8_t> encode_png_rgb(const FeatureMap& image);
/// 8-bit grayscale PNG from raw bytes.
std::vector<std::uint8_t> encode_png_gray(int height, int width, std::span<const std::uint8_t> pixels);

/// Single-channel mask read; any format is reduced to luminance, binarized at >= 128.
BinaryMask read_mask(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_mask_png(const BinaryMask& mask);

/// Grayscale visualization of a grid with values expected in [lo, hi].
std::vector<std::uint8_t> encode_grid_png(const Grid2D& grid, double lo, double hi);

}  // namespace tgseg::io
