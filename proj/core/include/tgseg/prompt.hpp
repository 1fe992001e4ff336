#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tgseg/projection.hpp"
#include "tgseg/tensor.hpp"

namespace tgseg {

/// Side of the square similarity input consumed by the prompt encoder.
inline constexpr int kSimilarityInputSize = 256;

/// Geometry of the trainable similarity-map encoder: two strided convolutions
/// (kernel == stride) each followed by a per-channel affine normalization and
/// GELU, then a pointwise projection to the embedding width.
struct PromptEncoderConfig {
  int stride1 = 4;
  int stride2 = 4;
  int channels1 = 4;
  int channels2 = 16;
  int embed_dim = 16;

  /// Embedding side produced from an input of `input_size` pixels.
  int output_size(int input_size = kSimilarityInputSize) const;
  /// Strides reaching `embed_side` from 256 with two equal power-of-two steps.
  static PromptEncoderConfig for_embedding(int embed_side, int embed_dim);
};

struct PromptEncoderParams {
  Tensor conv1_w;      // c1 x 1 x s1 x s1
  Tensor conv1_b;      // c1
  Tensor norm1_scale;  // c1
  Tensor norm1_shift;  // c1
  Tensor conv2_w;      // c2 x c1 x s2 x s2
  Tensor conv2_b;      // c2
  Tensor norm2_scale;  // c2
  Tensor norm2_shift;  // c2
  Tensor out_w;        // D_e x c2
  Tensor out_b;        // D_e

  PromptEncoderConfig config() const;

  static PromptEncoderParams zeros(const PromptEncoderConfig& config);
  static PromptEncoderParams init(const PromptEncoderConfig& config, std::uint64_t seed);

  friend bool operator==(const PromptEncoderParams&, const PromptEncoderParams&) = default;
};

/// Bilinear upsampling of a similarity map to 256 x 256.
Grid2D prepare_similarity_input(const SimilarityMap& map, int size = kSimilarityInputSize);

struct PromptEncoderCache {
  Grid2D input;
  FeatureMap conv1, act1, conv2, act2;
};

/// Encodes the 256 x 256 similarity input into an E_h x E_w x D_e dense embedding.
/// Throws configuration when the produced grid differs from (expect_h, expect_w).
FeatureMap encode_similarity_map(const Grid2D& input, const PromptEncoderParams& params, int expect_h,
                                 int expect_w, PromptEncoderCache* cache = nullptr);

/// Accumulates parameter gradients; returns the gradient w.r.t. the input grid.
Grid2D encode_similarity_map_backward(const FeatureMap& grad_out, const PromptEncoderCache& cache,
                                      const PromptEncoderParams& params, PromptEncoderParams& grads);

struct Box {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  friend bool operator==(const Box&, const Box&) = default;
};

struct PromptPoint {
  double x = 0, y = 0;
  bool foreground = true;
};

struct GeometricPrompt {
  std::optional<Box> box;
  std::vector<PromptPoint> points;
  bool empty() const noexcept { return !box && points.empty(); }
};

enum class TokenKind { box, foreground_point, background_point };

/// Encoded geometric prompt in model-input pixel coordinates.
struct SparseToken {
  TokenKind kind = TokenKind::box;
  double coords[4] = {0, 0, 0, 0};  // box corners, or (x, y) for points
};

struct PromptBundle {
  std::vector<SparseToken> sparse_tokens;
  FeatureMap dense_embedding;
  bool has_dense = false;
  std::string prompt_text;
};

/// Dimensions the bundle must be compatible with.
struct BundleGeometry {
  int image_height = 0;
  int image_width = 0;
  int embed_height = 0;
  int embed_width = 0;
  int embed_dim = 0;
};

/// Validates a box against an image (ordered corners, non-degenerate, inside).
void validate_box(const Box& box, int image_height, int image_width);

/// Throws empty_prompt when there is neither a geometric prompt nor a dense embedding.
PromptBundle build_prompt_bundle(const GeometricPrompt& geometry, std::optional<FeatureMap> dense,
                                 std::string text, const BundleGeometry& dims);

}  // namespace tgseg
