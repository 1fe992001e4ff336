#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tgseg/backbones.hpp"
#include "tgseg/tensor.hpp"

namespace tgseg {

/// Two-layer text-to-visual warp: psi(t) = W_b^T tanh(W_a^T t + b_a) + b_b.
struct ProjectionParams {
  Tensor w_a;  // D_t x D_h
  Tensor b_a;  // D_h
  Tensor w_b;  // D_h x D_v
  Tensor b_b;  // D_v

  int text_dim() const { return w_a.shape.at(0); }
  int hidden_dim() const { return w_a.shape.at(1); }
  int visual_dim() const { return w_b.shape.at(1); }

  /// Zero-bias initialization with W_a ~ N(0, 1/D_t), W_b ~ N(0, 1/D_h).
  static ProjectionParams init(int text_dim, int hidden_dim, int visual_dim, std::uint64_t seed);
  static ProjectionParams zeros(int text_dim, int hidden_dim, int visual_dim);
  void validate() const;

  friend bool operator==(const ProjectionParams&, const ProjectionParams&) = default;
};

struct ProjectionCache {
  std::vector<double> input;
  std::vector<double> hidden;  // tanh activations
};

std::vector<double> project_text(std::span<const double> text, const ProjectionParams& params,
                                 ProjectionCache* cache = nullptr);
inline std::vector<double> project_text(const TextEmbedding& text, const ProjectionParams& params) {
  return project_text(text.values, params);
}

/// Accumulates parameter gradients into `grads` and, when non-empty, the input
/// gradient into `grad_text`.
void project_text_backward(std::span<const double> grad_out, const ProjectionCache& cache,
                           const ProjectionParams& params, ProjectionParams& grads,
                           std::span<double> grad_text = {});

/// Pooled head vector sum_{h,w} softmax(A)[h,w] * v[h,w].
std::vector<double> attention_pool(const PatchFeatureGrid& patches, const Grid2D& attention_logits);

struct HeadScores {
  std::vector<double> per_head;
  double best = 0.0;
  int best_index = 0;
};

/// Cosine of every pooled head vector with psi(t); best is the maximum, ties
/// resolved to the lowest head index.
HeadScores score_heads(const PatchFeatureGrid& patches, const AttentionHeadMaps& heads,
                       std::span<const double> psi);

enum class SimilarityNormalization { raw, unit_interval };

struct SimilarityMap {
  Grid2D grid;
  std::string prompt;
  SimilarityNormalization normalization = SimilarityNormalization::unit_interval;
};

/// map[h, w] = cos(v[h, w], psi); unit_interval rescales to (s + 1) / 2.
SimilarityMap dense_similarity_map(const PatchFeatureGrid& patches, std::span<const double> psi,
                                   SimilarityNormalization normalization, std::string prompt = {});

/// Accumulates d(sum grad_map * map) / d psi into grad_psi.
void dense_similarity_map_backward(const PatchFeatureGrid& patches, std::span<const double> psi,
                                   SimilarityNormalization normalization, const Grid2D& grad_map,
                                   std::span<double> grad_psi);

// Standalone weight file for externally pretrained projections. JSON object:
//   {"format": "tgseg-projection", "version": 1, "text_dim": D_t, "hidden_dim": D_h,
//    "visual_dim": D_v, "layout": "row-major",
//    "w_a": [D_t*D_h], "b_a": [D_h], "w_b": [D_h*D_v], "b_b": [D_v]}
void save_projection_json(const ProjectionParams& params, const std::filesystem::path& path);
ProjectionParams load_projection_json(const std::filesystem::path& path);

}  // namespace tgseg
