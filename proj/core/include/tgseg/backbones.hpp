#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tgseg/tensor.hpp"

namespace tgseg {

enum class BackboneMode { toy, real };

/// Encoder dimensions and weight sources. Toy mode derives every frozen weight
/// from `seed`; real mode reads the weight locators.
struct BackboneConfig {
  BackboneMode mode = BackboneMode::toy;
  std::uint64_t seed = 7;
  int input_size = 64;       // side length fed to every encoder
  int patch_size = 8;        // P of the dense visual encoder
  int text_dim = 32;         // D_t
  int text_hidden_dim = 32;  // width before the text encoder's final projection
  int text_buckets = 256;    // hashed character-trigram vocabulary (toy)
  int visual_dim = 32;       // D_v
  int heads = 4;             // N attention heads
  int embed_dim = 16;        // D_e of the segmentation-encoder embedding
  int embed_stride = 4;      // input pixels per embedding cell
  int hires_channels = 8;    // early-layer feature channels for high-res fusion
  std::string text_weights;
  std::string visual_weights;
  std::string segmentation_weights;

  int patch_grid(int pixels) const { return pixels / patch_size; }
  int embed_grid(int pixels) const { return pixels / embed_stride; }
  void validate() const;
};

struct TextEmbedding {
  std::vector<double> values;
  std::string source_prompt;
};

/// Dense visual features v[h, w] on a (H/P) x (W/P) grid.
struct PatchFeatureGrid {
  FeatureMap features;
  int patch_size = 0;
  int source_height = 0;
  int source_width = 0;
};

/// Per-head [CLS]-to-patch attention logits.
struct AttentionHeadMaps {
  std::vector<Grid2D> maps;
  int head_count() const noexcept { return static_cast<int>(maps.size()); }
};

struct ImageEmbedding {
  FeatureMap values;
  std::vector<FeatureMap> interm_features;
};

/// One named weight block of a frozen encoder (for accounting and freeze checks).
struct WeightView {
  std::string name;
  const Tensor* tensor = nullptr;
};

/// Trims whitespace and lowercases; throws invalid_prompt when nothing remains.
std::string normalize_prompt(std::string_view prompt);

/// Adapter over the three frozen encoders. Implementations are immutable after
/// construction and safe for concurrent use.
class Backbones {
 public:
  virtual ~Backbones() = default;

  virtual const BackboneConfig& config() const noexcept = 0;

  /// Text-encoder activations that feed its final projection layer.
  virtual std::vector<double> encode_text_body(std::string_view prompt) const = 0;
  /// Pretrained value of the text encoder's final projection (D_t x hidden).
  virtual const Tensor& text_final_projection() const noexcept = 0;

  virtual std::pair<PatchFeatureGrid, AttentionHeadMaps> encode_patches(const FeatureMap& image) const = 0;
  virtual ImageEmbedding encode_image_for_decoder(const FeatureMap& image, bool with_hires = true) const = 0;

  /// Weight blocks of the text encoder body (always frozen), visual and segmentation encoders.
  virtual std::vector<WeightView> frozen_weights() const = 0;

  /// Full text path with the pretrained final projection.
  TextEmbedding encode_text(std::string_view prompt) const;
};

/// Applies a (D_t x hidden) projection to text-body activations.
std::vector<double> apply_text_projection(const Tensor& projection, std::span<const double> body);

/// Deterministic desk-scale stand-ins: seeded random linear maps with a tanh
/// nonlinearity over simple pixel statistics.
class ToyBackbones final : public Backbones {
 public:
  explicit ToyBackbones(BackboneConfig config);

  const BackboneConfig& config() const noexcept override { return config_; }
  std::vector<double> encode_text_body(std::string_view prompt) const override;
  const Tensor& text_final_projection() const noexcept override { return text_projection_; }
  std::pair<PatchFeatureGrid, AttentionHeadMaps> encode_patches(const FeatureMap& image) const override;
  ImageEmbedding encode_image_for_decoder(const FeatureMap& image, bool with_hires = true) const override;
  std::vector<WeightView> frozen_weights() const override;

 private:
  BackboneConfig config_;
  Tensor text_body_;        // hidden x buckets
  Tensor text_projection_;  // D_t x hidden
  Tensor patch_proj_;       // D_v x 9
  Tensor patch_bias_;       // D_v
  Tensor head_queries_;     // N x D_v
  Tensor embed_proj_;       // D_e x 9
  Tensor embed_bias_;       // D_e
  Tensor hires_proj_;       // C x 6
  Tensor hires_bias_;       // C
};

/// Builds the configured backbones. Real mode needs an inference runtime that
/// this build does not ship; it throws backend_unavailable after validating the
/// weight locators.
std::unique_ptr<Backbones> make_backbones(const BackboneConfig& config);

/// Convenience wrappers over make_backbones(config).
TextEmbedding encode_text(std::string_view prompt, const BackboneConfig& config);

/// Nine statistics of an RGB pixel block, grouped by statistic: the three
/// channel means minus 0.5, then 4 * sample std, then 2 * max |x - mean|.
void block_statistics(const FeatureMap& image, int y0, int x0, int rows, int cols, double out[9]);

}  // namespace tgseg
