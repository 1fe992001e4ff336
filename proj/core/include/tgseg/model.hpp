#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "tgseg/backbones.hpp"
#include "tgseg/decoder.hpp"
#include "tgseg/mask.hpp"
#include "tgseg/projection.hpp"
#include "tgseg/prompt.hpp"

namespace tgseg {

enum class FreezeRegime { clip_frozen, clip_partial };

/// Throws unknown_regime for anything but "clip_frozen" / "clip_partial".
FreezeRegime parse_freeze_regime(std::string_view name);
std::string_view freeze_regime_name(FreezeRegime regime) noexcept;

/// Trainable parameter groups. Frozen encoder weights live in Backbones.
enum class Component { text_projection, projection, prompt_encoder, decoder };

std::string_view component_name(Component c) noexcept;
bool component_trainable(Component c, FreezeRegime regime) noexcept;

/// Per-group weight multipliers: each group is optimized in a reparametrized
/// space w = gain * w_raw, so a plain SGD step on w_raw moves w by
/// lr * gain^2 * dL/dw.
struct ParameterGains {
  double text_projection = 16.0;
  double projection = 16.0;
  double prompt_encoder = 8.0;
  double decoder = 15.0;

  double of(Component c) const noexcept;
  friend bool operator==(const ParameterGains&, const ParameterGains&) = default;
};

struct ModelConfig {
  BackboneConfig backbone;
  int projection_hidden_dim = 256;  // D_h
  SimilarityNormalization normalization = SimilarityNormalization::unit_interval;
  DecoderConfig decoder;
  ParameterGains gains;
  std::uint64_t init_seed = 0;
  std::string projection_weights;  // optional externally trained projection (JSON)

  void validate() const;
};

struct TrainableParams {
  Tensor text_projection;  // D_t x text hidden, initialised from the pretrained text encoder
  ProjectionParams projection;
  PromptEncoderParams prompt_encoder;
  DecoderParams decoder;

  friend bool operator==(const TrainableParams&, const TrainableParams&) = default;
};

TrainableParams zeros_like(const TrainableParams& p);

struct ParamBlock {
  std::string name;
  Component component;
  Tensor* tensor;
};
struct ConstParamBlock {
  std::string name;
  Component component;
  const Tensor* tensor;
};

/// Every trainable tensor in a fixed order with a stable name.
std::vector<ParamBlock> param_blocks(TrainableParams& params);
std::vector<ConstParamBlock> param_blocks(const TrainableParams& params);

/// Frozen-encoder outputs for one image at model resolution; reusable across prompts.
struct EncodedImage {
  PatchFeatureGrid patches;
  AttentionHeadMaps heads;
  ImageEmbedding embedding;
  int source_height = 0;
  int source_width = 0;
};

struct ForwardCache {
  std::vector<double> text_body;
  std::vector<double> text;
  ProjectionCache projection;
  std::vector<double> psi;
  Grid2D similarity_input;
  PromptEncoderCache prompt_encoder;
  DecoderCache decoder;
};

struct Prediction {
  Grid2D logits;       // at the source image resolution
  BinaryMask mask;     // logits > 0
  SimilarityMap similarity;
  HeadScores heads;
};

/// Full text-guided segmentation model: frozen backbones plus the trainable
/// projection, similarity-map encoder and decoder.
class Model {
 public:
  Model(ModelConfig config, std::shared_ptr<const Backbones> backbones, TrainableParams params);

  /// Builds backbones from the config and initialises trainable weights from init_seed.
  static Model create(const ModelConfig& config);
  static TrainableParams initial_params(const ModelConfig& config, const Backbones& backbones);

  const ModelConfig& config() const noexcept { return config_; }
  const Backbones& backbones() const noexcept { return *backbones_; }
  std::shared_ptr<const Backbones> shared_backbones() const noexcept { return backbones_; }
  TrainableParams& params() noexcept { return params_; }
  const TrainableParams& params() const noexcept { return params_; }

  FreezeRegime regime() const noexcept { return regime_; }
  void set_regime(FreezeRegime regime) noexcept { regime_ = regime; }

  int input_size() const noexcept { return config_.backbone.input_size; }

  /// Resizes to the model input and runs the frozen encoders.
  EncodedImage encode_image(const FeatureMap& image) const;

  /// Text embedding under the current final-projection weights.
  std::vector<double> embed_text(std::string_view prompt, std::vector<double>* body = nullptr) const;
  std::vector<double> psi(std::string_view prompt) const;
  SimilarityMap similarity_map(const EncodedImage& image, std::string_view prompt) const;

  /// Logits at model resolution. `geometry` is in model-input pixels. An empty
  /// prompt string means no semantic prompt.
  MaskLogits forward(const EncodedImage& image, std::string_view prompt, const GeometricPrompt& geometry,
                     ForwardCache* cache = nullptr) const;

  /// Accumulates gradients of the trainable components into `grads`. Groups the
  /// current regime freezes receive nothing.
  void backward(const Grid2D& grad_logits, const EncodedImage& image, const ForwardCache& cache,
                TrainableParams& grads) const;

  /// End-to-end inference in source-image coordinates.
  Prediction predict(const FeatureMap& image, std::string_view prompt, const GeometricPrompt& geometry) const;
  Prediction predict(const EncodedImage& image, std::string_view prompt, const GeometricPrompt& geometry) const;

 private:
  ModelConfig config_;
  std::shared_ptr<const Backbones> backbones_;
  TrainableParams params_;
  FreezeRegime regime_ = FreezeRegime::clip_frozen;
};

/// Maps a geometric prompt between source-image and model-input pixels.
GeometricPrompt scale_geometry(const GeometricPrompt& geometry, double sx, double sy);

/// Bilinear resize of an RGB image (identity when the size already matches).
FeatureMap resize_image(const FeatureMap& image, int height, int width);

}  // namespace tgseg
