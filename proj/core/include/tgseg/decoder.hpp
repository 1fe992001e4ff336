#pragma once

#include <cstdint>

#include "tgseg/backbones.hpp"
#include "tgseg/mask.hpp"
#include "tgseg/prompt.hpp"
#include "tgseg/tensor.hpp"

namespace tgseg {

struct DecoderConfig {
  int hidden_dim = 32;
  double point_sigma = 4.0;  // pixels, spread of a point token's bias
};

/// Toy promptable decoder. The image embedding plus the dense prompt embedding
/// is upsampled to the early-feature resolution and fused per pixel:
///   z = W_e U(p) + W_h F(p) + b + token biases(p),  h = relu(z)
///   logit(p) = h . (w_out + W_g mean(E + dense)) + b_out
/// Sparse tokens inject learned bias vectors: inside/outside the box, and a
/// Gaussian bump around each foreground/background point.
struct DecoderParams {
  Tensor w_embed;      // H x D_e
  Tensor w_hires;      // H x C
  Tensor bias;         // H
  Tensor box_inside;   // H
  Tensor box_outside;  // H
  Tensor point_fg;     // H
  Tensor point_bg;     // H
  Tensor w_gate;       // H x D_e
  Tensor w_out;        // H
  Tensor b_out;        // 1

  int hidden_dim() const { return w_embed.shape.at(0); }
  int embed_dim() const { return w_embed.shape.at(1); }
  int hires_channels() const { return w_hires.shape.at(1); }

  static DecoderParams zeros(int hidden, int embed_dim, int hires_channels);
  static DecoderParams init(int hidden, int embed_dim, int hires_channels, std::uint64_t seed);

  friend bool operator==(const DecoderParams&, const DecoderParams&) = default;
};

/// Pre-sigmoid mask scores at the decoder's output resolution.
struct MaskLogits {
  Grid2D values;
  int source_height = 0;
  int source_width = 0;
};

struct DecoderCache {
  FeatureMap combined;        // E + dense
  std::vector<double> global;  // mean of combined
  FeatureMap upsampled;        // combined at output resolution
  FeatureMap hires;
  std::vector<double> pre;     // P x H pre-activations
  std::vector<double> inside;  // P, box indicator (or empty without a box)
  std::vector<double> fg;      // P, summed foreground point kernels
  std::vector<double> bg;      // P
  std::vector<double> out_vec; // w_out + W_g mean
};

MaskLogits predict_mask(const ImageEmbedding& image, const PromptBundle& bundle, const DecoderParams& params,
                        const DecoderConfig& config, DecoderCache* cache = nullptr);

/// Accumulates parameter gradients and, when non-null, the gradient w.r.t.
/// the dense prompt embedding.
void predict_mask_backward(const Grid2D& grad_logits, const DecoderCache& cache, const DecoderParams& params,
                           DecoderParams& grads, FeatureMap* grad_dense);

struct LossConfig {
  double bce_weight = 1.0;
  double dice_weight = 1.0;
  double dice_smooth = 1.0;  // epsilon, in mask-pixel units
};

struct LossValue {
  double total = 0.0;
  double bce = 0.0;
  double dice = 0.0;
};

/// BCE(sigmoid(logits), gt) averaged over pixels plus the smoothed dice loss
///   1 - (2 sum(p g) + eps) / (sum p + sum g + eps).
/// Writes d total / d logits into `grad_logits` when non-null.
LossValue segmentation_loss(const Grid2D& logits, const BinaryMask& gt, const LossConfig& config = {},
                            Grid2D* grad_logits = nullptr);

}  // namespace tgseg
