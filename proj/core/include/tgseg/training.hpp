#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tgseg/datasets.hpp"
#include "tgseg/decoder.hpp"
#include "tgseg/model.hpp"

namespace tgseg {

struct TrainConfig {
  double learning_rate = 0.001;
  int batch_size = 4;
  int epochs = 30;
  int max_steps = 0;  // optimizer updates; overrides epochs when > 0
  double momentum = 0.0;
  int accumulation_steps = 1;  // micro-batches per update
  std::uint64_t seed = 1;
  LossConfig loss;
  FreezeRegime regime = FreezeRegime::clip_frozen;

  void validate() const;
};

/// Sets which components receive gradients.
Model& apply_freeze_regime(Model& model, FreezeRegime regime);

struct ParamReport {
  std::int64_t trainable = 0;
  std::int64_t total = 0;
  double fraction() const noexcept { return total ? static_cast<double>(trainable) / total : 0.0; }
};

/// Exact counts over the declared blocks: frozen backbone weights plus every
/// trainable block, the text final projection counted as trainable only under
/// clip_partial.
ParamReport count_params(const Model& model, FreezeRegime regime);

/// One named parameter block of a full-scale architecture.
struct ArchBlock {
  std::string name;
  std::string component;  // e.g. "sam.image_encoder", "clip.text"
  std::int64_t count = 0;
  bool trainable = false;
};

/// Full-scale layer-by-layer accounting (SAM ViT-H + HQ decoder, CLIP ViT-B/16,
/// DINOv2 ViT-L/14 and a 512 -> 1024 -> 1024 projection).
std::vector<ArchBlock> full_scale_blocks(FreezeRegime regime);
/// The SAM-HQ baseline alone (image encoder frozen, decoder + HQ additions trainable).
std::vector<ArchBlock> sam_hq_blocks();
ParamReport report_of(const std::vector<ArchBlock>& blocks);

/// Training sample resized to the model input, with its ground-truth box.
struct TrainingSample {
  std::string id;
  std::string prompt;
  EncodedImage encoded;
  BinaryMask mask;  // model resolution
  GeometricPrompt geometry;  // model-input pixels
};

/// Encodes a sample; the geometric prompt is the tight box of the ground truth.
TrainingSample prepare_sample(const Model& model, std::string id, std::string prompt, const FeatureMap& image,
                              const BinaryMask& mask);
std::vector<TrainingSample> prepare_samples(const Model& model, const DatasetManifest& manifest,
                                            std::optional<Split> split = std::nullopt);

struct StepLog {
  int step = 0;
  int epoch = 0;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<StepLog> steps;
  std::vector<double> epoch_losses;
  int epochs_run = 0;
  std::vector<std::filesystem::path> checkpoints;
};

struct TrainOutputs {
  std::filesystem::path directory;  // empty: nothing is written
  bool checkpoint_each_epoch = true;
  std::function<void(const StepLog&)> on_step;
  std::function<void(int epoch, double mean_loss)> on_epoch;
};

/// Mini-batch SGD over the segmentation loss. Samples are visited in a stream
/// of seeded permutations; one step is one optimizer update over batch_size
/// samples; an epoch is ceil(n / batch_size) steps. Writes loss.csv and
/// checkpoints under outputs.directory. Throws non_finite_loss naming the
/// sample and step.
TrainResult train(const TrainConfig& config, const std::vector<TrainingSample>& samples, Model& model,
                  const TrainOutputs& outputs = {});

/// Mean segmentation loss over the samples (no update).
double mean_loss(const Model& model, const std::vector<TrainingSample>& samples, const LossConfig& loss = {});

// Checkpoint container, little-endian:
//   "TGSCKPT1" | u32 version (1) | u64 header length | JSON header | payload
// The header lists the model config, the freeze regime and every block as
// {name, component, shape, offset, count} with offsets in doubles into the
// payload of float64 values.
std::string serialize_checkpoint(const Model& model);
Model deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

/// SHA-256 (hex) of the serialized checkpoint.
std::string model_fingerprint(const Model& model);

}  // namespace tgseg
