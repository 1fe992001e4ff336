#include "tgseg/training.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "config_json.hpp"
#include "tgseg/hash.hpp"
#include "tgseg/rng.hpp"

namespace fs = std::filesystem;

namespace tgseg {

void TrainConfig::validate() const {
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::configuration, "train.learning_rate must be positive");
  }
  if (batch_size < 1) throw Error(ErrorCode::configuration, "train.batch_size must be at least 1");
  if (epochs < 1) throw Error(ErrorCode::configuration, "train.epochs must be at least 1");
  if (max_steps < 0) throw Error(ErrorCode::configuration, "train.max_steps must be non-negative");
  if (!(momentum >= 0 && momentum < 1)) throw Error(ErrorCode::configuration, "train.momentum must be in [0, 1)");
  if (accumulation_steps < 1 || batch_size % accumulation_steps != 0) {
    throw Error(ErrorCode::configuration, "train.accumulation_steps must divide train.batch_size");
  }
  if (loss.bce_weight < 0 || loss.dice_weight < 0 || !(loss.dice_smooth > 0)) {
    throw Error(ErrorCode::configuration, "loss weights must be non-negative and dice_smooth positive");
  }
}

Model& apply_freeze_regime(Model& model, FreezeRegime regime) {
  model.set_regime(regime);
  return model;
}

ParamReport count_params(const Model& model, FreezeRegime regime) {
  ParamReport r;
  for (const WeightView& w : model.backbones().frozen_weights()) r.total += static_cast<std::int64_t>(w.tensor->numel());
  for (const ConstParamBlock& b : param_blocks(model.params())) {
    const auto n = static_cast<std::int64_t>(b.tensor->numel());
    r.total += n;
    if (component_trainable(b.component, regime)) r.trainable += n;
  }
  return r;
}

namespace {

using I = std::int64_t;

I layer_norm(I d) { return 2 * d; }
I linear(I in, I out, bool bias = true) { return in * out + (bias ? out : 0); }
I conv(I in, I out, I k, bool bias = true) { return in * out * k * k + (bias ? out : 0); }
I mlp(I in, I hidden, I out, int layers) {
  I n = linear(in, hidden);
  for (int i = 1; i < layers - 1; ++i) n += linear(hidden, hidden);
  return n + linear(hidden, out);
}
// Pre-norm transformer block with fused qkv and a two-layer MLP.
I vit_block(I d, I mlp_dim) {
  return layer_norm(d) + linear(d, 3 * d) + linear(d, d) + layer_norm(d) + linear(d, mlp_dim) + linear(mlp_dim, d);
}
// Attention with separate q/k/v projections into an internal width d / rate.
I attention(I d, I rate) {
  const I inner = d / rate;
  return 3 * linear(d, inner) + linear(inner, d);
}

void add(std::vector<ArchBlock>& v, std::string name, std::string component, I count, bool trainable) {
  v.push_back({std::move(name), std::move(component), count, trainable});
}

void sam_image_encoder(std::vector<ArchBlock>& v) {
  const I d = 1280, depth = 32, heads = 16, grid = 64, window = 14;
  const std::string c = "sam.image_encoder";
  add(v, "patch_embed", c, conv(3, d, 16), false);
  add(v, "pos_embed", c, grid * grid * d, false);
  for (I i = 0; i < depth; ++i) {
    const bool global = i == 7 || i == 15 || i == 23 || i == 31;
    const I size = global ? grid : window;
    add(v, "blocks." + std::to_string(i), c, vit_block(d, 4 * d) + 2 * (2 * size - 1) * (d / heads), false);
  }
  add(v, "neck", c, conv(d, 256, 1, false) + layer_norm(256) + conv(256, 256, 3, false) + layer_norm(256), false);
}

// Mask-input downscaling stack; in the text-guided model it encodes the similarity map.
I mask_downscaling() {
  return conv(1, 4, 2) + layer_norm(4) + conv(4, 16, 2) + layer_norm(16) + conv(16, 256, 1);
}

void sam_prompt_encoder(std::vector<ArchBlock>& v, bool downscaling_trainable) {
  const std::string c = "sam.prompt_encoder";
  add(v, "point_embeddings", c, 4 * 256, false);
  add(v, "not_a_point_embed", c, 256, false);
  add(v, "no_mask_embed", c, 256, false);
  add(v, "mask_downscaling", c, mask_downscaling(), downscaling_trainable);
}

void sam_mask_decoder(std::vector<ArchBlock>& v) {
  const I d = 256;
  const std::string c = "sam.mask_decoder";
  const I two_way_block = attention(d, 1) + layer_norm(d) + attention(d, 2) + layer_norm(d) + mlp(d, 2048, d, 2) +
                          layer_norm(d) + layer_norm(d) + attention(d, 2);
  add(v, "transformer.layers", c, 2 * two_way_block, true);
  add(v, "transformer.final", c, attention(d, 2) + layer_norm(d), true);
  add(v, "iou_token", c, d, true);
  add(v, "mask_tokens", c, 4 * d, true);
  add(v, "output_upscaling", c, conv(d, 64, 2) + layer_norm(64) + conv(64, 32, 2), true);
  add(v, "output_hypernetworks_mlps", c, 4 * mlp(d, d, 32, 3), true);
  add(v, "iou_prediction_head", c, mlp(d, d, 4, 3), true);
}

void hq_additions(std::vector<ArchBlock>& v) {
  const std::string c = "sam_hq.decoder";
  add(v, "hf_token", c, 256, true);
  add(v, "hf_mlp", c, mlp(256, 256, 32, 3), true);
  add(v, "compress_vit_feat", c, conv(1280, 256, 2) + layer_norm(256) + conv(256, 32, 2), true);
  add(v, "embedding_encoder", c, conv(256, 64, 2) + layer_norm(64) + conv(64, 32, 2), true);
  add(v, "embedding_maskfeature", c, conv(32, 64, 3) + layer_norm(64) + conv(64, 32, 3), true);
}

void clip_vit_b16(std::vector<ArchBlock>& v, bool partial) {
  const I d = 768, td = 512, embed = 512;
  add(v, "visual.conv1", "clip.visual", conv(3, d, 16, false), false);
  add(v, "visual.class_embedding", "clip.visual", d, false);
  add(v, "visual.positional_embedding", "clip.visual", (14 * 14 + 1) * d, false);
  add(v, "visual.ln_pre", "clip.visual", layer_norm(d), false);
  add(v, "visual.transformer", "clip.visual", 12 * vit_block(d, 4 * d), false);
  add(v, "visual.ln_post", "clip.visual", layer_norm(d), false);
  add(v, "visual.proj", "clip.visual", d * embed, false);
  add(v, "token_embedding", "clip.text", 49408 * td, false);
  add(v, "positional_embedding", "clip.text", 77 * td, false);
  add(v, "transformer.resblocks.0-10", "clip.text", 11 * vit_block(td, 4 * td), false);
  add(v, "transformer.resblocks.11", "clip.text", vit_block(td, 4 * td), partial);
  add(v, "ln_final", "clip.text", layer_norm(td), partial);
  add(v, "text_projection", "clip.text", td * embed, partial);
  add(v, "logit_scale", "clip", 1, false);
}

void dinov2_vit_l14(std::vector<ArchBlock>& v) {
  const I d = 1024;
  const std::string c = "dinov2";
  add(v, "patch_embed", c, conv(3, d, 14), false);
  add(v, "cls_token", c, d, false);
  add(v, "pos_embed", c, (37 * 37 + 1) * d, false);
  add(v, "mask_token", c, d, false);
  add(v, "blocks", c, 24 * (vit_block(d, 4 * d) + 2 * d), false);
  add(v, "norm", c, layer_norm(d), false);
}

}  // namespace

std::vector<ArchBlock> sam_hq_blocks() {
  std::vector<ArchBlock> v;
  sam_image_encoder(v);
  sam_prompt_encoder(v, false);
  sam_mask_decoder(v);
  hq_additions(v);
  return v;
}

std::vector<ArchBlock> full_scale_blocks(FreezeRegime regime) {
  std::vector<ArchBlock> v;
  sam_image_encoder(v);
  sam_prompt_encoder(v, true);
  sam_mask_decoder(v);
  hq_additions(v);
  clip_vit_b16(v, regime == FreezeRegime::clip_partial);
  dinov2_vit_l14(v);
  add(v, "psi", "projection", linear(512, 1024) + linear(1024, 1024), true);
  return v;
}

ParamReport report_of(const std::vector<ArchBlock>& blocks) {
  ParamReport r;
  for (const ArchBlock& b : blocks) {
    r.total += b.count;
    if (b.trainable) r.trainable += b.count;
  }
  return r;
}

TrainingSample prepare_sample(const Model& model, std::string id, std::string prompt, const FeatureMap& image,
                              const BinaryMask& mask) {
  if (image.height() != mask.height() || image.width() != mask.width()) {
    throw Error(ErrorCode::shape_mismatch, "mask and image sizes differ for sample " + id);
  }
  TrainingSample s;
  s.id = std::move(id);
  s.prompt = std::move(prompt);
  s.encoded = model.encode_image(image);
  const int n = model.input_size();
  s.mask = resize_nearest(mask, n, n);
  double box[4];
  if (mask_bounding_box(mask, box)) {
    const double sx = static_cast<double>(n) / image.width(), sy = static_cast<double>(n) / image.height();
    s.geometry.box = Box{box[0] * sx, box[1] * sy, box[2] * sx, box[3] * sy};
  } else {
    s.geometry.box = Box{0, 0, static_cast<double>(n), static_cast<double>(n)};
  }
  return s;
}

std::vector<TrainingSample> prepare_samples(const Model& model, const DatasetManifest& manifest,
                                            std::optional<Split> split) {
  std::vector<TrainingSample> out;
  for (const SampleRecord& r : manifest.samples) {
    if (split && r.split != *split) continue;
    LoadedSample s = load_sample(manifest, r);
    out.push_back(prepare_sample(model, s.id, s.prompt, s.image, s.mask));
  }
  if (out.empty()) throw Error(ErrorCode::empty_dataset, "no samples in the selected split");
  return out;
}

double mean_loss(const Model& model, const std::vector<TrainingSample>& samples, const LossConfig& loss) {
  if (samples.empty()) throw Error(ErrorCode::empty_dataset, "no samples");
  double sum = 0.0;
  for (const TrainingSample& s : samples) {
    sum += segmentation_loss(model.forward(s.encoded, s.prompt, s.geometry).values, s.mask, loss).total;
  }
  return sum / static_cast<double>(samples.size());
}

namespace {

void zero(TrainableParams& p) {
  for (ParamBlock& b : param_blocks(p)) std::fill(b.tensor->data.begin(), b.tensor->data.end(), 0.0);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << text;
}

}  // namespace

TrainResult train(const TrainConfig& config, const std::vector<TrainingSample>& samples, Model& model,
                  const TrainOutputs& outputs) {
  config.validate();
  if (samples.empty()) throw Error(ErrorCode::empty_dataset, "training set is empty");
  apply_freeze_regime(model, config.regime);
  const int n = static_cast<int>(samples.size());
  const int steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const int total_steps = config.max_steps > 0 ? config.max_steps : config.epochs * steps_per_epoch;
  const int micro = config.batch_size / config.accumulation_steps;
  if (!outputs.directory.empty()) fs::create_directories(outputs.directory);

  Rng order(mix_seed(config.seed, fnv1a64("train.order")));
  std::vector<int> queue;
  std::size_t head = 0;
  auto next_index = [&] {
    if (head == queue.size()) {
      std::vector<int> perm(n);
      for (int i = 0; i < n; ++i) perm[i] = i;
      for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[order.integer(0, i + 1)]);
      queue = std::move(perm);
      head = 0;
    }
    return queue[head++];
  };

  TrainableParams grads = zeros_like(model.params());
  TrainableParams velocity = zeros_like(model.params());
  TrainResult result;
  std::ostringstream csv;
  csv << std::setprecision(12) << "step,epoch,loss\n";
  std::ostringstream epoch_csv;
  epoch_csv << std::setprecision(12) << "epoch,mean_loss\n";
  double epoch_sum = 0.0;
  int epoch_count = 0;
  ForwardCache cache;
  Grid2D grad_logits;

  for (int step = 0; step < total_steps; ++step) {
    const int epoch = step / steps_per_epoch;
    zero(grads);
    double batch_loss = 0.0;
    for (int a = 0; a < config.accumulation_steps; ++a) {
      for (int m = 0; m < micro; ++m) {
        const TrainingSample& s = samples[next_index()];
        const MaskLogits logits = model.forward(s.encoded, s.prompt, s.geometry, &cache);
        LossValue lv;
        try {
          lv = segmentation_loss(logits.values, s.mask, config.loss, &grad_logits);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::non_finite_loss) throw;
          throw Error(ErrorCode::non_finite_loss,
                      "non-finite loss on sample '" + s.id + "' at step " + std::to_string(step));
        }
        batch_loss += lv.total;
        for (double& g : grad_logits.values()) g /= config.batch_size;
        model.backward(grad_logits, s.encoded, cache, grads);
      }
    }
    batch_loss /= config.batch_size;

#ifndef NDEBUG
    for (const ParamBlock& b : param_blocks(grads)) {
      if (component_trainable(b.component, model.regime())) continue;
      for (double g : b.tensor->data) {
        if (g != 0.0) throw Error(ErrorCode::configuration, "gradient reached frozen block " + b.name);
      }
    }
#endif

    auto params = param_blocks(model.params());
    auto gblocks = param_blocks(grads);
    auto vblocks = param_blocks(velocity);
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!component_trainable(params[i].component, model.regime())) continue;
      const double gain = model.config().gains.of(params[i].component);
      auto& w = params[i].tensor->data;
      const auto& g = gblocks[i].tensor->data;
      auto& v = vblocks[i].tensor->data;
      for (std::size_t k = 0; k < w.size(); ++k) {
        // raw-space SGD: v = mu v + dL/dw_raw, w_raw -= lr v, with dL/dw_raw = gain dL/dw
        v[k] = config.momentum * v[k] + gain * g[k];
        w[k] -= config.learning_rate * gain * v[k];
      }
    }

    const StepLog log{step, epoch, batch_loss};
    result.steps.push_back(log);
    csv << step << ',' << epoch << ',' << batch_loss << '\n';
    if (outputs.on_step) outputs.on_step(log);
    epoch_sum += batch_loss;
    ++epoch_count;

    const bool epoch_end = (step + 1) % steps_per_epoch == 0 || step + 1 == total_steps;
    if (epoch_end) {
      const double mean = epoch_sum / epoch_count;
      result.epoch_losses.push_back(mean);
      epoch_csv << epoch << ',' << mean << '\n';
      if (outputs.on_epoch) outputs.on_epoch(epoch, mean);
      epoch_sum = 0.0;
      epoch_count = 0;
      ++result.epochs_run;
      if (!outputs.directory.empty() && outputs.checkpoint_each_epoch) {
        const fs::path ckpt = outputs.directory / "checkpoint.tgs";
        save_checkpoint(model, ckpt);
        if (result.checkpoints.empty()) result.checkpoints.push_back(ckpt);
      }
    }
  }
  if (!outputs.directory.empty()) {
    write_text(outputs.directory / "loss.csv", csv.str());
    write_text(outputs.directory / "epoch_loss.csv", epoch_csv.str());
    if (!outputs.checkpoint_each_epoch) {
      save_checkpoint(model, outputs.directory / "checkpoint.tgs");
      result.checkpoints.push_back(outputs.directory / "checkpoint.tgs");
    }
  }
  return result;
}

namespace {

constexpr char kMagic[8] = {'T', 'G', 'S', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

template <class T>
T get_le(std::string_view in, std::size_t pos) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

TrainableParams zero_params(const ModelConfig& c) {
  const auto& b = c.backbone;
  TrainableParams p;
  p.text_projection = Tensor({b.text_dim, b.text_hidden_dim});
  p.projection = ProjectionParams::zeros(b.text_dim, c.projection_hidden_dim, b.visual_dim);
  p.prompt_encoder =
      PromptEncoderParams::zeros(PromptEncoderConfig::for_embedding(b.embed_grid(b.input_size), b.embed_dim));
  p.decoder = DecoderParams::zeros(c.decoder.hidden_dim, b.embed_dim, b.hires_channels);
  return p;
}

}  // namespace

std::string serialize_checkpoint(const Model& model) {
  nlohmann::ordered_json header;
  header["format"] = "tgseg-checkpoint";
  header["config"] = detail::model_config_to_json(model.config());
  header["regime"] = freeze_regime_name(model.regime());
  header["dtype"] = "f64le";
  std::string payload;
  std::size_t offset = 0;
  nlohmann::ordered_json blocks = nlohmann::ordered_json::array();
  for (const ConstParamBlock& b : param_blocks(model.params())) {
    blocks.push_back({{"name", b.name},
                      {"component", component_name(b.component)},
                      {"shape", b.tensor->shape},
                      {"offset", offset},
                      {"count", b.tensor->numel()}});
    for (double v : b.tensor->data) put_le(payload, std::bit_cast<std::uint64_t>(v));
    offset += b.tensor->numel();
  }
  header["blocks"] = std::move(blocks);
  const std::string h = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  put_le(out, kCheckpointVersion);
  put_le(out, static_cast<std::uint64_t>(h.size()));
  out += h;
  out += payload;
  return out;
}

Model deserialize_checkpoint(std::string_view bytes) {
  constexpr std::size_t prefix = sizeof(kMagic) + 4 + 8;
  if (bytes.size() < prefix || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::io, "not a tgseg checkpoint");
  }
  const auto version = get_le<std::uint32_t>(bytes, 8);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::io, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto hlen = get_le<std::uint64_t>(bytes, 12);
  if (hlen > bytes.size() - prefix) throw Error(ErrorCode::io, "truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(prefix, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::io, std::string("corrupt checkpoint header: ") + e.what());
  }
  const std::string_view payload = bytes.substr(prefix + hlen);
  ModelConfig config;
  detail::model_config_from_json(header.at("config"), config);
  config.projection_weights.clear();
  config.validate();
  TrainableParams params = zero_params(config);
  std::size_t filled = 0;
  auto blocks = param_blocks(params);
  for (const auto& jb : header.at("blocks")) {
    const std::string name = jb.at("name").get<std::string>();
    auto it = std::find_if(blocks.begin(), blocks.end(), [&](const ParamBlock& b) { return b.name == name; });
    if (it == blocks.end()) throw Error(ErrorCode::io, "checkpoint has unknown block " + name);
    if (jb.at("shape").get<std::vector<int>>() != it->tensor->shape) {
      throw Error(ErrorCode::configuration, "checkpoint block " + name + " has an unexpected shape");
    }
    const auto offset = jb.at("offset").get<std::size_t>();
    const auto count = jb.at("count").get<std::size_t>();
    if (count != it->tensor->numel() || (offset + count) * 8 > payload.size()) {
      throw Error(ErrorCode::io, "checkpoint block " + name + " is truncated");
    }
    for (std::size_t k = 0; k < count; ++k) {
      it->tensor->data[k] = std::bit_cast<double>(get_le<std::uint64_t>(payload, (offset + k) * 8));
    }
    ++filled;
  }
  if (filled != blocks.size()) throw Error(ErrorCode::io, "checkpoint is missing parameter blocks");
  Model model(config, make_backbones(config.backbone), std::move(params));
  model.set_regime(parse_freeze_regime(header.value("regime", "clip_frozen")));
  return model;
}

void save_checkpoint(const Model& model, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  write_text(tmp, serialize_checkpoint(model));
  fs::rename(tmp, path);
}

Model load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::not_found, "checkpoint not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

std::string model_fingerprint(const Model& model) { return sha256_hex(serialize_checkpoint(model)); }

}  // namespace tgseg
