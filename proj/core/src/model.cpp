#include "tgseg/model.hpp"

#include <algorithm>
#include <cmath>

#include "tgseg/numerics.hpp"

namespace tgseg {

FreezeRegime parse_freeze_regime(std::string_view name) {
  if (name == "clip_frozen") return FreezeRegime::clip_frozen;
  if (name == "clip_partial") return FreezeRegime::clip_partial;
  throw Error(ErrorCode::unknown_regime,
              "unknown freeze regime '" + std::string(name) + "' (expected clip_frozen or clip_partial)");
}

std::string_view freeze_regime_name(FreezeRegime regime) noexcept {
  return regime == FreezeRegime::clip_partial ? "clip_partial" : "clip_frozen";
}

std::string_view component_name(Component c) noexcept {
  switch (c) {
    case Component::text_projection: return "text_projection";
    case Component::projection: return "projection";
    case Component::prompt_encoder: return "prompt_encoder";
    case Component::decoder: return "decoder";
  }
  return "unknown";
}

bool component_trainable(Component c, FreezeRegime regime) noexcept {
  return c != Component::text_projection || regime == FreezeRegime::clip_partial;
}

double ParameterGains::of(Component c) const noexcept {
  switch (c) {
    case Component::text_projection: return text_projection;
    case Component::projection: return projection;
    case Component::prompt_encoder: return prompt_encoder;
    case Component::decoder: return decoder;
  }
  return 1.0;
}

void ModelConfig::validate() const {
  backbone.validate();
  if (projection_hidden_dim < 1) throw Error(ErrorCode::configuration, "projection hidden_dim must be positive");
  if (decoder.hidden_dim < 1) throw Error(ErrorCode::configuration, "decoder hidden_dim must be positive");
  if (!(decoder.point_sigma > 0)) throw Error(ErrorCode::configuration, "decoder point_sigma must be positive");
  for (double g : {gains.text_projection, gains.projection, gains.prompt_encoder, gains.decoder}) {
    if (!(g > 0) || !std::isfinite(g)) throw Error(ErrorCode::configuration, "parameter gains must be positive");
  }
  const int side = backbone.embed_grid(backbone.input_size);
  if (kSimilarityInputSize % side != 0) {
    throw Error(ErrorCode::configuration, "embedding grid side must divide 256");
  }
}

TrainableParams zeros_like(const TrainableParams& p) {
  TrainableParams z;
  z.text_projection = tgseg::zeros_like(p.text_projection);
  z.projection = ProjectionParams::zeros(p.projection.text_dim(), p.projection.hidden_dim(),
                                         p.projection.visual_dim());
  z.prompt_encoder = PromptEncoderParams::zeros(p.prompt_encoder.config());
  z.decoder = DecoderParams::zeros(p.decoder.hidden_dim(), p.decoder.embed_dim(), p.decoder.hires_channels());
  return z;
}

namespace {

template <class Params, class Block>
std::vector<Block> blocks_of(Params& p) {
  using C = Component;
  auto& pe = p.prompt_encoder;
  auto& d = p.decoder;
  return {
      {"text.final_projection", C::text_projection, &p.text_projection},
      {"projection.w_a", C::projection, &p.projection.w_a},
      {"projection.b_a", C::projection, &p.projection.b_a},
      {"projection.w_b", C::projection, &p.projection.w_b},
      {"projection.b_b", C::projection, &p.projection.b_b},
      {"prompt_encoder.conv1_w", C::prompt_encoder, &pe.conv1_w},
      {"prompt_encoder.conv1_b", C::prompt_encoder, &pe.conv1_b},
      {"prompt_encoder.norm1_scale", C::prompt_encoder, &pe.norm1_scale},
      {"prompt_encoder.norm1_shift", C::prompt_encoder, &pe.norm1_shift},
      {"prompt_encoder.conv2_w", C::prompt_encoder, &pe.conv2_w},
      {"prompt_encoder.conv2_b", C::prompt_encoder, &pe.conv2_b},
      {"prompt_encoder.norm2_scale", C::prompt_encoder, &pe.norm2_scale},
      {"prompt_encoder.norm2_shift", C::prompt_encoder, &pe.norm2_shift},
      {"prompt_encoder.out_w", C::prompt_encoder, &pe.out_w},
      {"prompt_encoder.out_b", C::prompt_encoder, &pe.out_b},
      {"decoder.w_embed", C::decoder, &d.w_embed},
      {"decoder.w_hires", C::decoder, &d.w_hires},
      {"decoder.bias", C::decoder, &d.bias},
      {"decoder.box_inside", C::decoder, &d.box_inside},
      {"decoder.box_outside", C::decoder, &d.box_outside},
      {"decoder.point_fg", C::decoder, &d.point_fg},
      {"decoder.point_bg", C::decoder, &d.point_bg},
      {"decoder.w_gate", C::decoder, &d.w_gate},
      {"decoder.w_out", C::decoder, &d.w_out},
      {"decoder.b_out", C::decoder, &d.b_out},
  };
}

}  // namespace

std::vector<ParamBlock> param_blocks(TrainableParams& params) {
  return blocks_of<TrainableParams, ParamBlock>(params);
}

std::vector<ConstParamBlock> param_blocks(const TrainableParams& params) {
  return blocks_of<const TrainableParams, ConstParamBlock>(params);
}

Model::Model(ModelConfig config, std::shared_ptr<const Backbones> backbones, TrainableParams params)
    : config_(std::move(config)), backbones_(std::move(backbones)), params_(std::move(params)) {
  if (!backbones_) throw Error(ErrorCode::configuration, "model needs backbones");
  const auto& b = config_.backbone;
  const int side = b.embed_grid(b.input_size);
  const PromptEncoderConfig pe = params_.prompt_encoder.config();
  if (params_.text_projection.shape != std::vector<int>{b.text_dim, b.text_hidden_dim} ||
      params_.projection.text_dim() != b.text_dim || params_.projection.visual_dim() != b.visual_dim ||
      pe.output_size() != side || pe.embed_dim != b.embed_dim || params_.decoder.embed_dim() != b.embed_dim ||
      params_.decoder.hires_channels() != b.hires_channels) {
    throw Error(ErrorCode::configuration, "trainable weights do not match the backbone dimensions");
  }
  params_.projection.validate();
}

TrainableParams Model::initial_params(const ModelConfig& config, const Backbones& backbones) {
  const auto& b = config.backbone;
  TrainableParams p;
  p.text_projection = backbones.text_final_projection();
  if (config.projection_weights.empty()) {
    p.projection = ProjectionParams::init(b.text_dim, config.projection_hidden_dim, b.visual_dim, config.init_seed);
  } else {
    p.projection = load_projection_json(config.projection_weights);
  }
  const int side = b.embed_grid(b.input_size);
  p.prompt_encoder = PromptEncoderParams::init(PromptEncoderConfig::for_embedding(side, b.embed_dim), config.init_seed);
  p.decoder = DecoderParams::init(config.decoder.hidden_dim, b.embed_dim, b.hires_channels, config.init_seed);
  return p;
}

Model Model::create(const ModelConfig& config) {
  config.validate();
  std::shared_ptr<const Backbones> backbones = make_backbones(config.backbone);
  TrainableParams params = initial_params(config, *backbones);
  return Model(config, std::move(backbones), std::move(params));
}

FeatureMap resize_image(const FeatureMap& image, int height, int width) {
  if (image.height() == height && image.width() == width) return image;
  return numerics::bilinear_resample(image, height, width);
}

GeometricPrompt scale_geometry(const GeometricPrompt& geometry, double sx, double sy) {
  GeometricPrompt out = geometry;
  if (out.box) {
    out.box->x_min *= sx;
    out.box->x_max *= sx;
    out.box->y_min *= sy;
    out.box->y_max *= sy;
  }
  for (PromptPoint& p : out.points) {
    p.x *= sx;
    p.y *= sy;
  }
  return out;
}

EncodedImage Model::encode_image(const FeatureMap& image) const {
  if (image.channels() != 3) throw Error(ErrorCode::invalid_input, "expected an RGB image");
  if (image.height() < 1 || image.width() < 1) throw Error(ErrorCode::invalid_size, "empty image");
  const int s = input_size();
  const FeatureMap resized = resize_image(image, s, s);
  EncodedImage out;
  auto [patches, heads] = backbones_->encode_patches(resized);
  out.patches = std::move(patches);
  out.heads = std::move(heads);
  out.embedding = backbones_->encode_image_for_decoder(resized, true);
  out.source_height = image.height();
  out.source_width = image.width();
  return out;
}

std::vector<double> Model::embed_text(std::string_view prompt, std::vector<double>* body) const {
  std::vector<double> b = backbones_->encode_text_body(prompt);
  std::vector<double> t = apply_text_projection(params_.text_projection, b);
  if (body) *body = std::move(b);
  return t;
}

std::vector<double> Model::psi(std::string_view prompt) const {
  return project_text(embed_text(prompt), params_.projection);
}

SimilarityMap Model::similarity_map(const EncodedImage& image, std::string_view prompt) const {
  return dense_similarity_map(image.patches, psi(prompt), config_.normalization, normalize_prompt(prompt));
}

MaskLogits Model::forward(const EncodedImage& image, std::string_view prompt, const GeometricPrompt& geometry,
                          ForwardCache* cache) const {
  const FeatureMap& emb = image.embedding.values;
  const BundleGeometry dims{input_size(), input_size(), emb.height(), emb.width(), emb.channels()};
  std::optional<FeatureMap> dense;
  std::string text;
  if (!prompt.empty()) {
    text = normalize_prompt(prompt);
    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c.text = embed_text(text, &c.text_body);
    c.psi = project_text(c.text, params_.projection, &c.projection);
    SimilarityMap sim = dense_similarity_map(image.patches, c.psi, config_.normalization, text);
    c.similarity_input = prepare_similarity_input(sim);
    dense = encode_similarity_map(c.similarity_input, params_.prompt_encoder, emb.height(), emb.width(),
                                  cache ? &c.prompt_encoder : nullptr);
  }
  const PromptBundle bundle = build_prompt_bundle(geometry, std::move(dense), std::move(text), dims);
  return predict_mask(image.embedding, bundle, params_.decoder, config_.decoder, cache ? &cache->decoder : nullptr);
}

void Model::backward(const Grid2D& grad_logits, const EncodedImage& image, const ForwardCache& cache,
                     TrainableParams& grads) const {
  const bool semantic = !cache.psi.empty();
  FeatureMap grad_dense;
  predict_mask_backward(grad_logits, cache.decoder, params_.decoder, grads.decoder, semantic ? &grad_dense : nullptr);
  if (!semantic) return;
  const Grid2D grad_input =
      encode_similarity_map_backward(grad_dense, cache.prompt_encoder, params_.prompt_encoder, grads.prompt_encoder);
  const FeatureMap& f = image.patches.features;
  const Grid2D grad_map = numerics::bilinear_resample_adjoint(grad_input, f.height(), f.width());
  std::vector<double> grad_psi(cache.psi.size(), 0.0);
  dense_similarity_map_backward(image.patches, cache.psi, config_.normalization, grad_map, grad_psi);
  const bool partial = component_trainable(Component::text_projection, regime_);
  std::vector<double> grad_text(partial ? cache.text.size() : 0, 0.0);
  project_text_backward(grad_psi, cache.projection, params_.projection, grads.projection, grad_text);
  if (!partial) return;
  const std::size_t hidden = cache.text_body.size();
  for (std::size_t i = 0; i < grad_text.size(); ++i) {
    double* row = grads.text_projection.data.data() + i * hidden;
    for (std::size_t j = 0; j < hidden; ++j) row[j] += grad_text[i] * cache.text_body[j];
  }
}

Prediction Model::predict(const FeatureMap& image, std::string_view prompt, const GeometricPrompt& geometry) const {
  return predict(encode_image(image), prompt, geometry);
}

Prediction Model::predict(const EncodedImage& image, std::string_view prompt, const GeometricPrompt& geometry) const {
  const double sx = static_cast<double>(input_size()) / image.source_width;
  const double sy = static_cast<double>(input_size()) / image.source_height;
  if (geometry.box) validate_box(*geometry.box, image.source_height, image.source_width);
  const GeometricPrompt scaled = scale_geometry(geometry, sx, sy);
  Prediction out;
  MaskLogits logits = forward(image, prompt, scaled);
  out.logits = image.source_height == logits.values.height() && image.source_width == logits.values.width()
                   ? std::move(logits.values)
                   : numerics::bilinear_resample(logits.values, image.source_height, image.source_width);
  out.mask = threshold_logits(out.logits);
  if (!prompt.empty()) {
    const std::vector<double> p = psi(prompt);
    out.similarity = dense_similarity_map(image.patches, p, config_.normalization, normalize_prompt(prompt));
    out.heads = score_heads(image.patches, image.heads, p);
  }
  return out;
}

}  // namespace tgseg
