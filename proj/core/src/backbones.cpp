#include "tgseg/backbones.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>

#include "tgseg/rng.hpp"

namespace tgseg {

void BackboneConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw Error(ErrorCode::configuration, std::string(name) + " must be positive");
  };
  positive(input_size, "input_size");
  positive(patch_size, "patch_size");
  positive(text_dim, "text_dim");
  positive(text_hidden_dim, "text_hidden_dim");
  positive(text_buckets, "text_buckets");
  positive(visual_dim, "visual_dim");
  positive(heads, "heads");
  positive(embed_dim, "embed_dim");
  positive(embed_stride, "embed_stride");
  positive(hires_channels, "hires_channels");
  if (input_size < patch_size || input_size < embed_stride) {
    throw Error(ErrorCode::configuration, "input_size smaller than one patch");
  }
}

std::string normalize_prompt(std::string_view prompt) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t b = 0, e = prompt.size();
  while (b < e && is_space(prompt[b])) ++b;
  while (e > b && is_space(prompt[e - 1])) --e;
  if (b == e) throw Error(ErrorCode::invalid_prompt, "prompt is empty");
  std::string out(prompt.substr(b, e - b));
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

TextEmbedding Backbones::encode_text(std::string_view prompt) const {
  const std::string norm = normalize_prompt(prompt);
  return {apply_text_projection(text_final_projection(), encode_text_body(norm)), norm};
}

std::vector<double> apply_text_projection(const Tensor& projection, std::span<const double> body) {
  const int rows = projection.shape.at(0);
  const int cols = projection.shape.at(1);
  if (static_cast<int>(body.size()) != cols) {
    throw Error(ErrorCode::configuration, "text projection width does not match encoder body");
  }
  std::vector<double> out(rows, 0.0);
  for (int r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += projection[static_cast<std::size_t>(r) * cols + c] * body[c];
    out[r] = s;
  }
  return out;
}

namespace {

Tensor seeded_normal(std::uint64_t seed, std::string_view name, std::vector<int> shape, double stddev) {
  Rng rng(mix_seed(seed, fnv1a64(name)));
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.normal() * stddev;
  return t;
}

void check_image(const FeatureMap& image, int min_side) {
  if (image.channels() != 3) throw Error(ErrorCode::invalid_size, "expected an RGB image");
  if (image.height() < min_side || image.width() < min_side) {
    throw Error(ErrorCode::invalid_size, "image smaller than one patch");
  }
}

// out = tanh(W s + b) for W of shape (rows x n).
void affine_tanh(const Tensor& w, const Tensor& b, const double* s, int n, std::span<double> out) {
  const int rows = w.shape[0];
  for (int r = 0; r < rows; ++r) {
    double acc = b[r];
    for (int k = 0; k < n; ++k) acc += w[static_cast<std::size_t>(r) * n + k] * s[k];
    out[r] = std::tanh(acc);
  }
}

}  // namespace

void block_statistics(const FeatureMap& image, int y0, int x0, int rows, int cols, double out[9]) {
  const double n = static_cast<double>(rows) * cols;
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0;
    for (int y = y0; y < y0 + rows; ++y) {
      for (int x = x0; x < x0 + cols; ++x) sum += image.at(y, x, c);
    }
    const double mean = sum / n;
    double sq = 0.0, dev = 0.0;
    for (int y = y0; y < y0 + rows; ++y) {
      for (int x = x0; x < x0 + cols; ++x) {
        const double d = image.at(y, x, c) - mean;
        sq += d * d;
        dev = std::max(dev, std::abs(d));
      }
    }
    const double sd = n > 1 ? std::sqrt(sq / (n - 1)) : 0.0;
    out[c] = mean - 0.5;
    out[3 + c] = 4.0 * sd;
    out[6 + c] = 2.0 * dev;
  }
}

ToyBackbones::ToyBackbones(BackboneConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto seed = config_.seed;
  const auto& c = config_;
  text_body_ = seeded_normal(seed, "text.body", {c.text_hidden_dim, c.text_buckets}, 1.0 / std::sqrt(8.0));
  text_projection_ = seeded_normal(seed, "text.final_projection", {c.text_dim, c.text_hidden_dim},
                                   1.0 / std::sqrt(static_cast<double>(c.text_hidden_dim)));
  patch_proj_ = seeded_normal(seed, "visual.patch_proj", {c.visual_dim, 9}, 4.0);
  patch_bias_ = seeded_normal(seed, "visual.patch_bias", {c.visual_dim}, 0.1);
  head_queries_ = seeded_normal(seed, "visual.head_queries", {c.heads, c.visual_dim}, 1.0);
  embed_proj_ = seeded_normal(seed, "segmentation.embed_proj", {c.embed_dim, 9}, 2.0);
  embed_bias_ = seeded_normal(seed, "segmentation.embed_bias", {c.embed_dim}, 0.3);
  hires_proj_ = seeded_normal(seed, "segmentation.hires_proj", {c.hires_channels, 6}, 1.5);
  hires_bias_ = seeded_normal(seed, "segmentation.hires_bias", {c.hires_channels}, 0.2);
}

std::vector<double> ToyBackbones::encode_text_body(std::string_view prompt) const {
  const std::string norm = normalize_prompt(prompt);
  const std::string padded = "^" + norm + "$";
  std::vector<double> counts(config_.text_buckets, 0.0);
  for (std::size_t k = 0; k + 3 <= padded.size(); ++k) {
    counts[fnv1a64(std::string_view(padded).substr(k, 3)) % config_.text_buckets] += 1.0;
  }
  std::vector<double> hidden(config_.text_hidden_dim);
  const Tensor zero_bias({config_.text_hidden_dim});
  affine_tanh(text_body_, zero_bias, counts.data(), config_.text_buckets, hidden);
  return hidden;
}

std::pair<PatchFeatureGrid, AttentionHeadMaps> ToyBackbones::encode_patches(const FeatureMap& image) const {
  const int p = config_.patch_size;
  check_image(image, p);
  const int gh = image.height() / p;
  const int gw = image.width() / p;
  PatchFeatureGrid grid{FeatureMap(gh, gw, config_.visual_dim), p, image.height(), image.width()};
  double stats[9];
  for (int y = 0; y < gh; ++y) {
    for (int x = 0; x < gw; ++x) {
      block_statistics(image, y * p, x * p, p, p, stats);
      affine_tanh(patch_proj_, patch_bias_, stats, 9, grid.features.pixel(y, x));
    }
  }
  AttentionHeadMaps heads;
  heads.maps.reserve(config_.heads);
  for (int h = 0; h < config_.heads; ++h) {
    Grid2D logits(gh, gw);
    const double* q = head_queries_.data.data() + static_cast<std::size_t>(h) * config_.visual_dim;
    for (int y = 0; y < gh; ++y) {
      for (int x = 0; x < gw; ++x) {
        const auto f = grid.features.pixel(y, x);
        double s = 0.0;
        for (int k = 0; k < config_.visual_dim; ++k) s += q[k] * f[k];
        logits(y, x) = s;
      }
    }
    heads.maps.push_back(std::move(logits));
  }
  return {std::move(grid), std::move(heads)};
}

ImageEmbedding ToyBackbones::encode_image_for_decoder(const FeatureMap& image, bool with_hires) const {
  const int s = config_.embed_stride;
  check_image(image, s);
  const int eh = image.height() / s;
  const int ew = image.width() / s;
  ImageEmbedding out{FeatureMap(eh, ew, config_.embed_dim), {}};
  double stats[9];
  for (int y = 0; y < eh; ++y) {
    for (int x = 0; x < ew; ++x) {
      block_statistics(image, y * s, x * s, s, s, stats);
      affine_tanh(embed_proj_, embed_bias_, stats, 9, out.values.pixel(y, x));
    }
  }
  if (!with_hires) return out;

  // Early-layer stand-in: per-pixel deviation from the 5x5 local mean
  // (replicate border) plus the centred colour.
  const int h = image.height(), w = image.width();
  FeatureMap hires(h, w, config_.hires_channels);
  double feat[6];
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        for (int dy = -2; dy <= 2; ++dy) {
          const int yy = std::clamp(y + dy, 0, h - 1);
          for (int dx = -2; dx <= 2; ++dx) sum += image.at(yy, std::clamp(x + dx, 0, w - 1), c);
        }
        const double v = image.at(y, x, c);
        feat[c] = 3.0 * (v - sum / 25.0);
        feat[3 + c] = v - 0.5;
      }
      affine_tanh(hires_proj_, hires_bias_, feat, 6, hires.pixel(y, x));
    }
  }
  out.interm_features.push_back(std::move(hires));
  return out;
}

std::vector<WeightView> ToyBackbones::frozen_weights() const {
  return {
      {"text_encoder.body", &text_body_},
      {"visual_encoder.patch_proj", &patch_proj_},
      {"visual_encoder.patch_bias", &patch_bias_},
      {"visual_encoder.head_queries", &head_queries_},
      {"segmentation_encoder.embed_proj", &embed_proj_},
      {"segmentation_encoder.embed_bias", &embed_bias_},
      {"segmentation_encoder.hires_proj", &hires_proj_},
      {"segmentation_encoder.hires_bias", &hires_bias_},
  };
}

std::unique_ptr<Backbones> make_backbones(const BackboneConfig& config) {
  if (config.mode == BackboneMode::toy) return std::make_unique<ToyBackbones>(config);
  for (const auto* locator : {&config.text_weights, &config.visual_weights, &config.segmentation_weights}) {
    if (locator->empty()) {
      throw Error(ErrorCode::configuration, "real mode requires text, visual and segmentation weight locators");
    }
    const bool url = locator->rfind("http://", 0) == 0 || locator->rfind("https://", 0) == 0;
    if (!url && !std::filesystem::exists(*locator)) {
      throw Error(ErrorCode::not_found, "weights not found: " + *locator);
    }
  }
  throw Error(ErrorCode::backend_unavailable,
              "real-mode encoders need an inference runtime that this build does not include");
}

TextEmbedding encode_text(std::string_view prompt, const BackboneConfig& config) {
  return make_backbones(config)->encode_text(prompt);
}

}  // namespace tgseg
