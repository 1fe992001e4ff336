#include "tgseg/projection.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "tgseg/numerics.hpp"
#include "tgseg/rng.hpp"

namespace tgseg {

ProjectionParams ProjectionParams::zeros(int text_dim, int hidden_dim, int visual_dim) {
  return {Tensor({text_dim, hidden_dim}), Tensor({hidden_dim}), Tensor({hidden_dim, visual_dim}),
          Tensor({visual_dim})};
}

ProjectionParams ProjectionParams::init(int text_dim, int hidden_dim, int visual_dim, std::uint64_t seed) {
  ProjectionParams p = zeros(text_dim, hidden_dim, visual_dim);
  Rng rng(mix_seed(seed, fnv1a64("projection")));
  for (double& v : p.w_a.data) v = rng.normal() / std::sqrt(static_cast<double>(text_dim));
  for (double& v : p.w_b.data) v = rng.normal() / std::sqrt(static_cast<double>(hidden_dim));
  return p;
}

void ProjectionParams::validate() const {
  if (w_a.shape.size() != 2 || w_b.shape.size() != 2 || b_a.shape.size() != 1 || b_b.shape.size() != 1 ||
      b_a.shape[0] != w_a.shape[1] || w_b.shape[0] != w_a.shape[1] || b_b.shape[0] != w_b.shape[1]) {
    throw Error(ErrorCode::configuration, "projection parameter blocks have inconsistent dimensions");
  }
}

std::vector<double> project_text(std::span<const double> text, const ProjectionParams& params,
                                 ProjectionCache* cache) {
  const int dt = params.text_dim(), dh = params.hidden_dim(), dv = params.visual_dim();
  if (static_cast<int>(text.size()) != dt) {
    throw Error(ErrorCode::configuration, "text embedding dimension does not match projection");
  }
  std::vector<double> hidden(params.b_a.data);
  for (int i = 0; i < dt; ++i) {
    const double ti = text[i];
    const double* row = params.w_a.data.data() + static_cast<std::size_t>(i) * dh;
    for (int j = 0; j < dh; ++j) hidden[j] += row[j] * ti;
  }
  for (double& h : hidden) h = std::tanh(h);
  std::vector<double> out(params.b_b.data);
  for (int j = 0; j < dh; ++j) {
    const double hj = hidden[j];
    const double* row = params.w_b.data.data() + static_cast<std::size_t>(j) * dv;
    for (int k = 0; k < dv; ++k) out[k] += row[k] * hj;
  }
  if (cache) {
    cache->input.assign(text.begin(), text.end());
    cache->hidden = std::move(hidden);
  }
  return out;
}

void project_text_backward(std::span<const double> grad_out, const ProjectionCache& cache,
                           const ProjectionParams& params, ProjectionParams& grads,
                           std::span<double> grad_text) {
  const int dt = params.text_dim(), dh = params.hidden_dim(), dv = params.visual_dim();
  std::vector<double> grad_pre(dh, 0.0);
  for (int k = 0; k < dv; ++k) grads.b_b[k] += grad_out[k];
  for (int j = 0; j < dh; ++j) {
    const double hj = cache.hidden[j];
    const double* row = params.w_b.data.data() + static_cast<std::size_t>(j) * dv;
    double* grow = grads.w_b.data.data() + static_cast<std::size_t>(j) * dv;
    double gh = 0.0;
    for (int k = 0; k < dv; ++k) {
      grow[k] += hj * grad_out[k];
      gh += row[k] * grad_out[k];
    }
    grad_pre[j] = gh * (1.0 - hj * hj);
    grads.b_a[j] += grad_pre[j];
  }
  for (int i = 0; i < dt; ++i) {
    const double ti = cache.input[i];
    const double* row = params.w_a.data.data() + static_cast<std::size_t>(i) * dh;
    double* grow = grads.w_a.data.data() + static_cast<std::size_t>(i) * dh;
    double gt = 0.0;
    for (int j = 0; j < dh; ++j) {
      grow[j] += ti * grad_pre[j];
      gt += row[j] * grad_pre[j];
    }
    if (!grad_text.empty()) grad_text[i] += gt;
  }
}

std::vector<double> attention_pool(const PatchFeatureGrid& patches, const Grid2D& attention_logits) {
  const FeatureMap& v = patches.features;
  if (attention_logits.height() != v.height() || attention_logits.width() != v.width()) {
    throw Error(ErrorCode::shape_mismatch, "attention map shape does not match the patch grid");
  }
  const Grid2D weights = numerics::spatial_softmax(attention_logits);
  std::vector<double> pooled(v.channels(), 0.0);
  for (int y = 0; y < v.height(); ++y) {
    for (int x = 0; x < v.width(); ++x) {
      const double w = weights(y, x);
      const auto f = v.pixel(y, x);
      for (int c = 0; c < v.channels(); ++c) pooled[c] += w * f[c];
    }
  }
  return pooled;
}

HeadScores score_heads(const PatchFeatureGrid& patches, const AttentionHeadMaps& heads,
                       std::span<const double> psi) {
  if (static_cast<int>(psi.size()) != patches.features.channels()) {
    throw Error(ErrorCode::configuration, "projected text dimension does not match visual features");
  }
  if (heads.maps.empty()) throw Error(ErrorCode::invalid_input, "no attention heads");
  HeadScores scores;
  scores.per_head.reserve(heads.maps.size());
  for (std::size_t i = 0; i < heads.maps.size(); ++i) {
    const std::vector<double> pooled = attention_pool(patches, heads.maps[i]);
    double s = 0.0;
    try {
      s = numerics::cosine_similarity(pooled, psi);
    } catch (const Error& e) {
      throw Error(e.code(), "head " + std::to_string(i) + ": " + e.what());
    }
    scores.per_head.push_back(s);
    if (i == 0 || s > scores.best) {
      scores.best = s;
      scores.best_index = static_cast<int>(i);
    }
  }
  return scores;
}

SimilarityMap dense_similarity_map(const PatchFeatureGrid& patches, std::span<const double> psi,
                                   SimilarityNormalization normalization, std::string prompt) {
  const FeatureMap& v = patches.features;
  if (static_cast<int>(psi.size()) != v.channels()) {
    throw Error(ErrorCode::configuration, "projected text dimension does not match visual features");
  }
  if (!(numerics::norm(psi) > 0.0)) {
    throw Error(ErrorCode::degenerate_vector, "projected text embedding has zero norm");
  }
  SimilarityMap map{Grid2D(v.height(), v.width()), std::move(prompt), normalization};
  for (int y = 0; y < v.height(); ++y) {
    for (int x = 0; x < v.width(); ++x) {
      double s = 0.0;
      try {
        s = numerics::cosine_similarity(v.pixel(y, x), psi);
      } catch (const Error& e) {
        throw Error(e.code(), "patch (" + std::to_string(y) + ", " + std::to_string(x) + "): " + e.what());
      }
      map.grid(y, x) = normalization == SimilarityNormalization::unit_interval ? 0.5 * (s + 1.0) : s;
    }
  }
  return map;
}

void dense_similarity_map_backward(const PatchFeatureGrid& patches, std::span<const double> psi,
                                   SimilarityNormalization normalization, const Grid2D& grad_map,
                                   std::span<double> grad_psi) {
  const FeatureMap& v = patches.features;
  const double scale = normalization == SimilarityNormalization::unit_interval ? 0.5 : 1.0;
  for (int y = 0; y < v.height(); ++y) {
    for (int x = 0; x < v.width(); ++x) {
      const double g = grad_map(y, x) * scale;
      if (g != 0.0) numerics::cosine_similarity_grad_v(v.pixel(y, x), psi, g, grad_psi);
    }
  }
}

void save_projection_json(const ProjectionParams& params, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "tgseg-projection";
  j["version"] = 1;
  j["text_dim"] = params.text_dim();
  j["hidden_dim"] = params.hidden_dim();
  j["visual_dim"] = params.visual_dim();
  j["layout"] = "row-major";
  j["w_a"] = params.w_a.data;
  j["b_a"] = params.b_a.data;
  j["w_b"] = params.w_b.data;
  j["b_b"] = params.b_b.data;
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << j.dump() << '\n';
}

ProjectionParams load_projection_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::not_found, "projection weights not found: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::io, path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "tgseg-projection" || j.value("version", 0) != 1) {
    throw Error(ErrorCode::configuration, path.string() + ": not a version-1 projection file");
  }
  ProjectionParams p = ProjectionParams::zeros(j.at("text_dim").get<int>(), j.at("hidden_dim").get<int>(),
                                                j.at("visual_dim").get<int>());
  auto fill = [&](Tensor& t, const char* key) {
    auto values = j.at(key).get<std::vector<double>>();
    if (values.size() != t.numel()) {
      throw Error(ErrorCode::configuration, path.string() + ": block " + key + " has the wrong size");
    }
    t.data = std::move(values);
  };
  fill(p.w_a, "w_a");
  fill(p.b_a, "b_a");
  fill(p.w_b, "w_b");
  fill(p.b_b, "b_b");
  return p;
}

}  // namespace tgseg
