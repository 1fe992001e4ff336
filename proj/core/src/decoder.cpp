#include "tgseg/decoder.hpp"

#include <Eigen/Core>
#include <cmath>

#include "activations.hpp"
#include "tgseg/numerics.hpp"
#include "tgseg/rng.hpp"

namespace tgseg {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;

ConstMatrixMap as_matrix(const Tensor& t) { return {t.data.data(), t.shape[0], t.shape[1]}; }
MatrixMap as_matrix(Tensor& t) { return {t.data.data(), t.shape[0], t.shape[1]}; }
ConstVectorMap as_vector(const Tensor& t) { return {t.data.data(), static_cast<Eigen::Index>(t.numel())}; }
VectorMap as_vector(Tensor& t) { return {t.data.data(), static_cast<Eigen::Index>(t.numel())}; }

ConstMatrixMap pixels_of(const FeatureMap& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.height()) * m.width(), m.channels()};
}

}  // namespace

DecoderParams DecoderParams::zeros(int hidden, int embed_dim, int hires_channels) {
  return {Tensor({hidden, embed_dim}), Tensor({hidden, hires_channels}), Tensor({hidden}), Tensor({hidden}),
          Tensor({hidden}),           Tensor({hidden}),                 Tensor({hidden}), Tensor({hidden, embed_dim}),
          Tensor({hidden}),           Tensor({1})};
}

DecoderParams DecoderParams::init(int hidden, int embed_dim, int hires_channels, std::uint64_t seed) {
  DecoderParams p = zeros(hidden, embed_dim, hires_channels);
  Rng rng(mix_seed(seed, fnv1a64("decoder")));
  const double se = 1.0 / std::sqrt(static_cast<double>(embed_dim));
  const double sh = 1.0 / std::sqrt(static_cast<double>(hires_channels));
  const double so = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (double& v : p.w_embed.data) v = rng.normal() * se;
  for (double& v : p.w_hires.data) v = rng.normal() * sh;
  for (double& v : p.w_gate.data) v = rng.normal() * se;
  for (double& v : p.w_out.data) v = rng.normal() * so;
  return p;
}

MaskLogits predict_mask(const ImageEmbedding& image, const PromptBundle& bundle, const DecoderParams& params,
                        const DecoderConfig& config, DecoderCache* cache) {
  const FeatureMap& emb = image.values;
  if (image.interm_features.empty()) {
    throw Error(ErrorCode::configuration, "decoder needs early-layer features for high-resolution fusion");
  }
  const FeatureMap& hires = image.interm_features.front();
  if (!bundle.dense_embedding.same_shape(emb)) {
    throw Error(ErrorCode::configuration, "dense prompt embedding does not match the image embedding");
  }
  if (emb.channels() != params.embed_dim() || hires.channels() != params.hires_channels()) {
    throw Error(ErrorCode::configuration, "decoder weights do not match the encoder widths");
  }
  const int oh = hires.height(), ow = hires.width();
  const Eigen::Index npx = static_cast<Eigen::Index>(oh) * ow;

  FeatureMap combined = emb;
  {
    auto c = combined.data();
    auto d = bundle.dense_embedding.data();
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += d[i];
  }
  const Eigen::VectorXd global = pixels_of(combined).colwise().mean().transpose();
  FeatureMap up = numerics::bilinear_resample(combined, oh, ow);

  RowMatrix pre = pixels_of(up) * as_matrix(params.w_embed).transpose();
  pre.noalias() += pixels_of(hires) * as_matrix(params.w_hires).transpose();
  pre.rowwise() += as_vector(params.bias).transpose();

  std::vector<double> inside, fg, bg;
  for (const SparseToken& t : bundle.sparse_tokens) {
    if (t.kind == TokenKind::box) {
      if (inside.empty()) inside.assign(npx, 0.0);
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          const double cx = x + 0.5, cy = y + 0.5;
          if (cx >= t.coords[0] && cx <= t.coords[2] && cy >= t.coords[1] && cy <= t.coords[3]) {
            inside[static_cast<std::size_t>(y) * ow + x] = 1.0;
          }
        }
      }
    } else {
      auto& acc = t.kind == TokenKind::foreground_point ? fg : bg;
      if (acc.empty()) acc.assign(npx, 0.0);
      const double inv = 1.0 / (2.0 * config.point_sigma * config.point_sigma);
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          const double dx = x + 0.5 - t.coords[0], dy = y + 0.5 - t.coords[1];
          acc[static_cast<std::size_t>(y) * ow + x] += std::exp(-(dx * dx + dy * dy) * inv);
        }
      }
    }
  }
  auto add_token = [&](const std::vector<double>& weight, const Tensor& vec, double offset, double sign) {
    const auto v = as_vector(vec).transpose();
    for (Eigen::Index p = 0; p < npx; ++p) {
      const double w = offset + sign * weight[p];
      if (w != 0.0) pre.row(p) += w * v;
    }
  };
  if (!inside.empty()) {
    add_token(inside, params.box_inside, 0.0, 1.0);
    add_token(inside, params.box_outside, 1.0, -1.0);
  }
  if (!fg.empty()) add_token(fg, params.point_fg, 0.0, 1.0);
  if (!bg.empty()) add_token(bg, params.point_bg, 0.0, 1.0);

  const Eigen::VectorXd out_vec = as_vector(params.w_out) + as_matrix(params.w_gate) * global;
  MaskLogits logits{Grid2D(oh, ow), oh, ow};
  VectorMap lv(logits.values.values().data(), npx);
  lv = pre.cwiseMax(0.0) * out_vec;
  lv.array() += params.b_out[0];

  if (cache) {
    cache->combined = std::move(combined);
    cache->global.assign(global.data(), global.data() + global.size());
    cache->upsampled = std::move(up);
    cache->hires = hires;
    cache->pre.assign(pre.data(), pre.data() + pre.size());
    cache->inside = std::move(inside);
    cache->fg = std::move(fg);
    cache->bg = std::move(bg);
    cache->out_vec.assign(out_vec.data(), out_vec.data() + out_vec.size());
  }
  return logits;
}

void predict_mask_backward(const Grid2D& grad_logits, const DecoderCache& cache, const DecoderParams& params,
                           DecoderParams& grads, FeatureMap* grad_dense) {
  const int hidden = params.hidden_dim();
  const Eigen::Index npx = static_cast<Eigen::Index>(grad_logits.size());
  ConstVectorMap g(grad_logits.values().data(), npx);
  ConstMatrixMap pre(cache.pre.data(), npx, hidden);
  const RowMatrix act = pre.cwiseMax(0.0);
  ConstVectorMap out_vec(cache.out_vec.data(), hidden);
  ConstVectorMap global(cache.global.data(), static_cast<Eigen::Index>(cache.global.size()));

  grads.b_out[0] += g.sum();
  const Eigen::VectorXd g_out_vec = act.transpose() * g;
  as_vector(grads.w_out) += g_out_vec;
  as_matrix(grads.w_gate) += g_out_vec * global.transpose();
  const Eigen::VectorXd g_global = as_matrix(params.w_gate).transpose() * g_out_vec;

  RowMatrix g_pre = g * out_vec.transpose();
  g_pre.array() *= (pre.array() > 0.0).cast<double>();

  as_matrix(grads.w_embed) += g_pre.transpose() * pixels_of(cache.upsampled);
  as_matrix(grads.w_hires) += g_pre.transpose() * pixels_of(cache.hires);
  as_vector(grads.bias) += g_pre.colwise().sum().transpose();
  auto token_grad = [&](const std::vector<double>& weight, Tensor& target, double offset, double sign) {
    Eigen::VectorXd w(npx);
    for (Eigen::Index p = 0; p < npx; ++p) w[p] = offset + sign * weight[p];
    as_vector(target) += g_pre.transpose() * w;
  };
  if (!cache.inside.empty()) {
    token_grad(cache.inside, grads.box_inside, 0.0, 1.0);
    token_grad(cache.inside, grads.box_outside, 1.0, -1.0);
  }
  if (!cache.fg.empty()) token_grad(cache.fg, grads.point_fg, 0.0, 1.0);
  if (!cache.bg.empty()) token_grad(cache.bg, grads.point_bg, 0.0, 1.0);

  if (!grad_dense) return;
  FeatureMap g_up(cache.upsampled.height(), cache.upsampled.width(), cache.upsampled.channels());
  MatrixMap(g_up.data().data(), npx, g_up.channels()) = g_pre * as_matrix(params.w_embed);
  FeatureMap g_comb = numerics::bilinear_resample_adjoint(g_up, cache.combined.height(), cache.combined.width());
  const double inv = 1.0 / (static_cast<double>(cache.combined.height()) * cache.combined.width());
  for (int y = 0; y < g_comb.height(); ++y) {
    for (int x = 0; x < g_comb.width(); ++x) {
      auto px = g_comb.pixel(y, x);
      for (int c = 0; c < g_comb.channels(); ++c) px[c] += g_global[c] * inv;
    }
  }
  *grad_dense = std::move(g_comb);
}

LossValue segmentation_loss(const Grid2D& logits, const BinaryMask& gt, const LossConfig& config,
                            Grid2D* grad_logits) {
  if (logits.height() != gt.height() || logits.width() != gt.width()) {
    throw Error(ErrorCode::shape_mismatch, "logits and ground-truth mask differ in shape");
  }
  const auto x = logits.values();
  const auto bits = gt.bits();
  const double n = static_cast<double>(x.size());
  double bce = 0.0, inter = 0.0, psum = 0.0, gsum = 0.0;
  std::vector<double> prob(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double gi = bits[i];
    bce += detail::softplus(x[i]) - gi * x[i];
    prob[i] = detail::sigmoid(x[i]);
    inter += prob[i] * gi;
    psum += prob[i];
    gsum += gi;
  }
  bce /= n;
  const double eps = config.dice_smooth;
  const double denom = psum + gsum + eps;
  const double numer = 2.0 * inter + eps;
  const double dice = 1.0 - numer / denom;
  LossValue value{config.bce_weight * bce + config.dice_weight * dice, bce, dice};
  if (!std::isfinite(value.total)) throw Error(ErrorCode::non_finite_loss, "segmentation loss is not finite");
  if (grad_logits) {
    *grad_logits = Grid2D(logits.height(), logits.width());
    auto gout = grad_logits->values();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double gi = bits[i];
      const double p = prob[i];
      const double d_bce = (p - gi) / n;
      const double d_dice_dp = -(2.0 * gi * denom - numer) / (denom * denom);
      gout[i] = config.bce_weight * d_bce + config.dice_weight * d_dice_dp * p * (1.0 - p);
    }
  }
  return value;
}

}  // namespace tgseg
