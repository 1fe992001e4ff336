#include "tgseg/prompt.hpp"

#include <cmath>
#include <string>

#include "activations.hpp"
#include "tgseg/numerics.hpp"
#include "tgseg/rng.hpp"

namespace tgseg {

int PromptEncoderConfig::output_size(int input_size) const {
  const int mid = (input_size - stride1) / stride1 + 1;
  return (mid - stride2) / stride2 + 1;
}

PromptEncoderConfig PromptEncoderConfig::for_embedding(int embed_side, int embed_dim) {
  if (embed_side < 1 || kSimilarityInputSize % embed_side != 0) {
    throw Error(ErrorCode::configuration, "embedding side must divide the 256-pixel similarity input");
  }
  const int factor = kSimilarityInputSize / embed_side;
  const int step = static_cast<int>(std::lround(std::sqrt(static_cast<double>(factor))));
  PromptEncoderConfig c;
  if (step * step == factor) {
    c.stride1 = c.stride2 = step;
  } else {
    c.stride1 = factor;
    c.stride2 = 1;
  }
  c.embed_dim = embed_dim;
  return c;
}

PromptEncoderConfig PromptEncoderParams::config() const {
  PromptEncoderConfig c;
  c.channels1 = conv1_w.shape.at(0);
  c.stride1 = conv1_w.shape.at(2);
  c.channels2 = conv2_w.shape.at(0);
  c.stride2 = conv2_w.shape.at(2);
  c.embed_dim = out_w.shape.at(0);
  return c;
}

PromptEncoderParams PromptEncoderParams::zeros(const PromptEncoderConfig& c) {
  PromptEncoderParams p;
  p.conv1_w = Tensor({c.channels1, 1, c.stride1, c.stride1});
  p.conv1_b = Tensor({c.channels1});
  p.norm1_scale = Tensor({c.channels1});
  p.norm1_shift = Tensor({c.channels1});
  p.conv2_w = Tensor({c.channels2, c.channels1, c.stride2, c.stride2});
  p.conv2_b = Tensor({c.channels2});
  p.norm2_scale = Tensor({c.channels2});
  p.norm2_shift = Tensor({c.channels2});
  p.out_w = Tensor({c.embed_dim, c.channels2});
  p.out_b = Tensor({c.embed_dim});
  return p;
}

PromptEncoderParams PromptEncoderParams::init(const PromptEncoderConfig& c, std::uint64_t seed) {
  PromptEncoderParams p = zeros(c);
  Rng rng(mix_seed(seed, fnv1a64("prompt_encoder")));
  const double s1 = 1.0 / c.stride1;
  const double s2 = 1.0 / std::sqrt(static_cast<double>(c.channels1 * c.stride2 * c.stride2));
  const double s3 = 1.0 / std::sqrt(static_cast<double>(c.channels2));
  for (double& v : p.conv1_w.data) v = rng.normal() * s1;
  for (double& v : p.conv2_w.data) v = rng.normal() * s2;
  for (double& v : p.out_w.data) v = rng.normal() * s3;
  std::fill(p.norm1_scale.data.begin(), p.norm1_scale.data.end(), 1.0);
  std::fill(p.norm2_scale.data.begin(), p.norm2_scale.data.end(), 1.0);
  return p;
}

Grid2D prepare_similarity_input(const SimilarityMap& map, int size) {
  return numerics::bilinear_resample(map.grid, size, size);
}

namespace {

// Convolution with kernel == stride and no padding over a channels-last map.
FeatureMap strided_conv(const FeatureMap& in, const Tensor& w, const Tensor& b) {
  const int cout = w.shape[0], cin = w.shape[1], k = w.shape[2];
  const int oh = (in.height() - k) / k + 1, ow = (in.width() - k) / k + 1;
  if (in.channels() != cin || oh < 1 || ow < 1) {
    throw Error(ErrorCode::configuration, "prompt encoder input does not fit its convolution");
  }
  FeatureMap out(oh, ow, cout);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      auto o = out.pixel(y, x);
      for (int co = 0; co < cout; ++co) {
        double acc = b[co];
        const double* wk = w.data.data() + static_cast<std::size_t>(co) * cin * k * k;
        for (int ci = 0; ci < cin; ++ci) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              acc += wk[(ci * k + ky) * k + kx] * in.at(y * k + ky, x * k + kx, ci);
            }
          }
        }
        o[co] = acc;
      }
    }
  }
  return out;
}

void strided_conv_backward(const FeatureMap& in, const Tensor& w, const FeatureMap& grad_out, Tensor& grad_w,
                           Tensor& grad_b, FeatureMap* grad_in) {
  const int cout = w.shape[0], cin = w.shape[1], k = w.shape[2];
  for (int y = 0; y < grad_out.height(); ++y) {
    for (int x = 0; x < grad_out.width(); ++x) {
      const auto g = grad_out.pixel(y, x);
      for (int co = 0; co < cout; ++co) {
        const double gc = g[co];
        if (gc == 0.0) continue;
        grad_b[co] += gc;
        const std::size_t base = static_cast<std::size_t>(co) * cin * k * k;
        for (int ci = 0; ci < cin; ++ci) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const std::size_t wi = base + (ci * k + ky) * k + kx;
              grad_w[wi] += gc * in.at(y * k + ky, x * k + kx, ci);
              if (grad_in) grad_in->at(y * k + ky, x * k + kx, ci) += gc * w[wi];
            }
          }
        }
      }
    }
  }
}

// act = gelu(scale * conv + shift), per channel.
FeatureMap affine_gelu(const FeatureMap& conv, const Tensor& scale, const Tensor& shift) {
  FeatureMap act(conv.height(), conv.width(), conv.channels());
  auto in = conv.data();
  auto out = act.data();
  const int c = conv.channels();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const int ch = static_cast<int>(i % c);
    out[i] = detail::gelu(scale[ch] * in[i] + shift[ch]);
  }
  return act;
}

// Accumulates affine grads and returns the gradient w.r.t. the conv output.
FeatureMap affine_gelu_backward(const FeatureMap& grad_act, const FeatureMap& conv, const Tensor& scale,
                                const Tensor& shift, Tensor& grad_scale, Tensor& grad_shift) {
  FeatureMap grad_conv(conv.height(), conv.width(), conv.channels());
  auto go = grad_act.data();
  auto in = conv.data();
  auto gi = grad_conv.data();
  const int c = conv.channels();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const int ch = static_cast<int>(i % c);
    const double gpre = go[i] * detail::gelu_grad(scale[ch] * in[i] + shift[ch]);
    grad_scale[ch] += gpre * in[i];
    grad_shift[ch] += gpre;
    gi[i] = gpre * scale[ch];
  }
  return grad_conv;
}

}  // namespace

FeatureMap encode_similarity_map(const Grid2D& input, const PromptEncoderParams& params, int expect_h,
                                 int expect_w, PromptEncoderCache* cache) {
  if (!input.all_finite()) throw Error(ErrorCode::invalid_input, "similarity input contains non-finite values");
  FeatureMap in(input.height(), input.width(), 1);
  std::copy(input.values().begin(), input.values().end(), in.data().begin());

  FeatureMap conv1 = strided_conv(in, params.conv1_w, params.conv1_b);
  FeatureMap act1 = affine_gelu(conv1, params.norm1_scale, params.norm1_shift);
  FeatureMap conv2 = strided_conv(act1, params.conv2_w, params.conv2_b);
  FeatureMap act2 = affine_gelu(conv2, params.norm2_scale, params.norm2_shift);
  if (act2.height() != expect_h || act2.width() != expect_w) {
    throw Error(ErrorCode::configuration,
                "prompt encoder produces a " + std::to_string(act2.height()) + "x" + std::to_string(act2.width()) +
                    " grid but the decoder expects " + std::to_string(expect_h) + "x" + std::to_string(expect_w));
  }
  const int de = params.out_w.shape[0], c2 = params.out_w.shape[1];
  FeatureMap out(act2.height(), act2.width(), de);
  for (int y = 0; y < act2.height(); ++y) {
    for (int x = 0; x < act2.width(); ++x) {
      const auto a = act2.pixel(y, x);
      auto o = out.pixel(y, x);
      for (int e = 0; e < de; ++e) {
        double acc = params.out_b[e];
        const double* row = params.out_w.data.data() + static_cast<std::size_t>(e) * c2;
        for (int k = 0; k < c2; ++k) acc += row[k] * a[k];
        o[e] = acc;
      }
    }
  }
  if (cache) {
    cache->input = input;
    cache->conv1 = std::move(conv1);
    cache->act1 = std::move(act1);
    cache->conv2 = std::move(conv2);
    cache->act2 = std::move(act2);
  }
  return out;
}

Grid2D encode_similarity_map_backward(const FeatureMap& grad_out, const PromptEncoderCache& cache,
                                      const PromptEncoderParams& params, PromptEncoderParams& grads) {
  const int de = params.out_w.shape[0], c2 = params.out_w.shape[1];
  FeatureMap grad_act2(cache.act2.height(), cache.act2.width(), c2);
  for (int y = 0; y < grad_out.height(); ++y) {
    for (int x = 0; x < grad_out.width(); ++x) {
      const auto g = grad_out.pixel(y, x);
      const auto a = cache.act2.pixel(y, x);
      auto ga = grad_act2.pixel(y, x);
      for (int e = 0; e < de; ++e) {
        const double ge = g[e];
        if (ge == 0.0) continue;
        grads.out_b[e] += ge;
        const std::size_t row = static_cast<std::size_t>(e) * c2;
        for (int k = 0; k < c2; ++k) {
          grads.out_w[row + k] += ge * a[k];
          ga[k] += ge * params.out_w[row + k];
        }
      }
    }
  }
  const FeatureMap grad_conv2 = affine_gelu_backward(grad_act2, cache.conv2, params.norm2_scale,
                                                     params.norm2_shift, grads.norm2_scale, grads.norm2_shift);
  FeatureMap grad_act1(cache.act1.height(), cache.act1.width(), cache.act1.channels());
  strided_conv_backward(cache.act1, params.conv2_w, grad_conv2, grads.conv2_w, grads.conv2_b, &grad_act1);
  const FeatureMap grad_conv1 = affine_gelu_backward(grad_act1, cache.conv1, params.norm1_scale,
                                                     params.norm1_shift, grads.norm1_scale, grads.norm1_shift);
  FeatureMap in(cache.input.height(), cache.input.width(), 1);
  std::copy(cache.input.values().begin(), cache.input.values().end(), in.data().begin());
  FeatureMap grad_in(in.height(), in.width(), 1);
  strided_conv_backward(in, params.conv1_w, grad_conv1, grads.conv1_w, grads.conv1_b, &grad_in);
  return Grid2D(grad_in.height(), grad_in.width(),
                std::vector<double>(grad_in.data().begin(), grad_in.data().end()));
}

void validate_box(const Box& box, int image_height, int image_width) {
  const bool finite = std::isfinite(box.x_min) && std::isfinite(box.y_min) && std::isfinite(box.x_max) &&
                      std::isfinite(box.y_max);
  if (!finite || !(box.x_min < box.x_max) || !(box.y_min < box.y_max)) {
    throw Error(ErrorCode::invalid_box, "box corners must be ordered with positive width and height");
  }
  if (box.x_min < 0 || box.y_min < 0 || box.x_max > image_width || box.y_max > image_height) {
    throw Error(ErrorCode::invalid_box, "box lies outside the image");
  }
}

PromptBundle build_prompt_bundle(const GeometricPrompt& geometry, std::optional<FeatureMap> dense,
                                 std::string text, const BundleGeometry& dims) {
  if (geometry.empty() && !dense) {
    throw Error(ErrorCode::empty_prompt, "no box, point or semantic prompt given");
  }
  PromptBundle bundle;
  bundle.prompt_text = std::move(text);
  if (geometry.box) {
    validate_box(*geometry.box, dims.image_height, dims.image_width);
    SparseToken t;
    t.kind = TokenKind::box;
    t.coords[0] = geometry.box->x_min;
    t.coords[1] = geometry.box->y_min;
    t.coords[2] = geometry.box->x_max;
    t.coords[3] = geometry.box->y_max;
    bundle.sparse_tokens.push_back(t);
  }
  for (const PromptPoint& p : geometry.points) {
    if (!(p.x >= 0 && p.y >= 0 && p.x <= dims.image_width && p.y <= dims.image_height)) {
      throw Error(ErrorCode::invalid_input, "point prompt lies outside the image");
    }
    SparseToken t;
    t.kind = p.foreground ? TokenKind::foreground_point : TokenKind::background_point;
    t.coords[0] = p.x;
    t.coords[1] = p.y;
    bundle.sparse_tokens.push_back(t);
  }
  if (dense) {
    if (dense->height() != dims.embed_height || dense->width() != dims.embed_width ||
        dense->channels() != dims.embed_dim) {
      throw Error(ErrorCode::configuration, "dense embedding shape is not decoder-compatible");
    }
    if (!dense->all_finite()) throw Error(ErrorCode::invalid_input, "dense embedding has non-finite values");
    bundle.dense_embedding = std::move(*dense);
    bundle.has_dense = true;
  } else {
    bundle.dense_embedding = FeatureMap(dims.embed_height, dims.embed_width, dims.embed_dim);
  }
  return bundle;
}

}  // namespace tgseg
