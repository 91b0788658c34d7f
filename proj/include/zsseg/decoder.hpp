#pragma once

// Dense comparison between query features and the class embedding,
// producing per-pixel binary logits. Plain convolutions and ReLU only:
// no normalization layers anywhere in this module.

#include <cstdint>
#include <string>

#include "zsseg/autodiff.hpp"
#include "zsseg/core.hpp"
#include "zsseg/functional.hpp"
#include "zsseg/params.hpp"

namespace zsseg {

inline constexpr std::int64_t kQueryChannels = 256;
inline constexpr std::int64_t kDecoderChannels = 256;

template <class T>
struct PredictionMask {
  Tensor<T> prob;             // [H, W] foreground probability
  Tensor<std::uint8_t> mask;  // [H, W], 1 = foreground
};

template <class T>
class ClassComparison {
 public:
  // embed_channels is the class-embedding width (twice the class-map
  // channel count). Registers all weights under `prefix`.
  ClassComparison(ParamStore<T>& ps, const std::string& prefix,
                  std::int64_t embed_channels, Rng& rng)
      : embed_channels_(embed_channels) {
    if (embed_channels <= 0 || embed_channels % 2 != 0)
      throw config_error("class comparison needs an even embedding width, got " +
                         std::to_string(embed_channels));
    const std::int64_t c = embed_channels / 2;
    const std::int64_t d = kDecoderChannels;
    auto p = [&prefix](const std::string& s) { return prefix + "." + s; };
    w_embed_ = ps.add_conv_weight(p("embed_proj.weight"), c, embed_channels, 1, 1, rng, true);
    b_embed_ = ps.add_bias(p("embed_proj.bias"), c, true);
    w_reduce_ = ps.add_conv_weight(p("reduce.weight"), d, kQueryChannels + c, 1, 1, rng, true);
    b_reduce_ = ps.add_bias(p("reduce.bias"), d, true);
    for (int i = 0; i < 3; ++i) {
      const std::string base = "res" + std::to_string(i + 1);
      res_w1_[i] = ps.add_conv_weight(p(base + ".conv1.weight"), d, d, 3, 3, rng, true);
      res_b1_[i] = ps.add_bias(p(base + ".conv1.bias"), d, true);
      res_w2_[i] = ps.add_conv_weight(p(base + ".conv2.weight"), d, d, 3, 3, rng, true);
      res_b2_[i] = ps.add_bias(p(base + ".conv2.bias"), d, true);
    }
    w_aspp1_ = ps.add_conv_weight(p("aspp.rate1.weight"), d, d, 1, 1, rng, true);
    b_aspp1_ = ps.add_bias(p("aspp.rate1.bias"), d, true);
    w_aspp6_ = ps.add_conv_weight(p("aspp.rate6.weight"), d, d, 3, 3, rng, true);
    b_aspp6_ = ps.add_bias(p("aspp.rate6.bias"), d, true);
    w_aspp12_ = ps.add_conv_weight(p("aspp.rate12.weight"), d, d, 3, 3, rng, true);
    b_aspp12_ = ps.add_bias(p("aspp.rate12.bias"), d, true);
    w_aspp18_ = ps.add_conv_weight(p("aspp.rate18.weight"), d, d, 3, 3, rng, true);
    b_aspp18_ = ps.add_bias(p("aspp.rate18.bias"), d, true);
    w_pool_ = ps.add_conv_weight(p("aspp.image_pool.weight"), d, d, 1, 1, rng, true);
    b_pool_ = ps.add_bias(p("aspp.image_pool.bias"), d, true);
    w_merge_ = ps.add_conv_weight(p("aspp.merge.weight"), d, 5 * d, 1, 1, rng, true);
    b_merge_ = ps.add_bias(p("aspp.merge.bias"), d, true);
    w_head_ = ps.add_conv_weight(p("head.weight"), 2, d, 1, 1, rng, true);
    b_head_ = ps.add_bias(p("head.bias"), 2, true);
  }

  std::int64_t embed_channels() const { return embed_channels_; }

  // f_query: [256, h, w]; embedding: [2C, h, w] on the same grid.
  // Returns binary logits [2, h, w]; channel 1 is foreground.
  Var<T> compare(const Var<T>& f_query, const Var<T>& embedding) const {
    require_ndim(f_query->value, 3, "compare query");
    require_ndim(embedding->value, 3, "compare embedding");
    if (f_query->value.dim(0) != kQueryChannels)
      throw shape_error("compare: query must have " + std::to_string(kQueryChannels) +
                        " channels, got " + std::to_string(f_query->value.dim(0)));
    if (embedding->value.dim(0) != embed_channels_)
      throw shape_error("compare: embedding must have " + std::to_string(embed_channels_) +
                        " channels, got " + std::to_string(embedding->value.dim(0)));
    if (f_query->value.dim(1) != embedding->value.dim(1) ||
        f_query->value.dim(2) != embedding->value.dim(2))
      throw shape_error("compare: grid mismatch, query " + f_query->value.shape_str() +
                        " vs embedding " + embedding->value.shape_str());

    auto e = relu(conv2d(embedding, w_embed_, b_embed_, ConvSpec{}));
    auto x = relu(conv2d(concat_channels<T>({f_query, e}), w_reduce_, b_reduce_, ConvSpec{}));
    for (int i = 0; i < 3; ++i) x = residual(x, i);
    return conv2d(aspp(x), w_head_, b_head_, ConvSpec{});
  }

 private:
  Var<T> residual(const Var<T>& x, int i) const {
    auto y = relu(conv2d(x, res_w1_[i], res_b1_[i], ConvSpec{1, 1, 1}));
    y = conv2d(y, res_w2_[i], res_b2_[i], ConvSpec{1, 1, 1});
    return relu(add(y, x));
  }

  Var<T> aspp(const Var<T>& x) const {
    const std::int64_t h = x->value.dim(1), w = x->value.dim(2);
    auto b0 = relu(conv2d(x, w_aspp1_, b_aspp1_, ConvSpec{}));
    auto b1 = relu(conv2d(x, w_aspp6_, b_aspp6_, ConvSpec{1, 6, 6}));
    auto b2 = relu(conv2d(x, w_aspp12_, b_aspp12_, ConvSpec{1, 12, 12}));
    auto b3 = relu(conv2d(x, w_aspp18_, b_aspp18_, ConvSpec{1, 18, 18}));
    auto pooled = relu(conv2d(adaptive_avg_pool(x, 1, 1), w_pool_, b_pool_, ConvSpec{}));
    auto b4 = broadcast_hw(pooled, h, w);
    auto cat = concat_channels<T>({b0, b1, b2, b3, b4});
    return relu(conv2d(cat, w_merge_, b_merge_, ConvSpec{}));
  }

  std::int64_t embed_channels_;
  Var<T> w_embed_, b_embed_, w_reduce_, b_reduce_;
  Var<T> res_w1_[3], res_b1_[3], res_w2_[3], res_b2_[3];
  Var<T> w_aspp1_, b_aspp1_, w_aspp6_, b_aspp6_, w_aspp12_, b_aspp12_;
  Var<T> w_aspp18_, b_aspp18_, w_pool_, b_pool_, w_merge_, b_merge_;
  Var<T> w_head_, b_head_;
};

// Converts grid logits to a full-resolution foreground decision.
// Softmax over the two channels, bilinear upsampling of the foreground
// probability, threshold at 0.5 with ties counted as foreground.
template <class T>
PredictionMask<T> predict_mask(const Var<T>& logits, std::int64_t out_h, std::int64_t out_w) {
  require_ndim(logits->value, 3, "predict_mask logits");
  if (logits->value.dim(0) != 2)
    throw shape_error("predict_mask: expected 2 logit channels, got " +
                      std::to_string(logits->value.dim(0)));
  auto p = upsample_bilinear(foreground_prob(logits), out_h, out_w);
  PredictionMask<T> out;
  out.prob = Tensor<T>::zeros({out_h, out_w});
  out.mask = Tensor<std::uint8_t>::zeros({out_h, out_w});
  for (std::int64_t i = 0; i < out.prob.numel(); ++i) {
    out.prob[i] = p->value[i];
    out.mask[i] = p->value[i] >= T(0.5) ? 1 : 0;
  }
  return out;
}

}  // namespace zsseg
