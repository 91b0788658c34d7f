#pragma once

// Spatial attention over the aggregated class context. Compresses the
// pyramid output, runs position-to-position non-local attention, then
// concatenates the recovered attention features with a separately
// convolved view of the pyramid output.

#include <cstdint>
#include <string>

#include "zsseg/autodiff.hpp"
#include "zsseg/core.hpp"
#include "zsseg/functional.hpp"
#include "zsseg/params.hpp"

namespace zsseg {

template <class T>
class SpatialAttention {
 public:
  // c is the class-map channel count; the module sees 5c channels in and
  // produces 2c channels out. Registers all weights under `prefix`.
  SpatialAttention(ParamStore<T>& ps, const std::string& prefix, std::int64_t c, Rng& rng)
      : c_(c) {
    if (c <= 0 || c % 2 != 0)
      throw config_error("spatial attention needs a positive even channel count, got " +
                         std::to_string(c));
    const std::int64_t c2 = c / 2;
    auto p = [&prefix](const char* s) { return prefix + "." + s; };
    w_compress1_ = ps.add_conv_weight(p("compress1.weight"), c, 5 * c, 1, 1, rng, true);
    b_compress1_ = ps.add_bias(p("compress1.bias"), c, true);
    w_compress2_ = ps.add_conv_weight(p("compress2.weight"), c2, c, 1, 1, rng, true);
    b_compress2_ = ps.add_bias(p("compress2.bias"), c2, true);
    w_a_ = ps.add_conv_weight(p("branch_a.weight"), c2, c2, 1, 1, rng, true);
    b_a_ = ps.add_bias(p("branch_a.bias"), c2, true);
    w_b_ = ps.add_conv_weight(p("branch_b.weight"), c2, c2, 1, 1, rng, true);
    b_b_ = ps.add_bias(p("branch_b.bias"), c2, true);
    w_c_ = ps.add_conv_weight(p("branch_c.weight"), c2, c2, 1, 1, rng, true);
    b_c_ = ps.add_bias(p("branch_c.bias"), c2, true);
    // Small initial gain keeps the recovered attention signal from
    // drowning the direct path early in training.
    w_recover_ = ps.add_conv_weight(p("recover.weight"), c, c2, 1, 1, rng, true, T(0.01));
    b_recover_ = ps.add_bias(p("recover.bias"), c, true);
    w_direct_ = ps.add_conv_weight(p("direct.weight"), c, 5 * c, 3, 3, rng, true);
    b_direct_ = ps.add_bias(p("direct.bias"), c, true);
  }

  std::int64_t channels() const { return c_; }

  // Two linear 1x1 convolutions: 5c -> c -> c/2.
  Var<T> compress(const Var<T>& context) const {
    require_ndim(context->value, 3, "compress input");
    if (context->value.dim(0) != 5 * c_)
      throw shape_error("compress: expected " + std::to_string(5 * c_) +
                        " channels, got " + std::to_string(context->value.dim(0)));
    auto mid = conv2d(context, w_compress1_, b_compress1_, ConvSpec{});
    return conv2d(mid, w_compress2_, b_compress2_, ConvSpec{});
  }

  // Row-stochastic position affinity: softmax over transform(x)^T * transform(x)
  // with independent 1x1 transforms on each side. Shape [N, N], N = H*W.
  Var<T> affinity(const Var<T>& x) const {
    const std::int64_t n = x->value.dim(1) * x->value.dim(2);
    auto fa = flatten_positions(conv2d(x, w_a_, b_a_, ConvSpec{}));
    auto fb = flatten_positions(conv2d(x, w_b_, b_b_, ConvSpec{}));
    auto fd = matmul(transpose2d(fa), fb);
    auto a = softmax_rows(fd);
    require_shape(a->value, {n, n}, "affinity");
    return a;
  }

  // Non-local block at c/2 channels: value branch weighted by the affinity
  // rows, reassembled to [c/2, H, W].
  Var<T> non_local(const Var<T>& x) const {
    require_ndim(x->value, 3, "non_local input");
    if (x->value.dim(0) != c_ / 2)
      throw shape_error("non_local: expected " + std::to_string(c_ / 2) +
                        " channels, got " + std::to_string(x->value.dim(0)));
    const std::int64_t h = x->value.dim(1), w = x->value.dim(2);
    auto a = affinity(x);
    auto fc = flatten_positions(conv2d(x, w_c_, b_c_, ConvSpec{}));
    auto out = matmul(fc, transpose2d(a));
    return reshape(out, {c_ / 2, h, w});
  }

  // Full module: concat(recover(non_local(compress(context))), direct(context)).
  // Output [2c, H, W] on the context grid.
  Var<T> build_class_embedding(const Var<T>& context) const {
    auto attended = non_local(compress(context));
    auto recovered = conv2d(attended, w_recover_, b_recover_, ConvSpec{});
    auto direct = conv2d(context, w_direct_, b_direct_, ConvSpec{1, 1, 1});
    return concat_channels<T>({recovered, direct});
  }

 private:
  static Var<T> flatten_positions(const Var<T>& x) {
    return reshape(x, {x->value.dim(0), x->value.dim(1) * x->value.dim(2)});
  }

  std::int64_t c_;
  Var<T> w_compress1_, b_compress1_, w_compress2_, b_compress2_;
  Var<T> w_a_, b_a_, w_b_, b_b_, w_c_, b_c_;
  Var<T> w_recover_, b_recover_;
  Var<T> w_direct_, b_direct_;
};

}  // namespace zsseg
