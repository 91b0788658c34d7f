#pragma once

// Frozen feature extractor plus the trainable neck that derives the two
// working maps: a 256-channel query representation and the block-4 class
// representation, both on a shared grid.
//
// Two variants:
//   tiny_random        four plain conv stages, seeded random weights,
//                      strides (2,2,2,1); meant for tests and synthetic
//                      experiments on a CPU.
//   pretrained_resnet50  bottleneck trunk with frozen normalization
//                      statistics, dilated in the last two layers so the
//                      mid and deep feature maps share one stride-8 grid;
//                      weights come from a weight bundle on disk.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "zsseg/autodiff.hpp"
#include "zsseg/core.hpp"
#include "zsseg/functional.hpp"
#include "zsseg/params.hpp"
#include "zsseg/serialize.hpp"

namespace zsseg {

enum class BackboneVariant { tiny_random, pretrained_resnet50 };

// How the mid (F2) and deep (F3) maps are brought onto one grid before
// concatenation when their strides differ. `pool` averages the finer map
// down to the coarser grid; `upsample` interpolates the coarser map up.
// Both are no-ops when the grids already match.
enum class AlignMode { pool, upsample };

struct BackboneConfig {
  BackboneVariant variant = BackboneVariant::tiny_random;
  std::string weights_path;            // required for pretrained_resnet50 at runtime
  std::int64_t block4_channels = 64;   // C, the class-map width
  AlignMode align = AlignMode::pool;
};

inline void validate_backbone_config(const BackboneConfig& cfg, bool require_weights) {
  if (cfg.block4_channels <= 0 || cfg.block4_channels % 2 != 0)
    throw config_error("backbone.block4_channels must be positive and even, got " +
                       std::to_string(cfg.block4_channels));
  if (cfg.variant == BackboneVariant::pretrained_resnet50) {
    if (cfg.block4_channels != 2048)
      throw config_error("pretrained_resnet50 produces 2048 block-4 channels; "
                         "backbone.block4_channels is " +
                         std::to_string(cfg.block4_channels));
    if (require_weights && cfg.weights_path.empty())
      throw config_error("pretrained_resnet50 requires backbone.weights");
  }
}

template <class T>
struct FeatureBundle {
  Var<T> f_query;  // [256, h, w]
  Var<T> i_class;  // [C, h, w]
};

template <class T>
class Backbone {
 public:
  Backbone(ParamStore<T>& ps, const BackboneConfig& cfg, Rng& rng) : cfg_(cfg) {
    validate_backbone_config(cfg, /*require_weights=*/false);
    if (cfg.variant == BackboneVariant::tiny_random)
      build_tiny(ps, rng);
    else
      build_resnet50(ps, rng);
    const std::int64_t cw = concat_width();
    w_adapter_ = ps.add_conv_weight("neck.adapter.weight", block4_in_, cw, 1, 1, rng, true);
    b_adapter_ = ps.add_bias("neck.adapter.bias", block4_in_, true);
    w_fquery_ = ps.add_conv_weight("neck.fquery.weight", 256, cw, 3, 3, rng, true);
    b_fquery_ = ps.add_bias("neck.fquery.bias", 256, true);
    if (!cfg.weights_path.empty()) load_backbone_weights(ps, cfg.weights_path);
  }

  const BackboneConfig& config() const { return cfg_; }
  std::int64_t class_channels() const { return cfg_.block4_channels; }

  // Channel width of the concatenated mid+deep map feeding the neck.
  std::int64_t concat_width() const {
    return cfg_.variant == BackboneVariant::tiny_random ? (32 + 64) : (512 + 1024);
  }

  // image: [3, H, W] with values in [0, 1].
  FeatureBundle<T> extract_features(const Tensor<T>& image) const {
    require_ndim(image, 3, "backbone input");
    if (image.dim(0) != 3)
      throw shape_error("backbone input must have 3 channels, got " +
                        std::to_string(image.dim(0)));
    auto x = make_leaf<T>(normalize(image), false, "image");
    Var<T> f2, f3;
    if (cfg_.variant == BackboneVariant::tiny_random) {
      auto s1 = tiny_stage(x, 0);
      f2 = tiny_stage(s1, 1);
      f3 = tiny_stage(f2, 2);
    } else {
      auto stem = maxpool2d(relu(apply_bn(conv2d(x, stem_w_, Var<T>{}, ConvSpec{2, 3, 1}),
                                          stem_bn_)),
                            3, 2, 1);
      auto l1 = run_layer(stem, 0);
      f2 = run_layer(l1, 1);
      f3 = run_layer(f2, 2);
    }
    auto aligned = align(f2, f3);
    auto cat = concat_channels<T>({aligned.first, aligned.second});
    auto f_query = conv2d(cat, w_fquery_, b_fquery_, ConvSpec{1, 1, 1});
    auto adapted = relu(conv2d(cat, w_adapter_, b_adapter_, ConvSpec{}));
    Var<T> i_class = cfg_.variant == BackboneVariant::tiny_random
                         ? tiny_stage(adapted, 3)
                         : run_layer(adapted, 3);
    return FeatureBundle<T>{f_query, i_class};
  }

  // Loads every "backbone."-prefixed parameter from a weight bundle,
  // requiring an exact name and shape match in both directions.
  static void load_backbone_weights(ParamStore<T>& ps, const std::string& path) {
    const auto file = load_tensor_bundle(path);
    std::set<std::string> wanted;
    for (const auto& e : ps.entries())
      if (e.name.rfind("backbone.", 0) == 0) wanted.insert(e.name);
    std::vector<std::string> missing, extra, mismatched;
    for (const auto& e : ps.entries()) {
      if (!wanted.count(e.name)) continue;
      auto it = file.find(e.name);
      if (it == file.end())
        missing.push_back(e.name);
      else if (it->second.shape() != e.var->value.shape())
        mismatched.push_back(e.name + " (expected " + e.var->value.shape_str() +
                             ", file has " + it->second.shape_str() + ")");
    }
    for (const auto& [name, t] : file)
      if (!wanted.count(name)) extra.push_back(name);
    if (!missing.empty() || !extra.empty() || !mismatched.empty()) {
      std::ostringstream msg;
      msg << "weight bundle " << path << " does not match the backbone manifest:";
      for (const auto& n : missing) msg << "\n  missing: " << n;
      for (const auto& n : extra) msg << "\n  unexpected: " << n;
      for (const auto& n : mismatched) msg << "\n  shape mismatch: " << n;
      throw config_error(msg.str());
    }
    for (const auto& e : ps.entries()) {
      if (e.name.rfind("backbone.", 0) != 0) continue;
      e.var->value = file.at(e.name).template cast<T>();
    }
  }

  // Collects the "backbone." parameters into a weight bundle on disk.
  static void save_backbone_weights(const ParamStore<T>& ps, const std::string& path) {
    std::map<std::string, Tensor<double>> m;
    for (const auto& e : ps.entries())
      if (e.name.rfind("backbone.", 0) == 0)
        m.emplace(e.name, e.var->value.template cast<double>());
    save_tensor_bundle(path, m);
  }

 private:
  struct BnVars {
    Var<T> gamma, beta, mean, var;
  };
  struct Bottleneck {
    Var<T> w1, w2, w3;
    BnVars bn1, bn2, bn3;
    Var<T> wd;
    BnVars bnd;
    bool has_down = false;
    int stride = 1, dilation = 1;
  };

  static constexpr std::array<std::int64_t, 3> kTinyWidths{16, 32, 64};
  static constexpr std::array<int, 4> kTinyStrides{2, 2, 2, 1};

  void build_tiny(ParamStore<T>& ps, Rng& rng) {
    block4_in_ = kTinyWidths[2];
    std::int64_t cin = 3;
    for (int s = 0; s < 4; ++s) {
      const std::int64_t width = s < 3 ? kTinyWidths[s] : cfg_.block4_channels;
      const std::int64_t in = s == 3 ? block4_in_ : cin;
      const std::string base = "backbone.stage" + std::to_string(s + 1);
      tiny_w1_[s] = ps.add_conv_weight(base + ".conv1.weight", width, in, 3, 3, rng, false);
      tiny_b1_[s] = ps.add_bias(base + ".conv1.bias", width, false);
      tiny_w2_[s] = ps.add_conv_weight(base + ".conv2.weight", width, width, 3, 3, rng, false);
      tiny_b2_[s] = ps.add_bias(base + ".conv2.bias", width, false);
      cin = width;
    }
  }

  Var<T> tiny_stage(const Var<T>& x, int s) const {
    auto y = relu(conv2d(x, tiny_w1_[s], tiny_b1_[s], ConvSpec{kTinyStrides[s], 1, 1}));
    return relu(conv2d(y, tiny_w2_[s], tiny_b2_[s], ConvSpec{1, 1, 1}));
  }

  BnVars add_bn(ParamStore<T>& ps, const std::string& base, std::int64_t c) {
    BnVars bn;
    bn.gamma = ps.add(base + ".weight", Tensor<T>::full({c}, T(1)), false);
    bn.beta = ps.add(base + ".bias", Tensor<T>::zeros({c}), false);
    bn.mean = ps.add(base + ".running_mean", Tensor<T>::zeros({c}), false);
    bn.var = ps.add(base + ".running_var", Tensor<T>::full({c}, T(1)), false);
    return bn;
  }

  // Frozen normalization: fixed per-channel affine from stored statistics.
  Var<T> apply_bn(const Var<T>& x, const BnVars& bn) const {
    const std::int64_t c = x->value.dim(0);
    Tensor<T> a({c}), b({c});
    for (std::int64_t i = 0; i < c; ++i) {
      const T inv = T(1) / std::sqrt(bn.var->value[i] + T(1e-5));
      a[i] = bn.gamma->value[i] * inv;
      b[i] = bn.beta->value[i] - bn.mean->value[i] * bn.gamma->value[i] * inv;
    }
    return channel_affine(x, make_leaf<T>(std::move(a), false, "bn.scale"),
                          make_leaf<T>(std::move(b), false, "bn.shift"));
  }

  void build_resnet50(ParamStore<T>& ps, Rng& rng) {
    block4_in_ = 1024;
    stem_w_ = ps.add_conv_weight("backbone.conv1.weight", 64, 3, 7, 7, rng, false);
    stem_bn_ = add_bn(ps, "backbone.bn1", 64);
    struct LayerDef {
      std::int64_t mid, out;
      int blocks, stride, dilation;
    };
    const LayerDef defs[4] = {{64, 256, 3, 1, 1},
                              {128, 512, 4, 2, 1},
                              {256, 1024, 6, 1, 2},
                              {512, 2048, 3, 1, 4}};
    std::int64_t cin = 64;
    for (int L = 0; L < 4; ++L) {
      const auto& d = defs[L];
      std::vector<Bottleneck> blocks;
      for (int i = 0; i < d.blocks; ++i) {
        const std::string base =
            "backbone.layer" + std::to_string(L + 1) + "." + std::to_string(i);
        Bottleneck blk;
        blk.stride = i == 0 ? d.stride : 1;
        blk.dilation = d.dilation;
        blk.w1 = ps.add_conv_weight(base + ".conv1.weight", d.mid, cin, 1, 1, rng, false);
        blk.bn1 = add_bn(ps, base + ".bn1", d.mid);
        blk.w2 = ps.add_conv_weight(base + ".conv2.weight", d.mid, d.mid, 3, 3, rng, false);
        blk.bn2 = add_bn(ps, base + ".bn2", d.mid);
        blk.w3 = ps.add_conv_weight(base + ".conv3.weight", d.out, d.mid, 1, 1, rng, false);
        blk.bn3 = add_bn(ps, base + ".bn3", d.out);
        if (blk.stride != 1 || cin != d.out) {
          blk.has_down = true;
          blk.wd = ps.add_conv_weight(base + ".downsample.0.weight", d.out, cin, 1, 1, rng,
                                      false);
          blk.bnd = add_bn(ps, base + ".downsample.1", d.out);
        }
        blocks.push_back(std::move(blk));
        cin = d.out;
      }
      layers_[L] = std::move(blocks);
    }
  }

  Var<T> run_layer(const Var<T>& x, int L) const {
    Var<T> y = x;
    for (const auto& blk : layers_[L]) {
      auto main = relu(apply_bn(conv2d(y, blk.w1, Var<T>{}, ConvSpec{}), blk.bn1));
      main = relu(apply_bn(
          conv2d(main, blk.w2, Var<T>{}, ConvSpec{blk.stride, blk.dilation, blk.dilation}),
          blk.bn2));
      main = apply_bn(conv2d(main, blk.w3, Var<T>{}, ConvSpec{}), blk.bn3);
      Var<T> shortcut = y;
      if (blk.has_down)
        shortcut = apply_bn(conv2d(y, blk.wd, Var<T>{}, ConvSpec{blk.stride, 0, 1}), blk.bnd);
      y = relu(add(main, shortcut));
    }
    return y;
  }

  std::pair<Var<T>, Var<T>> align(const Var<T>& f2, const Var<T>& f3) const {
    const std::int64_t h2 = f2->value.dim(1), w2 = f2->value.dim(2);
    const std::int64_t h3 = f3->value.dim(1), w3 = f3->value.dim(2);
    if (h2 == h3 && w2 == w3) return {f2, f3};
    if (cfg_.align == AlignMode::pool) return {adaptive_avg_pool(f2, h3, w3), f3};
    return {f2, upsample_bilinear(f3, h2, w2)};
  }

  Tensor<T> normalize(const Tensor<T>& image) const {
    if (cfg_.variant == BackboneVariant::tiny_random) return image;
    static constexpr double mean[3] = {0.485, 0.456, 0.406};
    static constexpr double stdev[3] = {0.229, 0.224, 0.225};
    Tensor<T> out = image;
    const std::int64_t hw = image.dim(1) * image.dim(2);
    for (int c = 0; c < 3; ++c) {
      T* p = out.data() + c * hw;
      for (std::int64_t i = 0; i < hw; ++i)
        p[i] = (p[i] - T(mean[c])) / T(stdev[c]);
    }
    return out;
  }

  BackboneConfig cfg_;
  std::int64_t block4_in_ = 0;

  Var<T> tiny_w1_[4], tiny_b1_[4], tiny_w2_[4], tiny_b2_[4];

  Var<T> stem_w_;
  BnVars stem_bn_;
  std::array<std::vector<Bottleneck>, 4> layers_;

  Var<T> w_adapter_, b_adapter_, w_fquery_, b_fquery_;
};

}  // namespace zsseg
