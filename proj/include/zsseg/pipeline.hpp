#pragma once

// End-to-end assembly: backbone/neck -> pyramid context -> spatial
// attention -> class comparison. Construction order fixes parameter
// registration order, so seeded initialization is reproducible.

#include <cstdint>

#include "zsseg/attention.hpp"
#include "zsseg/backbone.hpp"
#include "zsseg/decoder.hpp"
#include "zsseg/params.hpp"
#include "zsseg/pyramid.hpp"

namespace zsseg {

struct ModelConfig {
  BackboneConfig backbone;
  UpsampleMode mam_upsample = UpsampleMode::bilinear;
  std::uint64_t init_seed = 0;
};

template <class T>
class Pipeline {
 public:
  explicit Pipeline(const ModelConfig& cfg)
      : cfg_(cfg),
        rng_(cfg.init_seed),
        backbone_(params_, cfg.backbone, rng_),
        attention_(params_, "sam", cfg.backbone.block4_channels, rng_),
        decoder_(params_, "decoder", 2 * cfg.backbone.block4_channels, rng_) {}

  // Full forward pass to grid logits [2, h, w].
  Var<T> forward_logits(const Tensor<T>& image) const {
    auto fb = backbone_.extract_features(image);
    auto ctx = pyramid_context(fb.i_class, cfg_.mam_upsample);
    auto emb = attention_.build_class_embedding(ctx);
    return decoder_.compare(fb.f_query, emb);
  }

  // Forward plus upsampling and thresholding to the input resolution.
  PredictionMask<T> predict(const Tensor<T>& image) const {
    auto logits = forward_logits(image);
    return predict_mask(logits, image.dim(1), image.dim(2));
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  const Backbone<T>& backbone() const { return backbone_; }
  const SpatialAttention<T>& attention() const { return attention_; }
  const ClassComparison<T>& decoder() const { return decoder_; }

 private:
  ModelConfig cfg_;
  Rng rng_;
  ParamStore<T> params_;
  Backbone<T> backbone_;
  SpatialAttention<T> attention_;
  ClassComparison<T> decoder_;
};

}  // namespace zsseg
