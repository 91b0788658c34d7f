#pragma once

// Per-episode segmentation loss. Probabilities are upsampled to the label
// resolution before the cross-entropy, so supervision covers boundary
// placement below the feature-grid cell size.

#include <algorithm>
#include <cstdint>
#include <string>

#include "zsseg/autodiff.hpp"
#include "zsseg/core.hpp"
#include "zsseg/functional.hpp"

namespace zsseg {

enum class LossKind { balanced_bce, bce };

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "balanced_bce") return LossKind::balanced_bce;
  if (s == "bce") return LossKind::bce;
  throw config_error("train.loss must be balanced_bce or bce, got \"" + s + "\"");
}

inline constexpr double kLossWeightClipLo = 0.1;
inline constexpr double kLossWeightClipHi = 10.0;

// Foreground-balancing weights from the foreground fraction rho:
// w_fg = 0.5/rho, w_bg = 0.5/(1-rho), both clipped to [0.1, 10].
template <class T>
std::pair<T, T> balance_weights(double rho) {
  const double w_fg = std::clamp(0.5 / rho, kLossWeightClipLo, kLossWeightClipHi);
  const double w_bg = std::clamp(0.5 / (1.0 - rho), kLossWeightClipLo, kLossWeightClipHi);
  return {static_cast<T>(w_fg), static_cast<T>(w_bg)};
}

// logits: [2, h, w] grid logits; target: [H, W] binary mask at label
// resolution. Returns a scalar loss node.
template <class T>
Var<T> segmentation_loss(const Var<T>& logits, const Tensor<T>& target, LossKind kind) {
  require_ndim(target, 2, "segmentation_loss target");
  auto p = upsample_bilinear(foreground_prob(logits), target.dim(0), target.dim(1));
  T w_fg = T(1), w_bg = T(1);
  if (kind == LossKind::balanced_bce) {
    double fg = 0;
    for (std::int64_t i = 0; i < target.numel(); ++i) fg += double(target[i]);
    const double rho = fg / double(target.numel());
    std::tie(w_fg, w_bg) = balance_weights<T>(rho);
  }
  return weighted_bce(p, target, w_fg, w_bg);
}

}  // namespace zsseg
