#pragma once

// Multi-scale context aggregation over the class-representation map.
// Parameter-free: adaptive average pooling at a fixed set of grid sizes,
// re-expansion to the input grid, and channel concatenation with the
// identity path.

#include <array>
#include <cstdint>

#include "zsseg/autodiff.hpp"
#include "zsseg/core.hpp"
#include "zsseg/functional.hpp"

namespace zsseg {

inline constexpr std::array<std::int64_t, 4> kPyramidRatios{1, 2, 3, 6};

enum class UpsampleMode { bilinear, nearest };

template <class T>
struct PyramidPooled {
  // One map per entry of kPyramidRatios, shape [C, r, r].
  std::array<Var<T>, kPyramidRatios.size()> maps;
};

// Pools the class map to each pyramid grid. Requires H,W >= max ratio so
// every cell averages at least one source pixel per band.
template <class T>
PyramidPooled<T> pyramid_pool(const Var<T>& i_class) {
  require_ndim(i_class->value, 3, "pyramid_pool input");
  const std::int64_t h = i_class->value.dim(1), w = i_class->value.dim(2);
  const std::int64_t need = kPyramidRatios.back();
  if (h < need || w < need)
    throw shape_error("pyramid_pool: spatial dims " + std::to_string(h) + "x" +
                      std::to_string(w) + " below minimum " +
                      std::to_string(need) + "x" + std::to_string(need));
  PyramidPooled<T> out;
  for (std::size_t i = 0; i < kPyramidRatios.size(); ++i)
    out.maps[i] = adaptive_avg_pool(i_class, kPyramidRatios[i], kPyramidRatios[i]);
  return out;
}

// Re-expands each pooled map back to the class grid and concatenates them
// with the identity path, coarsest-first, identity last. Output has five
// times the input channel count.
template <class T>
Var<T> expand_and_concat(const PyramidPooled<T>& pooled, const Var<T>& i_class,
                         UpsampleMode mode) {
  const std::int64_t h = i_class->value.dim(1), w = i_class->value.dim(2);
  std::vector<Var<T>> parts;
  parts.reserve(kPyramidRatios.size() + 1);
  for (const auto& m : pooled.maps) {
    parts.push_back(mode == UpsampleMode::bilinear ? upsample_bilinear(m, h, w)
                                                   : upsample_nearest(m, h, w));
  }
  parts.push_back(i_class);
  return concat_channels(parts);
}

template <class T>
Var<T> pyramid_context(const Var<T>& i_class, UpsampleMode mode) {
  return expand_and_concat(pyramid_pool(i_class), i_class, mode);
}

}  // namespace zsseg
