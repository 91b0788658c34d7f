#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "zsseg/autodiff.hpp"

namespace zsseg {

struct ConvSpec {
  int stride = 1;
  int pad = 0;
  int dilation = 1;
};

namespace detail {

template <class T>
void im2col(const Tensor<T>& x, int kh, int kw, const ConvSpec& s, std::int64_t oh, std::int64_t ow,
            T* cols) {
  const std::int64_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::int64_t m = oh * ow;
  for (std::int64_t c = 0; c < cin; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        T* row = cols + ((c * kh + ky) * kw + kx) * m;
        for (std::int64_t oy = 0; oy < oh; ++oy) {
          const std::int64_t iy = oy * s.stride - s.pad + std::int64_t(ky) * s.dilation;
          if (iy < 0 || iy >= h) {
            std::fill(row + oy * ow, row + (oy + 1) * ow, T(0));
            continue;
          }
          const T* src = x.data() + (c * h + iy) * w;
          for (std::int64_t ox = 0; ox < ow; ++ox) {
            const std::int64_t ix = ox * s.stride - s.pad + std::int64_t(kx) * s.dilation;
            row[oy * ow + ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im_accumulate(const T* cols, int kh, int kw, const ConvSpec& s, std::int64_t oh,
                       std::int64_t ow, Tensor<T>& dx) {
  const std::int64_t cin = dx.dim(0), h = dx.dim(1), w = dx.dim(2);
  const std::int64_t m = oh * ow;
  for (std::int64_t c = 0; c < cin; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const T* row = cols + ((c * kh + ky) * kw + kx) * m;
        for (std::int64_t oy = 0; oy < oh; ++oy) {
          const std::int64_t iy = oy * s.stride - s.pad + std::int64_t(ky) * s.dilation;
          if (iy < 0 || iy >= h) continue;
          T* dst = dx.data() + (c * h + iy) * w;
          for (std::int64_t ox = 0; ox < ow; ++ox) {
            const std::int64_t ix = ox * s.stride - s.pad + std::int64_t(kx) * s.dilation;
            if (ix >= 0 && ix < w) dst[ix] += row[oy * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// x: [Cin,H,W], w: [Cout,Cin,kh,kw], b: [Cout] (pass nullptr Var for no bias).
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, ConvSpec spec = {}) {
  require_ndim(x->value, 3, "conv2d input");
  require_ndim(w->value, 4, "conv2d weight");
  const std::int64_t cin = x->value.dim(0), h = x->value.dim(1), wid = x->value.dim(2);
  const std::int64_t cout = w->value.dim(0);
  const int kh = static_cast<int>(w->value.dim(2)), kw = static_cast<int>(w->value.dim(3));
  if (w->value.dim(1) != cin)
    throw shape_error("conv2d: weight expects " + std::to_string(w->value.dim(1)) +
                      " input channels, got " + std::to_string(cin));
  const std::int64_t oh = (h + 2 * spec.pad - std::int64_t(spec.dilation) * (kh - 1) - 1) / spec.stride + 1;
  const std::int64_t ow = (wid + 2 * spec.pad - std::int64_t(spec.dilation) * (kw - 1) - 1) / spec.stride + 1;
  if (oh <= 0 || ow <= 0)
    throw shape_error("conv2d: input " + x->value.shape_str() + " too small for kernel");

  const std::int64_t k = cin * kh * kw, m = oh * ow;
  auto cols = std::make_shared<std::vector<T>>(static_cast<std::size_t>(k * m));
  detail::im2col(x->value, kh, kw, spec, oh, ow, cols->data());

  Tensor<T> out({cout, oh, ow});
  detail::gemm(w->value.data(), cols->data(), out.data(), cout, k, m);
  if (b) {
    require_shape(b->value, {cout}, "conv2d bias");
    for (std::int64_t c = 0; c < cout; ++c) {
      T bv = b->value[c];
      T* o = out.data() + c * m;
      for (std::int64_t i = 0; i < m; ++i) o[i] += bv;
    }
  }

  std::vector<Var<T>> parents = b ? std::vector<Var<T>>{x, w, b} : std::vector<Var<T>>{x, w};
  // Keep the im2col buffer only if the weight needs a gradient.
  if (!w->requires_grad) cols.reset();
  return make_op<T>(
      std::move(out), std::move(parents),
      [cols, spec, kh, kw, oh, ow, k, m, cout](Node<T>& self) {
        auto& x_ = self.parents[0];
        auto& w_ = self.parents[1];
        const T* g = self.grad.data();
        if (w_->requires_grad) {
          w_->ensure_grad();
          detail::gemm(g, cols->data(), w_->grad.data(), cout, m, k, false, true, true);
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
          auto& b_ = self.parents[2];
          b_->ensure_grad();
          for (std::int64_t c = 0; c < cout; ++c) {
            T s = T(0);
            const T* gc = g + c * m;
            for (std::int64_t i = 0; i < m; ++i) s += gc[i];
            b_->grad[c] += s;
          }
        }
        if (x_->requires_grad) {
          x_->ensure_grad();
          std::vector<T> dcols(static_cast<std::size_t>(k * m));
          detail::gemm(w_->value.data(), g, dcols.data(), k, cout, m, true, false, false);
          detail::col2im_accumulate(dcols.data(), kh, kw, spec, oh, ow, x_->grad);
        }
      },
      "conv2d");
}

template <class T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = x->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::max(out[i], T(0));
  return make_op<T>(
      std::move(out), {x},
      [](Node<T>& self) {
        auto& x_ = self.parents[0];
        if (!x_->requires_grad) return;
        x_->ensure_grad();
        for (std::int64_t i = 0; i < self.grad.numel(); ++i)
          if (x_->value[i] > T(0)) x_->grad[i] += self.grad[i];
      },
      "relu");
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (!a->value.same_shape(b->value))
    throw shape_error("add: shape mismatch " + a->value.shape_str() + " vs " + b->value.shape_str());
  Tensor<T> out = a->value;
  out.add_(b->value);
  return make_op<T>(
      std::move(out), {a, b},
      [](Node<T>& self) {
        for (auto& p : self.parents) {
          if (!p->requires_grad) continue;
          p->ensure_grad();
          p->grad.add_(self.grad);
        }
      },
      "add");
}

template <class T>
Var<T> scale(const Var<T>& x, T s) {
  Tensor<T> out = x->value;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
  return make_op<T>(
      std::move(out), {x},
      [s](Node<T>& self) {
        auto& x_ = self.parents[0];
        if (!x_->requires_grad) return;
        x_->ensure_grad();
        for (std::int64_t i = 0; i < self.grad.numel(); ++i) x_->grad[i] += s * self.grad[i];
      },
      "scale");
}

template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw contract_error("concat_channels: empty input list");
  const std::int64_t h = xs[0]->value.dim(1), w = xs[0]->value.dim(2);
  std::int64_t ctotal = 0;
  for (const auto& x : xs) {
    require_ndim(x->value, 3, "concat_channels input");
    if (x->value.dim(1) != h || x->value.dim(2) != w)
      throw shape_error("concat_channels: spatial mismatch " + x->value.shape_str());
    ctotal += x->value.dim(0);
  }
  Tensor<T> out({ctotal, h, w});
  std::int64_t off = 0;
  for (const auto& x : xs) {
    std::copy(x->value.data(), x->value.data() + x->value.numel(), out.data() + off);
    off += x->value.numel();
  }
  return make_op<T>(
      std::move(out), xs,
      [](Node<T>& self) {
        std::int64_t off = 0;
        for (auto& p : self.parents) {
          const std::int64_t n = p->value.numel();
          if (p->requires_grad) {
            p->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i) p->grad[i] += self.grad[off + i];
          }
          off += n;
        }
      },
      "concat");
}

// Partition-style adaptive average pooling: band i covers rows
// [floor(i*H/oh), floor((i+1)*H/oh)), so every pixel lands in exactly one
// region and band sizes differ by at most one.
template <class T>
Var<T> adaptive_avg_pool(const Var<T>& x, std::int64_t oh, std::int64_t ow) {
  require_ndim(x->value, 3, "adaptive_avg_pool input");
  const std::int64_t c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  if (oh > h || ow > w || oh < 1 || ow < 1)
    throw shape_error("adaptive_avg_pool: target " + std::to_string(oh) + "x" + std::to_string(ow) +
                      " invalid for input " + x->value.shape_str());
  Tensor<T> out({c, oh, ow});
  for (std::int64_t ci = 0; ci < c; ++ci) {
    for (std::int64_t i = 0; i < oh; ++i) {
      const std::int64_t y0 = i * h / oh, y1 = (i + 1) * h / oh;
      for (std::int64_t j = 0; j < ow; ++j) {
        const std::int64_t x0 = j * w / ow, x1 = (j + 1) * w / ow;
        T s = T(0);
        for (std::int64_t y = y0; y < y1; ++y)
          for (std::int64_t xx = x0; xx < x1; ++xx) s += x->value.at(ci, y, xx);
        out.at(ci, i, j) = s / static_cast<T>((y1 - y0) * (x1 - x0));
      }
    }
  }
  return make_op<T>(
      std::move(out), {x},
      [oh, ow](Node<T>& self) {
        auto& x_ = self.parents[0];
        if (!x_->requires_grad) return;
        x_->ensure_grad();
        const std::int64_t c = x_->value.dim(0), h = x_->value.dim(1), w = x_->value.dim(2);
        for (std::int64_t ci = 0; ci < c; ++ci) {
          for (std::int64_t i = 0; i < oh; ++i) {
            const std::int64_t y0 = i * h / oh, y1 = (i + 1) * h / oh;
            for (std::int64_t j = 0; j < ow; ++j) {
              const std::int64_t x0 = j * w / ow, x1 = (j + 1) * w / ow;
              const T g = self.grad.at(ci, i, j) / static_cast<T>((y1 - y0) * (x1 - x0));
              for (std::int64_t y = y0; y < y1; ++y)
                for (std::int64_t xx = x0; xx < x1; ++xx) x_->grad.at(ci, y, xx) += g;
            }
          }
        }
      },
      "adaptive_avg_pool");
}

namespace detail {

// align_corners=false source coordinate, clamped into the grid.
inline void bilinear_coeff(std::int64_t o, std::int64_t in, std::int64_t out, std::int64_t& i0,
                           std::int64_t& i1, double& w1) {
  double src = (double(o) + 0.5) * double(in) / double(out) - 0.5;
  src = std::max(0.0, std::min(src, double(in - 1)));
  i0 = static_cast<std::int64_t>(std::floor(src));
  i1 = std::min(i0 + 1, in - 1);
  w1 = src - double(i0);
}

}  // namespace detail

template <class T>
Var<T> upsample_bilinear(const Var<T>& x, std::int64_t oh, std::int64_t ow) {
  require_ndim(x->value, 3, "upsample_bilinear input");
  const std::int64_t c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  Tensor<T> out({c, oh, ow});
  for (std::int64_t oy = 0; oy < oh; ++oy) {
    std::int64_t y0, y1;
    double wy;
    detail::bilinear_coeff(oy, h, oh, y0, y1, wy);
    for (std::int64_t ox = 0; ox < ow; ++ox) {
      std::int64_t x0, x1;
      double wx;
      detail::bilinear_coeff(ox, w, ow, x0, x1, wx);
      for (std::int64_t ci = 0; ci < c; ++ci) {
        const double v = (1 - wy) * ((1 - wx) * double(x->value.at(ci, y0, x0)) +
                                     wx * double(x->value.at(ci, y0, x1))) +
                         wy * ((1 - wx) * double(x->value.at(ci, y1, x0)) +
                               wx * double(x->value.at(ci, y1, x1)));
        out.at(ci, oy, ox) = static_cast<T>(v);
      }
    }
  }
  return make_op<T>(
      std::move(out), {x},
      [oh, ow](Node<T>& self) {
        auto& x_ = self.parents[0];
        if (!x_->requires_grad) return;
        x_->ensure_grad();
        const std::int64_t c = x_->value.dim(0), h = x_->value.dim(1), w = x_->value.dim(2);
        for (std::int64_t oy = 0; oy < oh; ++oy) {
          std::int64_t y0, y1;
          double wy;
          detail::bilinear_coeff(oy, h, oh, y0, y1, wy);
          for (std::int64_t ox = 0; ox < ow; ++ox) {
            std::int64_t x0, x1;
            double wx;
            detail::bilinear_coeff(ox, w, ow, x0, x1, wx);
            for (std::int64_t ci = 0; ci < c; ++ci) {
              const T g = self.grad.at(ci, oy, ox);
              x_->grad.at(ci, y0, x0) += static_cast<T>((1 - wy) * (1 - wx)) * g;
              x_->grad.at(ci, y0, x1) += static_cast<T>((1 - wy) * wx) * g;
              x_->grad.at(ci, y1, x0) += static_cast<T>(wy * (1 - wx)) * g;
              x_->grad.at(ci, y1, x1) += static_cast<T>(wy * wx) * g;
            }
          }
        }
      },
      "upsample_bilinear");
}

template <class T>
Var<T> upsample_nearest(const Var<T>& x, std::int64_t oh, std::int64_t ow) {
  require_ndim(x->value, 3, "upsample_nearest input");
  const std::int64_t c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  Tensor<T> out({c, oh, ow});
  for (std::int64_t oy = 0; oy < oh; ++oy) {
    const std::int64_t iy = std::min(oy * h / oh, h - 1);
    for (std::int64_t ox = 0; ox < ow; ++ox) {
      const std::int64_t ix = std::min(ox * w / ow, w - 1);
      for (std::int64_t ci = 0; ci < c; ++ci) out.at(ci, oy, ox) = x->value.at(ci, iy, ix);
    }
  }
  return make_op<T>(
      std::move(out), {x},
      [oh, ow](Node<T>& self) {
        auto& x_ = self.parents[0];
        if (!x_->requires_grad) return;
        x_->ensure_grad();
        const std::int64_t c = x_->value.dim(0), h = x_->value.dim(1), w = x_->value.dim(2);
        for (std::int64_t oy = 0; oy < oh; ++oy) {
          const std::int64_t iy = std::min(oy * h / oh, h - 1);
          for (std::int64_t ox = 0; ox < ow; ++ox) {
            const std::int64_t ix = std::min(ox * w / ow, w - 1);
            for (std::int64_t ci = 0; ci < c; ++ci)
              x_->grad.at(ci, iy, ix) += self.grad.at(ci, oy, ox);
          }
        }
      },
      "upsample_nearest");
}

// [C,1,1] -> [C,H,W]
template <class T>
Var<T> broadcast_hw(const Var<T>& x, std::int64_t oh, std::int64_t ow) {
  require_ndim(x->value, 3, "broadcast_hw input");
  if (x->value.dim(1) != 1 || x->value.dim(2) != 1)
    throw shape_error("broadcast_hw: expected [C,1,1], got " + x->value.shape_str());
  const std::int64_t c = x->value.dim(0);
  Tensor<T> out({c, oh, ow});
  for (std::int64_t ci = 0; ci < c; ++ci)
    std::fill(out.data() + ci * oh * ow, out.data() + (ci + 1) * oh * ow, x->value[ci]);
  return make_op<T>(
      std::move(out), {x},
      [oh, ow, c](Node<T>& self) {
        auto& x_ = self.parents[0];
        if (!x_->requires_grad) return;
        x_->ensure_grad();
        for (std::int64_t ci = 0; ci < c; ++ci) {
          T s = T(0);
          const T* g = self.grad.data() + ci * oh * ow;
          for (std::int64_t i = 0; i < oh * ow; ++i) s += g[i];
          x_->grad[ci] += s;
        }
      },
      "broadcast_hw");
}

template <class T>
Var<T> maxpool2d(const Var<T>& x, int k, int stride, int pad) {
  require_ndim(x->value, 3, "maxpool2d input");
  const std::int64_t c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  const std::int64_t oh = (h + 2 * pad - k) / stride + 1;
  const std::int64_t ow = (w + 2 * pad - k) / stride + 1;
  if (oh <= 0 || ow <= 0) throw shape_error("maxpool2d: input too small");
  Tensor<T> out({c, oh, ow});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(c * oh * ow));
  for (std::int64_t ci = 0; ci < c; ++ci) {
    for (std::int64_t oy = 0; oy < oh; ++oy) {
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::int64_t best_idx = -1;
        for (int ky = 0; ky < k; ++ky) {
          const std::int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const std::int64_t ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            const T v = x->value.at(ci, iy, ix);
            if (v > best) {
              best = v;
              best_idx = (ci * h + iy) * w + ix;
            }
          }
        }
        out.at(ci, oy, ox) = best;
        (*argmax)[static_cast<std::size_t>((ci * oh + oy) * ow + ox)] = best_idx;
      }
    }
  }
  return make_op<T>(
      std::move(out), {x},
      [argmax](Node<T>& self) {
        auto& x_ = self.parents[0];
        if (!x_->requires_grad) return;
        x_->ensure_grad();
        for (std::int64_t i = 0; i < self.grad.numel(); ++i) {
          const std::int64_t idx = (*argmax)[static_cast<std::size_t>(i)];
          if (idx >= 0) x_->grad[idx] += self.grad[i];
        }
      },
      "maxpool2d");
}

template <class T>
Var<T> reshape(const Var<T>& x, std::vector<std::int64_t> shape) {
  Tensor<T> out(shape, x->value.vec());
  return make_op<T>(
      std::move(out), {x},
      [](Node<T>& self) {
        auto& x_ = self.parents[0];
        if (!x_->requires_grad) return;
        x_->ensure_grad();
        for (std::int64_t i = 0; i < self.grad.numel(); ++i) x_->grad[i] += self.grad[i];
      },
      "reshape");
}

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require_ndim(a->value, 2, "matmul lhs");
  require_ndim(b->value, 2, "matmul rhs");
  const std::int64_t m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
  if (b->value.dim(0) != k)
    throw shape_error("matmul: inner dims " + a->value.shape_str() + " x " + b->value.shape_str());
  Tensor<T> out({m, n});
  detail::gemm(a->value.data(), b->value.data(), out.data(), m, k, n);
  return make_op<T>(
      std::move(out), {a, b},
      [m, k, n](Node<T>& self) {
        auto& a_ = self.parents[0];
        auto& b_ = self.parents[1];
        if (a_->requires_grad) {
          a_->ensure_grad();
          detail::gemm(self.grad.data(), b_->value.data(), a_->grad.data(), m, n, k, false, true, true);
        }
        if (b_->requires_grad) {
          b_->ensure_grad();
          detail::gemm(a_->value.data(), self.grad.data(), b_->grad.data(), k, m, n, true, false, true);
        }
      },
      "matmul");
}

template <class T>
Var<T> transpose2d(const Var<T>& x) {
  require_ndim(x->value, 2, "transpose input");
  const std::int64_t m = x->value.dim(0), n = x->value.dim(1);
  Tensor<T> out({n, m});
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) out.at(j, i) = x->value.at(i, j);
  return make_op<T>(
      std::move(out), {x},
      [m, n](Node<T>& self) {
        auto& x_ = self.parents[0];
        if (!x_->requires_grad) return;
        x_->ensure_grad();
        for (std::int64_t i = 0; i < m; ++i)
          for (std::int64_t j = 0; j < n; ++j) x_->grad.at(i, j) += self.grad.at(j, i);
      },
      "transpose");
}

// Row-wise softmax with max subtraction.
template <class T>
Var<T> softmax_rows(const Var<T>& x) {
  require_ndim(x->value, 2, "softmax_rows input");
  const std::int64_t m = x->value.dim(0), n = x->value.dim(1);
  Tensor<T> out({m, n});
  for (std::int64_t i = 0; i < m; ++i) {
    T mx = x->value.at(i, 0);
    for (std::int64_t j = 1; j < n; ++j) mx = std::max(mx, x->value.at(i, j));
    T sum = T(0);
    for (std::int64_t j = 0; j < n; ++j) {
      const T e = std::exp(x->value.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (std::int64_t j = 0; j < n; ++j) out.at(i, j) /= sum;
  }
  return make_op<T>(
      std::move(out), {x},
      [m, n](Node<T>& self) {
        auto& x_ = self.parents[0];
        if (!x_->requires_grad) return;
        x_->ensure_grad();
        for (std::int64_t i = 0; i < m; ++i) {
          T dot = T(0);
          for (std::int64_t j = 0; j < n; ++j) dot += self.grad.at(i, j) * self.value.at(i, j);
          for (std::int64_t j = 0; j < n; ++j)
            x_->grad.at(i, j) += self.value.at(i, j) * (self.grad.at(i, j) - dot);
        }
      },
      "softmax_rows");
}

// Two-channel softmax reduced to the foreground probability:
// logits [2,H,W] -> p_fg [1,H,W].
template <class T>
Var<T> foreground_prob(const Var<T>& logits) {
  require_ndim(logits->value, 3, "foreground_prob input");
  if (logits->value.dim(0) != 2)
    throw shape_error("foreground_prob: expected 2 channels, got " + logits->value.shape_str());
  const std::int64_t h = logits->value.dim(1), w = logits->value.dim(2), n = h * w;
  Tensor<T> out({1, h, w});
  for (std::int64_t i = 0; i < n; ++i) {
    const T z0 = logits->value[i], z1 = logits->value[n + i];
    const T m = std::max(z0, z1);
    const T e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
    out[i] = e1 / (e0 + e1);
  }
  return make_op<T>(
      std::move(out), {logits},
      [n](Node<T>& self) {
        auto& l = self.parents[0];
        if (!l->requires_grad) return;
        l->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) {
          const T p = self.value[i];
          const T d = self.grad[i] * p * (T(1) - p);
          l->grad[n + i] += d;
          l->grad[i] -= d;
        }
      },
      "foreground_prob");
}

// Weighted binary cross entropy, mean over pixels. target is a constant
// {0,1} map matching p's spatial extent; probabilities are clamped to
// [eps, 1-eps] before the logs.
template <class T>
Var<T> weighted_bce(const Var<T>& p, const Tensor<T>& target, T w_fg, T w_bg, T eps = T(1e-7)) {
  const std::int64_t n = p->value.numel();
  if (n != target.numel())
    throw shape_error("weighted_bce: prob/target size mismatch " + p->value.shape_str() + " vs " +
                      target.shape_str());
  T loss = T(0);
  for (std::int64_t i = 0; i < n; ++i) {
    const T pc = std::clamp(p->value[i], eps, T(1) - eps);
    const T y = target[i];
    loss += -(w_fg * y * std::log(pc) + w_bg * (T(1) - y) * std::log(T(1) - pc));
  }
  Tensor<T> out({1});
  out[0] = loss / static_cast<T>(n);
  auto tgt = std::make_shared<Tensor<T>>(target);
  return make_op<T>(
      std::move(out), {p},
      [tgt, w_fg, w_bg, eps, n](Node<T>& self) {
        auto& p_ = self.parents[0];
        if (!p_->requires_grad) return;
        p_->ensure_grad();
        const T g = self.grad[0] / static_cast<T>(n);
        for (std::int64_t i = 0; i < n; ++i) {
          const T pv = p_->value[i];
          if (pv <= eps || pv >= T(1) - eps) continue;  // clamped region, zero slope
          const T y = (*tgt)[i];
          p_->grad[i] += g * (-w_fg * y / pv + w_bg * (T(1) - y) / (T(1) - pv));
        }
      },
      "weighted_bce");
}

// Per-channel affine y[c,:,:] = a[c] * x[c,:,:] + b[c]. Used to apply
// frozen normalization statistics as a fixed transform.
template <class T>
Var<T> channel_affine(const Var<T>& x, const Var<T>& a, const Var<T>& b) {
  require_ndim(x->value, 3, "channel_affine input");
  const std::int64_t c = x->value.dim(0), hw = x->value.dim(1) * x->value.dim(2);
  require_shape(a->value, {c}, "channel_affine scale");
  require_shape(b->value, {c}, "channel_affine shift");
  Tensor<T> out = x->value;
  for (std::int64_t ci = 0; ci < c; ++ci) {
    T* o = out.data() + ci * hw;
    const T av = a->value[ci], bv = b->value[ci];
    for (std::int64_t i = 0; i < hw; ++i) o[i] = av * o[i] + bv;
  }
  return make_op<T>(
      std::move(out), {x, a, b},
      [c, hw](Node<T>& self) {
        auto& x_ = self.parents[0];
        auto& a_ = self.parents[1];
        auto& b_ = self.parents[2];
        if (x_->requires_grad) {
          x_->ensure_grad();
          for (std::int64_t ci = 0; ci < c; ++ci) {
            const T av = a_->value[ci];
            for (std::int64_t i = 0; i < hw; ++i)
              x_->grad[ci * hw + i] += av * self.grad[ci * hw + i];
          }
        }
        if (a_->requires_grad) {
          a_->ensure_grad();
          for (std::int64_t ci = 0; ci < c; ++ci) {
            T s = T(0);
            for (std::int64_t i = 0; i < hw; ++i)
              s += self.grad[ci * hw + i] * x_->value[ci * hw + i];
            a_->grad[ci] += s;
          }
        }
        if (b_->requires_grad) {
          b_->ensure_grad();
          for (std::int64_t ci = 0; ci < c; ++ci) {
            T s = T(0);
            for (std::int64_t i = 0; i < hw; ++i) s += self.grad[ci * hw + i];
            b_->grad[ci] += s;
          }
        }
      },
      "channel_affine");
}

template <class T>
Var<T> sum_all(const Var<T>& x) {
  T s = T(0);
  for (std::int64_t i = 0; i < x->value.numel(); ++i) s += x->value[i];
  Tensor<T> out({1});
  out[0] = s;
  return make_op<T>(
      std::move(out), {x},
      [](Node<T>& self) {
        auto& x_ = self.parents[0];
        if (!x_->requires_grad) return;
        x_->ensure_grad();
        const T g = self.grad[0];
        for (std::int64_t i = 0; i < x_->grad.numel(); ++i) x_->grad[i] += g;
      },
      "sum_all");
}

template <class T>
Var<T> mean_scalars(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw contract_error("mean_scalars: empty list");
  Tensor<T> out({1});
  for (const auto& x : xs) {
    if (x->value.numel() != 1) throw shape_error("mean_scalars: non-scalar input");
    out[0] += x->value[0];
  }
  out[0] /= static_cast<T>(xs.size());
  return make_op<T>(
      std::move(out), xs,
      [](Node<T>& self) {
        const T g = self.grad[0] / static_cast<T>(self.parents.size());
        for (auto& p : self.parents) {
          if (!p->requires_grad) continue;
          p->ensure_grad();
          p->grad[0] += g;
        }
      },
      "mean_scalars");
}

}  // namespace zsseg
