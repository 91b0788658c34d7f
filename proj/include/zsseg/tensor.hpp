#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

#include "zsseg/core.hpp"

namespace zsseg {

// Dense row-major tensor. Rank is dynamic; the pipeline uses [C,H,W] for
// feature maps, [M,N] for attention matrices and [1] for scalar losses.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<std::size_t>(compute_numel(shape_)), T(0));
  }
  Tensor(std::vector<std::int64_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != compute_numel(shape_))
      throw shape_error("tensor data size does not match shape");
  }

  static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::int64_t> shape, T v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }
  static Tensor randn(std::vector<std::int64_t> shape, Rng& rng, T mean = T(0), T stddev = T(1)) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = static_cast<T>(rand_normal(rng, double(mean), double(stddev)));
    return t;
  }
  static Tensor rand_uniform(std::vector<std::int64_t> shape, Rng& rng, T lo = T(0),
                             T hi = T(1)) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = static_cast<T>(zsseg::rand_uniform(rng, double(lo), double(hi)));
    return t;
  }

  const std::vector<std::int64_t>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // [C,H,W] access
  T& at(std::int64_t c, std::int64_t h, std::int64_t w) {
    assert(ndim() == 3);
    return data_[static_cast<std::size_t>((c * shape_[1] + h) * shape_[2] + w)];
  }
  const T& at(std::int64_t c, std::int64_t h, std::int64_t w) const {
    assert(ndim() == 3);
    return data_[static_cast<std::size_t>((c * shape_[1] + h) * shape_[2] + w)];
  }
  // [M,N] access
  T& at(std::int64_t i, std::int64_t j) {
    assert(ndim() == 2);
    return data_[static_cast<std::size_t>(i * shape_[1] + j)];
  }
  const T& at(std::int64_t i, std::int64_t j) const {
    assert(ndim() == 2);
    return data_[static_cast<std::size_t>(i * shape_[1] + j)];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  void add_(const Tensor& other) {
    assert(numel() == other.numel());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  T max_abs() const {
    T m = T(0);
    for (const T& v : data_) m = std::max(m, static_cast<T>(std::abs(double(v))));
    return m;
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out = Tensor<U>(shape_);
    for (std::int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
    return out;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << "]";
    return os.str();
  }

 private:
  static std::int64_t compute_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
      if (d < 0) throw shape_error("negative dimension");
      n *= d;
    }
    return n;
  }

  std::vector<std::int64_t> shape_;
  std::vector<T> data_;
};

template <class T>
void require_shape(const Tensor<T>& t, std::initializer_list<std::int64_t> shape, const char* what) {
  bool ok = t.ndim() == static_cast<int>(shape.size());
  if (ok) {
    int i = 0;
    for (auto d : shape) ok = ok && t.dim(i++) == d;
  }
  if (!ok) {
    std::ostringstream os;
    os << what << ": expected shape [";
    bool first = true;
    for (auto d : shape) {
      os << (first ? "" : ",") << d;
      first = false;
    }
    os << "], got " << t.shape_str();
    throw shape_error(os.str());
  }
}

template <class T>
void require_ndim(const Tensor<T>& t, int ndim, const char* what) {
  if (t.ndim() != ndim) {
    std::ostringstream os;
    os << what << ": expected rank " << ndim << " tensor, got " << t.shape_str();
    throw shape_error(os.str());
  }
}

}  // namespace zsseg
