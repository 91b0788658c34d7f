#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace zsseg {

// Error kinds map onto CLI exit codes: config/io errors are user errors
// (exit 1), shape/contract/training errors are internal invariant
// violations (exit 2).
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct config_error : error {
  using error::error;
};
struct io_error : error {
  using error::error;
};
struct shape_error : error {
  using error::error;
};
struct contract_error : error {
  using error::error;
};
struct training_error : error {
  using error::error;
};

using Rng = std::mt19937_64;

inline int rand_int(Rng& rng, int lo, int hi) {  // inclusive bounds
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline double rand_uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double rand_normal(Rng& rng, double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

// FNV-1a, used to fingerprint canonicalized configs and checkpoint payloads.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 14695981039346656037ull) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

namespace detail {

// C = alpha * op(A) * op(B) (+ C if accumulate). Row-major buffers.
template <class T>
void gemm(const T* a, const T* b, T* c, long m, long k, long n, bool trans_a = false,
          bool trans_b = false, bool accumulate = false) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<Mat>;
  using Map = Eigen::Map<const Mat>;
  Map A(a, trans_a ? k : m, trans_a ? m : k);
  Map B(b, trans_b ? n : k, trans_b ? k : n);
  CMap C(c, m, n);
  if (!trans_a && !trans_b) {
    if (accumulate) C.noalias() += A * B;
    else C.noalias() = A * B;
  } else if (trans_a && !trans_b) {
    if (accumulate) C.noalias() += A.transpose() * B;
    else C.noalias() = A.transpose() * B;
  } else if (!trans_a && trans_b) {
    if (accumulate) C.noalias() += A * B.transpose();
    else C.noalias() = A * B.transpose();
  } else {
    if (accumulate) C.noalias() += A.transpose() * B.transpose();
    else C.noalias() = A.transpose() * B.transpose();
  }
}

}  // namespace detail

}  // namespace zsseg
