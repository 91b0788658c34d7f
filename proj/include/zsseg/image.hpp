#pragma once

// 8-bit image handling: PNG decode/encode (through OpenCV imgcodecs, via
// in-memory buffers so writes stay atomic), conversion to unit-range
// tensors, and the small resize helpers the data layer needs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "zsseg/functional.hpp"
#include "zsseg/serialize.hpp"
#include "zsseg/tensor.hpp"

namespace zsseg {

// Packed HWC, c is 1 (gray) or 3 (RGB).
struct ImageU8 {
  std::int64_t h = 0, w = 0, c = 0;
  std::vector<std::uint8_t> data;

  ImageU8() = default;
  ImageU8(std::int64_t h_, std::int64_t w_, std::int64_t c_)
      : h(h_), w(w_), c(c_), data(std::size_t(h_ * w_ * c_), 0) {}

  std::uint8_t& at(std::int64_t y, std::int64_t x, std::int64_t ch) {
    return data[std::size_t((y * w + x) * c + ch)];
  }
  std::uint8_t at(std::int64_t y, std::int64_t x, std::int64_t ch) const {
    return data[std::size_t((y * w + x) * c + ch)];
  }
};

inline ImageU8 decode_png(const std::string& bytes, int want_channels,
                          const std::string& path) {
  cv::Mat raw(1, int(bytes.size()), CV_8UC1, const_cast<char*>(bytes.data()));
  cv::Mat m = cv::imdecode(raw, cv::IMREAD_UNCHANGED);
  if (m.empty()) throw io_error("cannot decode PNG: " + path);
  if (m.depth() != CV_8U)
    throw io_error("PNG must be 8-bit: " + path);
  if (want_channels == 1 && m.channels() != 1)
    throw io_error("label map must be single-channel 8-bit PNG: " + path +
                   " (has " + std::to_string(m.channels()) + " channels)");
  if (want_channels == 3 && m.channels() != 3)
    throw io_error("image must be 3-channel 8-bit PNG: " + path + " (has " +
                   std::to_string(m.channels()) + " channels)");
  ImageU8 out(m.rows, m.cols, want_channels);
  for (std::int64_t y = 0; y < out.h; ++y)
    for (std::int64_t x = 0; x < out.w; ++x) {
      if (want_channels == 1) {
        out.at(y, x, 0) = m.at<std::uint8_t>(int(y), int(x));
      } else {
        const auto px = m.at<cv::Vec3b>(int(y), int(x));  // BGR on disk order
        out.at(y, x, 0) = px[2];
        out.at(y, x, 1) = px[1];
        out.at(y, x, 2) = px[0];
      }
    }
  return out;
}

inline ImageU8 load_image_rgb(const std::string& path) {
  return decode_png(read_file_bytes(path), 3, path);
}

inline ImageU8 load_label_map(const std::string& path) {
  return decode_png(read_file_bytes(path), 1, path);
}

// Encodes to PNG in memory, then writes atomically.
inline void save_image_png(const std::string& path, const ImageU8& img) {
  if (img.c != 1 && img.c != 3) throw contract_error("save_image_png: channels must be 1 or 3");
  cv::Mat m(int(img.h), int(img.w), img.c == 1 ? CV_8UC1 : CV_8UC3);
  for (std::int64_t y = 0; y < img.h; ++y)
    for (std::int64_t x = 0; x < img.w; ++x) {
      if (img.c == 1) {
        m.at<std::uint8_t>(int(y), int(x)) = img.at(y, x, 0);
      } else {
        m.at<cv::Vec3b>(int(y), int(x)) =
            cv::Vec3b(img.at(y, x, 2), img.at(y, x, 1), img.at(y, x, 0));
      }
    }
  std::vector<std::uint8_t> buf;
  if (!cv::imencode(".png", m, buf)) throw io_error("PNG encode failed for " + path);
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(buf.data()),
                                           buf.size()));
}

// [3, h, w] tensor with values in [0, 1].
template <class T>
Tensor<T> to_unit_tensor(const ImageU8& img) {
  if (img.c != 3) throw contract_error("to_unit_tensor expects an RGB image");
  Tensor<T> t({3, img.h, img.w});
  for (std::int64_t ch = 0; ch < 3; ++ch)
    for (std::int64_t y = 0; y < img.h; ++y)
      for (std::int64_t x = 0; x < img.w; ++x)
        t[(ch * img.h + y) * img.w + x] = T(img.at(y, x, ch)) / T(255);
  return t;
}

// [h, w] binary mask marking pixels equal to class_id (ids start at 1;
// 0 is background).
template <class T>
Tensor<T> binarize_mask(const ImageU8& label, int class_id) {
  if (label.c != 1) throw contract_error("binarize_mask expects a single-channel map");
  if (class_id < 1)
    throw config_error("class id must be >= 1 (0 is background), got " +
                       std::to_string(class_id));
  Tensor<T> t({label.h, label.w});
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t[i] = label.data[std::size_t(i)] == class_id ? T(1) : T(0);
  return t;
}

// 0/1 mask tensor to a 0/255 gray image.
inline ImageU8 mask_to_image(const Tensor<std::uint8_t>& mask) {
  require_ndim(mask, 2, "mask_to_image input");
  ImageU8 img(mask.dim(0), mask.dim(1), 1);
  for (std::int64_t i = 0; i < mask.numel(); ++i)
    img.data[std::size_t(i)] = mask[i] ? 255 : 0;
  return img;
}

// Half-pixel-centered bilinear resize, matching the tensor upsampling law.
inline ImageU8 resize_bilinear(const ImageU8& img, std::int64_t oh, std::int64_t ow) {
  ImageU8 out(oh, ow, img.c);
  for (std::int64_t y = 0; y < oh; ++y) {
    std::int64_t y0, y1;
    double wy;
    detail::bilinear_coeff(y, img.h, oh, y0, y1, wy);
    for (std::int64_t x = 0; x < ow; ++x) {
      std::int64_t x0, x1;
      double wx;
      detail::bilinear_coeff(x, img.w, ow, x0, x1, wx);
      for (std::int64_t ch = 0; ch < img.c; ++ch) {
        const double v = (1 - wy) * ((1 - wx) * img.at(y0, x0, ch) + wx * img.at(y0, x1, ch)) +
                         wy * ((1 - wx) * img.at(y1, x0, ch) + wx * img.at(y1, x1, ch));
        out.at(y, x, ch) = std::uint8_t(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return out;
}

// Nearest-neighbor resize; the only safe choice for label maps. Uses the
// same source-index law as the tensor-level nearest upsampling.
inline ImageU8 resize_nearest(const ImageU8& img, std::int64_t oh, std::int64_t ow) {
  ImageU8 out(oh, ow, img.c);
  for (std::int64_t y = 0; y < oh; ++y) {
    const std::int64_t sy = std::min(y * img.h / oh, img.h - 1);
    for (std::int64_t x = 0; x < ow; ++x) {
      const std::int64_t sx = std::min(x * img.w / ow, img.w - 1);
      for (std::int64_t ch = 0; ch < img.c; ++ch) out.at(y, x, ch) = img.at(sy, sx, ch);
    }
  }
  return out;
}

}  // namespace zsseg
