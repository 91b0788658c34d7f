#pragma once

// On-disk dataset access and episodic sampling.
//
// Layout:
//   <root>/images/<id>.png   8-bit RGB
//   <root>/labels/<id>.png   8-bit single channel, pixel value = class id,
//                            0 = background
//   <root>/meta.json         {"n_classes": int, "ids": [string...]}

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zsseg/core.hpp"
#include "zsseg/image.hpp"
#include "zsseg/serialize.hpp"

namespace zsseg {

struct DatasetMeta {
  int n_classes = 0;
  std::vector<std::string> ids;
};

inline DatasetMeta load_dataset_meta(const std::string& root) {
  const std::string path = (std::filesystem::path(root) / "meta.json").string();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw config_error(path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object() || !j.contains("n_classes") || !j.contains("ids"))
    throw config_error(path + " must be an object with \"n_classes\" and \"ids\"");
  if (!j["n_classes"].is_number_integer() || j["n_classes"].get<int>() < 1)
    throw config_error(path + ": \"n_classes\" must be a positive integer");
  if (!j["ids"].is_array() || j["ids"].empty())
    throw config_error(path + ": \"ids\" must be a non-empty array");
  DatasetMeta meta;
  meta.n_classes = j["n_classes"].get<int>();
  std::map<std::string, int> seen;
  for (const auto& v : j["ids"]) {
    if (!v.is_string()) throw config_error(path + ": \"ids\" entries must be strings");
    const std::string id = v.get<std::string>();
    if (++seen[id] > 1) throw config_error(path + ": duplicate id \"" + id + "\"");
    meta.ids.push_back(id);
  }
  return meta;
}

// Indexes which images contain which classes by scanning every label map
// once at construction. Images are loaded lazily per episode.
class DatasetHandle {
 public:
  explicit DatasetHandle(const std::string& root)
      : root_(root), meta_(load_dataset_meta(root)) {
    by_class_.resize(std::size_t(meta_.n_classes) + 1);
    for (std::size_t i = 0; i < meta_.ids.size(); ++i) {
      const auto label = load_label_map(label_path(meta_.ids[i]));
      std::vector<bool> present(std::size_t(meta_.n_classes) + 1, false);
      for (std::uint8_t px : label.data) {
        if (px > meta_.n_classes)
          throw config_error("label " + label_path(meta_.ids[i]) + " contains class id " +
                             std::to_string(int(px)) + " > n_classes " +
                             std::to_string(meta_.n_classes));
        present[px] = true;
      }
      for (int c = 1; c <= meta_.n_classes; ++c)
        if (present[std::size_t(c)]) by_class_[std::size_t(c)].push_back(std::int64_t(i));
    }
  }

  const std::string& root() const { return root_; }
  const DatasetMeta& meta() const { return meta_; }

  const std::vector<std::int64_t>& images_with_class(int c) const {
    if (c < 1 || c > meta_.n_classes)
      throw contract_error("class id " + std::to_string(c) + " out of range");
    return by_class_[std::size_t(c)];
  }

  std::string image_path(const std::string& id) const {
    return (std::filesystem::path(root_) / "images" / (id + ".png")).string();
  }
  std::string label_path(const std::string& id) const {
    return (std::filesystem::path(root_) / "labels" / (id + ".png")).string();
  }

  ImageU8 load_image(std::int64_t idx) const {
    return load_image_rgb(image_path(meta_.ids[std::size_t(idx)]));
  }
  ImageU8 load_label(std::int64_t idx) const {
    return load_label_map(label_path(meta_.ids[std::size_t(idx)]));
  }

 private:
  std::string root_;
  DatasetMeta meta_;
  std::vector<std::vector<std::int64_t>> by_class_;
};

template <class T>
struct Episode {
  Tensor<T> image;  // [3, H, W] in [0, 1]
  Tensor<T> mask;   // [H, W] binary foreground
  int class_id = 0;
  std::string image_id;
};

// Samples one episode: a class uniformly from `classes`, then an image
// uniformly among those containing it. Images whose size differs from
// `image_size` are resized (bilinear for the image, nearest for the
// label). The returned mask always has foreground pixels.
template <class T>
Episode<T> sample_episode(const DatasetHandle& ds, const std::vector<int>& classes,
                          std::int64_t image_size, Rng& rng) {
  if (classes.empty()) throw contract_error("sample_episode: empty class set");
  const int cls = classes[std::size_t(rand_int(rng, 0, std::int64_t(classes.size()) - 1))];
  const auto& candidates = ds.images_with_class(cls);
  if (candidates.empty())
    throw config_error("dataset has no image containing class " + std::to_string(cls) +
                       "; cannot sample an episode");
  const std::int64_t idx =
      candidates[std::size_t(rand_int(rng, 0, std::int64_t(candidates.size()) - 1))];

  auto image = ds.load_image(idx);
  auto label = ds.load_label(idx);
  if (image.h != label.h || image.w != label.w)
    throw config_error("image/label size mismatch for id " +
                       ds.meta().ids[std::size_t(idx)]);
  if (image_size > 0 && (image.h != image_size || image.w != image_size)) {
    image = resize_bilinear(image, image_size, image_size);
    label = resize_nearest(label, image_size, image_size);
  }

  Episode<T> ep;
  ep.image = to_unit_tensor<T>(image);
  ep.mask = binarize_mask<T>(label, cls);
  ep.class_id = cls;
  ep.image_id = ds.meta().ids[std::size_t(idx)];
  double fg = 0;
  for (std::int64_t i = 0; i < ep.mask.numel(); ++i) fg += double(ep.mask[i]);
  if (fg == 0)
    throw config_error("episode for class " + std::to_string(cls) + " on image " +
                       ep.image_id + " has no foreground pixels (class region too " +
                       "small to survive resizing to " + std::to_string(image_size) + ")");
  return ep;
}

}  // namespace zsseg
