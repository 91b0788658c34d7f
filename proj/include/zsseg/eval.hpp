#pragma once

// Episodic evaluation. Intersection and union counts accumulate per class
// across episodes; IoU is computed from the totals, not averaged per
// episode, so large and small objects weigh by pixel count. Episode k
// draws from Rng(eval_seed + k): extending a run never reshuffles the
// episodes already evaluated.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zsseg/core.hpp"
#include "zsseg/dataset.hpp"
#include "zsseg/pipeline.hpp"
#include "zsseg/serialize.hpp"

namespace zsseg {

struct OverlapCounts {
  std::int64_t intersection = 0;
  std::int64_t unions = 0;
};

// Empty prediction against empty truth is a perfect match by convention.
inline double iou_from_counts(const OverlapCounts& c) {
  if (c.unions == 0) return 1.0;
  return double(c.intersection) / double(c.unions);
}

template <class T>
OverlapCounts count_overlap(const Tensor<std::uint8_t>& pred, const Tensor<T>& truth) {
  if (pred.ndim() != 2 || truth.ndim() != 2 || pred.dim(0) != truth.dim(0) ||
      pred.dim(1) != truth.dim(1))
    throw shape_error("count_overlap: prediction " + pred.shape_str() + " vs truth " +
                      truth.shape_str());
  OverlapCounts c;
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    const bool p = pred[i] != 0;
    const bool t = truth[i] > T(0.5);
    c.intersection += (p && t) ? 1 : 0;
    c.unions += (p || t) ? 1 : 0;
  }
  return c;
}

struct EvalResult {
  std::map<int, double> per_class_iou;              // classes actually evaluated
  std::map<int, std::int64_t> episodes_per_class;
  double miou = 0;
  std::int64_t episodes = 0;
};

// A predictor maps an episode to a binary mask at the episode's label
// resolution. Besides the trained model this admits reference predictors
// (ground truth, all-background, all-foreground) for protocol checks and
// baselines.
template <class T>
using EpisodePredictor = std::function<Tensor<std::uint8_t>(const Episode<T>&)>;

template <class T>
EvalResult evaluate_episodes(const EpisodePredictor<T>& predict, const DatasetHandle& ds,
                             const std::vector<int>& classes, std::int64_t episodes,
                             std::int64_t image_size, std::uint64_t eval_seed) {
  if (classes.empty()) throw contract_error("evaluate_episodes: empty class set");
  if (episodes < 1) throw contract_error("evaluate_episodes: episodes must be >= 1");
  std::map<int, OverlapCounts> acc;
  std::map<int, std::int64_t> seen;
  for (std::int64_t k = 0; k < episodes; ++k) {
    Rng rng(eval_seed + std::uint64_t(k));
    auto ep = sample_episode<T>(ds, classes, image_size, rng);
    auto c = count_overlap(predict(ep), ep.mask);
    acc[ep.class_id].intersection += c.intersection;
    acc[ep.class_id].unions += c.unions;
    ++seen[ep.class_id];
  }
  EvalResult r;
  r.episodes = episodes;
  r.episodes_per_class = seen;
  double sum = 0;
  for (const auto& [cls, counts] : acc) {
    const double iou = iou_from_counts(counts);
    r.per_class_iou[cls] = iou;
    sum += iou;
  }
  r.miou = sum / double(acc.size());
  return r;
}

template <class T>
EvalResult evaluate_classes(const Pipeline<T>& model, const DatasetHandle& ds,
                            const std::vector<int>& classes, std::int64_t episodes,
                            std::int64_t image_size, std::uint64_t eval_seed) {
  EpisodePredictor<T> predict = [&model](const Episode<T>& ep) {
    return model.predict(ep.image).mask;
  };
  return evaluate_episodes<T>(predict, ds, classes, episodes, image_size, eval_seed);
}

// One evaluation run, flattened for the JSONL metrics log.
struct MetricsRecord {
  int fold = 0;
  std::string domain = "source";  // "source" or "target"
  std::string split = "test";
  std::int64_t n_episodes = 0;
  std::map<int, double> per_class_iou;
  double miou = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

inline MetricsRecord make_metrics_record(const EvalResult& ev, int fold,
                                         const std::string& domain, const std::string& split,
                                         std::uint64_t seed, std::uint64_t cfg_hash) {
  MetricsRecord rec;
  rec.fold = fold;
  rec.domain = domain;
  rec.split = split;
  rec.n_episodes = ev.episodes;
  rec.per_class_iou = ev.per_class_iou;
  rec.miou = ev.miou;
  rec.seed = seed;
  rec.config_hash = hex64(cfg_hash);
  return rec;
}

inline nlohmann::json metrics_to_json(const MetricsRecord& rec) {
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [cls, iou] : rec.per_class_iou) per_class[std::to_string(cls)] = iou;
  return nlohmann::json{{"fold", rec.fold},
                        {"domain", rec.domain},
                        {"split", rec.split},
                        {"n_episodes", rec.n_episodes},
                        {"per_class_iou", per_class},
                        {"miou", rec.miou},
                        {"seed", rec.seed},
                        {"config_hash", rec.config_hash}};
}

// Writes one record per line. The whole file is replaced atomically, so a
// reader never sees a partial line.
inline void write_metrics_jsonl(const std::string& path,
                                const std::vector<MetricsRecord>& records) {
  std::string out;
  for (const auto& rec : records) {
    out += metrics_to_json(rec).dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

}  // namespace zsseg
