#pragma once

// Episodic training loop. A "batch" is gradient accumulation over
// batch_size independently sampled episodes, each scaled by 1/B, followed
// by one momentum-SGD step under polynomial learning-rate decay.
// Episode b of iteration t draws from Rng(seed + t*B + b), so runs are
// reproducible and resumable.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "zsseg/config.hpp"
#include "zsseg/dataset.hpp"
#include "zsseg/folds.hpp"
#include "zsseg/loss.hpp"
#include "zsseg/optim.hpp"
#include "zsseg/pipeline.hpp"

namespace zsseg {

struct TrainStats {
  std::vector<double> loss_history;           // mean episode loss per iteration
  std::map<int, std::int64_t> class_counts;   // audit of sampled class ids
  std::int64_t iterations_run = 0;
};

struct TrainHooks {
  // Called every log_every iterations and on the last one.
  std::function<void(std::int64_t t, double loss, double lr)> on_log;
  // Called after the optimizer step at checkpoint boundaries.
  std::function<void(std::int64_t t)> on_checkpoint;
};

template <class T>
TrainStats train_model(Pipeline<T>& model, SgdMomentum<T>& opt, const DatasetHandle& ds,
                       const FoldSpec& fold, const Config& cfg,
                       const TrainHooks& hooks = {}) {
  const LossKind loss_kind = parse_loss_kind(cfg.loss);
  const std::int64_t B = cfg.batch_size;
  TrainStats stats;
  stats.loss_history.reserve(std::size_t(cfg.iterations));

  for (std::int64_t t = 0; t < cfg.iterations; ++t) {
    opt.zero_grad();
    double batch_loss = 0;
    std::string batch_ids;
    for (std::int64_t b = 0; b < B; ++b) {
      Rng rng(cfg.seed + std::uint64_t(t) * std::uint64_t(B) + std::uint64_t(b));
      auto ep = sample_episode<T>(ds, fold.train_classes, cfg.image_size, rng);
      ++stats.class_counts[ep.class_id];
      if (!batch_ids.empty()) batch_ids += ", ";
      batch_ids += ep.image_id;

      auto logits = model.forward_logits(ep.image);
      auto loss = segmentation_loss(logits, ep.mask, loss_kind);
      batch_loss += double(loss->value[0]);
      backward(scale(loss, T(1) / T(B)));
    }
    batch_loss /= double(B);
    if (!std::isfinite(batch_loss))
      throw training_error("non-finite loss at iteration " + std::to_string(t) +
                           " (episode images: " + batch_ids + "); aborting");
    opt.step(t);
    stats.loss_history.push_back(batch_loss);
    stats.iterations_run = t + 1;

    if (hooks.on_log && (t % cfg.log_every == 0 || t + 1 == cfg.iterations))
      hooks.on_log(t, batch_loss, double(opt.lr_at(t)));
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && (t + 1) % cfg.checkpoint_every == 0)
      hooks.on_checkpoint(t + 1);
  }
  return stats;
}

}  // namespace zsseg
