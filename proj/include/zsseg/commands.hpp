#pragma once

// One function per CLI subcommand. Each resolves its configuration, does
// the work, writes artifacts atomically, and prints a summary to `out`.
// Errors surface as exceptions; the CLI maps them to exit codes.

#include <cstdio>
#include <filesystem>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zsseg/checkpoint.hpp"
#include "zsseg/config.hpp"
#include "zsseg/dataset.hpp"
#include "zsseg/eval.hpp"
#include "zsseg/image.hpp"
#include "zsseg/synthetic.hpp"
#include "zsseg/train.hpp"

#ifndef ZSSEG_VERSION
#define ZSSEG_VERSION "untracked"
#endif

namespace zsseg {

struct TrainArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

struct EvalArgs {
  std::string config_path;
  std::string checkpoint_path;
  std::vector<std::string> overrides;
  std::string split = "test";
};

struct DomainEvalArgs {
  std::string config_path;
  std::string checkpoint_path;
  std::string target_root;
  std::string class_map_path;
  std::vector<std::string> overrides;
};

struct PredictArgs {
  std::string image_path;
  std::string checkpoint_path;
  std::string out_path;
};

struct SynthArgs {
  std::string out_root;
  std::int64_t n_images = 200;
  std::int64_t size = 64;
  int n_classes = 6;
  std::uint64_t seed = 0;
  std::string style = "plain";
};

inline Config resolve_config(const std::string& config_path,
                             const std::vector<std::string>& overrides) {
  Config cfg;
  if (!config_path.empty()) cfg = load_config_file(config_path);
  for (const auto& o : overrides) apply_override(cfg, o);
  validate_config(cfg);
  return cfg;
}

inline FoldSpec resolve_fold(const Config& cfg, int n_classes) {
  if (!cfg.fold_file.empty()) return load_fold_override(cfg.fold_file, n_classes);
  return build_fold_spec(cfg.fold_index, n_classes, cfg.classes_per_fold);
}

namespace detail {

inline std::string class_list(const std::vector<int>& v) {
  std::string s = "{";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s + "}";
}

inline std::string join_path(const std::string& dir, const std::string& leaf) {
  return (std::filesystem::path(dir) / leaf).string();
}

}  // namespace detail

// Logged before any training step: version, config hash, seed, fold, and
// the parameter-count manifest grouped by module.
template <class T>
void print_run_header(std::ostream& out, const Config& cfg, const FoldSpec& fold,
                      const ParamStore<T>& ps) {
  out << "version " << ZSSEG_VERSION << "\n";
  out << "config_hash " << hex64(config_hash(cfg)) << "\n";
  out << "seed " << cfg.seed << "\n";
  out << "fold " << fold.fold << " train " << detail::class_list(fold.train_classes)
      << " test " << detail::class_list(fold.test_classes) << "\n";
  std::map<std::string, std::pair<std::int64_t, std::int64_t>> groups;
  for (const auto& e : ps.entries()) {
    const auto dot = e.name.find('.');
    auto& g = groups[e.name.substr(0, dot)];
    g.first += e.var->value.numel();
    if (e.trainable) g.second += e.var->value.numel();
  }
  out << "parameters " << ps.total_params() << " total, " << ps.trainable_params()
      << " trainable\n";
  for (const auto& [name, counts] : groups)
    out << "  " << name << " " << counts.first << " (" << counts.second << " trainable)\n";
}

inline void cmd_train(const TrainArgs& args, std::ostream& out) {
  Config cfg = resolve_config(args.config_path, args.overrides);
  if (cfg.dataset_root.empty()) throw config_error("dataset.root must be set for training");
  const std::uint64_t hash = config_hash(cfg);
  const std::string arch = arch_text(cfg);

  DatasetHandle ds(cfg.dataset_root);
  const FoldSpec fold = resolve_fold(cfg, ds.meta().n_classes);
  Pipeline<double> model(model_config(cfg));
  print_run_header(out, cfg, fold, model.params());

  SgdMomentum<double> opt(model.params(), cfg.lr, cfg.momentum, cfg.iterations,
                          cfg.poly_power);
  std::filesystem::create_directories(cfg.out_dir);

  TrainHooks hooks;
  hooks.on_log = [&](std::int64_t t, double loss, double lr) {
    char line[96];
    std::snprintf(line, sizeof line, "iter %lld loss %.6f lr %.6g", (long long)t, loss, lr);
    out << line << "\n";
  };
  hooks.on_checkpoint = [&](std::int64_t iter) {
    char leaf[48];
    std::snprintf(leaf, sizeof leaf, "checkpoint_%06lld.zscp", (long long)iter);
    const std::string path = detail::join_path(cfg.out_dir, leaf);
    save_checkpoint(path, snapshot_checkpoint(hash, iter, arch, model.params(), &opt));
    out << "checkpoint " << path << "\n";
  };
  const TrainStats stats = train_model(model, opt, ds, fold, cfg, hooks);

  const std::string final_path = detail::join_path(cfg.out_dir, "checkpoint_final.zscp");
  save_checkpoint(final_path,
                  snapshot_checkpoint(hash, stats.iterations_run, arch, model.params(), &opt));

  // Post-hoc protocol audit: every class id the training loop sampled.
  nlohmann::json sampled = nlohmann::json::object();
  for (const auto& [cls, n] : stats.class_counts) sampled[std::to_string(cls)] = n;
  const nlohmann::json audit = {{"fold", fold.fold},
                                {"train_classes", fold.train_classes},
                                {"test_classes", fold.test_classes},
                                {"sampled_class_counts", sampled}};
  const std::string audit_path = detail::join_path(cfg.out_dir, "train_audit.json");
  write_file_atomic(audit_path, audit.dump(2) + "\n");

  out << "final loss " << stats.loss_history.back() << "\n";
  out << "wrote " << final_path << "\n";
  out << "wrote " << audit_path << "\n";
}

// Loads a checkpoint and rebuilds the model it describes. The
// architecture block must match the active configuration when one is
// given (pass empty arch to skip the check, e.g. for predict).
inline Pipeline<double> model_from_checkpoint(const Checkpoint& ck, const std::string& arch) {
  if (!arch.empty() && ck.arch != arch) {
    auto indent = [](const std::string& block) {
      std::string s;
      std::istringstream in(block);
      std::string line;
      while (std::getline(in, line)) s += "\n    " + line;
      return s;
    };
    throw config_error("checkpoint architecture does not match the configuration\n  checkpoint:" +
                       indent(ck.arch) + "\n  configuration:" + indent(arch));
  }
  Pipeline<double> model(model_config_from_arch(ck.arch));
  restore_checkpoint<double>(ck, model.params(), nullptr);
  return model;
}

inline void print_eval_summary(std::ostream& out, const MetricsRecord& rec) {
  out << "domain " << rec.domain << " split " << rec.split << " episodes "
      << rec.n_episodes << "\n";
  for (const auto& [cls, iou] : rec.per_class_iou) {
    char line[64];
    std::snprintf(line, sizeof line, "  class %d iou %.4f", cls, iou);
    out << line << "\n";
  }
  char line[48];
  std::snprintf(line, sizeof line, "miou %.4f", rec.miou);
  out << line << "\n";
}

inline void cmd_eval(const EvalArgs& args, std::ostream& out) {
  Config cfg = resolve_config(args.config_path, args.overrides);
  if (cfg.dataset_root.empty()) throw config_error("dataset.root must be set for evaluation");
  if (args.split != "test" && args.split != "train")
    throw config_error("--split must be test or train, got \"" + args.split + "\"");

  const Checkpoint ck = load_checkpoint(args.checkpoint_path);
  Pipeline<double> model = model_from_checkpoint(ck, arch_text(cfg));
  if (ck.config_hash != config_hash(cfg))
    out << "note: config hash " << hex64(config_hash(cfg))
        << " differs from the checkpoint's " << hex64(ck.config_hash) << "\n";

  DatasetHandle ds(cfg.dataset_root);
  const FoldSpec fold = resolve_fold(cfg, ds.meta().n_classes);
  const auto& classes = args.split == "train" ? fold.train_classes : fold.test_classes;
  const EvalResult ev =
      evaluate_classes(model, ds, classes, cfg.eval_episodes, cfg.image_size, cfg.eval_seed);
  const MetricsRecord rec =
      make_metrics_record(ev, fold.fold, "source", args.split, cfg.eval_seed, config_hash(cfg));

  std::filesystem::create_directories(cfg.out_dir);
  const std::string path = detail::join_path(cfg.out_dir, "metrics.jsonl");
  write_metrics_jsonl(path, {rec});
  print_eval_summary(out, rec);
  out << "wrote " << path << "\n";
}

// Maps each held-out source class to a class of the target dataset.
// File format: JSON object, {"<source class id>": target class id}.
inline std::map<int, int> load_class_map(const std::string& path,
                                         const std::vector<int>& source_classes,
                                         int target_n_classes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw config_error(path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw config_error(path + " must be a JSON object");
  std::map<int, int> cmap;
  const std::set<int> sources(source_classes.begin(), source_classes.end());
  for (const auto& [key, value] : j.items()) {
    int src;
    try {
      src = std::stoi(key);
    } catch (const std::exception&) {
      throw config_error(path + ": key \"" + key + "\" is not a class id");
    }
    if (!sources.count(src))
      throw config_error(path + ": class " + key + " is not a held-out source class " +
                         detail::class_list(source_classes));
    if (!value.is_number_integer())
      throw config_error(path + ": value for class " + key + " must be an integer");
    const int dst = value.get<int>();
    if (dst < 1 || dst > target_n_classes)
      throw config_error(path + ": target class " + std::to_string(dst) +
                         " out of range [1, " + std::to_string(target_n_classes) + "]");
    cmap[src] = dst;
  }
  for (int src : source_classes)
    if (!cmap.count(src))
      throw config_error(path + ": no mapping for source class " + std::to_string(src));
  return cmap;
}

inline void cmd_domain_eval(const DomainEvalArgs& args, std::ostream& out) {
  Config cfg = resolve_config(args.config_path, args.overrides);
  if (cfg.dataset_root.empty())
    throw config_error("dataset.root must be set for domain evaluation");

  const Checkpoint ck = load_checkpoint(args.checkpoint_path);
  Pipeline<double> model = model_from_checkpoint(ck, arch_text(cfg));

  DatasetHandle source_ds(cfg.dataset_root);
  const FoldSpec fold = resolve_fold(cfg, source_ds.meta().n_classes);
  const std::uint64_t hash = config_hash(cfg);

  const EvalResult source_ev = evaluate_classes(model, source_ds, fold.test_classes,
                                                cfg.eval_episodes, cfg.image_size, cfg.eval_seed);
  const MetricsRecord source_rec =
      make_metrics_record(source_ev, fold.fold, "source", "test", cfg.eval_seed, hash);

  DatasetHandle target_ds(args.target_root);
  const auto cmap =
      load_class_map(args.class_map_path, fold.test_classes, target_ds.meta().n_classes);
  std::set<int> mapped;
  for (const auto& [src, dst] : cmap) mapped.insert(dst);
  const std::vector<int> target_classes(mapped.begin(), mapped.end());

  const EvalResult target_ev = evaluate_classes(model, target_ds, target_classes,
                                                cfg.eval_episodes, cfg.image_size, cfg.eval_seed);
  const MetricsRecord target_rec =
      make_metrics_record(target_ev, fold.fold, "target", "test", cfg.eval_seed, hash);

  std::filesystem::create_directories(cfg.out_dir);
  const std::string path = detail::join_path(cfg.out_dir, "metrics_domain.jsonl");
  write_metrics_jsonl(path, {source_rec, target_rec});
  print_eval_summary(out, source_rec);
  print_eval_summary(out, target_rec);
  out << "wrote " << path << "\n";
}

inline void cmd_predict(const PredictArgs& args, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(args.checkpoint_path);
  Pipeline<double> model = model_from_checkpoint(ck, "");

  const ImageU8 img = load_image_rgb(args.image_path);
  if (img.h < 48 || img.w < 48)
    throw config_error("input image must be at least 48x48 (features are computed at 1/8 "
                       "resolution and the pyramid needs a 6x6 grid), got " +
                       std::to_string(img.w) + "x" + std::to_string(img.h));
  const PredictionMask<double> pm = model.predict(to_unit_tensor<double>(img));
  save_image_png(args.out_path, mask_to_image(pm.mask));
  out << "wrote " << args.out_path << " (" << img.w << "x" << img.h << ")\n";
}

inline void cmd_synth(const SynthArgs& args, std::ostream& out) {
  SynthSpec spec;
  spec.out_root = args.out_root;
  spec.n_images = args.n_images;
  spec.size = args.size;
  spec.n_classes = args.n_classes;
  spec.seed = args.seed;
  spec.style = args.style;
  const DatasetMeta meta = generate_synthetic_dataset(spec);
  out << "generated " << meta.ids.size() << " images, " << meta.n_classes << " classes, "
      << args.size << "x" << args.size << ", style " << spec.style << ", under "
      << spec.out_root << "\n";
}

}  // namespace zsseg
