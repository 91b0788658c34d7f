#pragma once

// Typed run configuration with a flat key=value surface. One schema table
// drives file parsing, command-line overrides, validation, and the
// canonical serialization used for config hashing, so a config file and
// an equivalent set of overrides always hash identically.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "zsseg/backbone.hpp"
#include "zsseg/core.hpp"
#include "zsseg/loss.hpp"
#include "zsseg/pipeline.hpp"
#include "zsseg/serialize.hpp"

namespace zsseg {

struct Config {
  std::uint64_t seed = 0;
  bool deterministic = true;

  std::string dataset_root;
  std::int64_t image_size = 64;

  int fold_index = 0;
  int classes_per_fold = 2;
  std::string fold_file;

  std::string backbone_variant = "tiny_random";
  std::string backbone_weights;
  std::int64_t block4_channels = 64;
  std::string backbone_align = "pool";
  std::string mam_upsample = "bilinear";

  double lr = 2.5e-3;
  double momentum = 0.9;
  std::int64_t iterations = 1000;
  std::int64_t batch_size = 2;
  std::string loss = "balanced_bce";
  double poly_power = 0.9;
  std::int64_t checkpoint_every = 0;  // 0: only the final checkpoint
  std::int64_t log_every = 25;
  std::string out_dir = "runs";

  std::int64_t eval_episodes = 200;
  std::uint64_t eval_seed = 1234;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::int64_t parse_i64(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  std::int64_t out;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw config_error(key + " expects an integer, got \"" + v + "\"");
  }
  if (pos != v.size()) throw config_error(key + " expects an integer, got \"" + v + "\"");
  return out;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  std::uint64_t out;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw config_error(key + " expects a non-negative integer, got \"" + v + "\"");
  }
  if (pos != v.size() || (!v.empty() && v[0] == '-'))
    throw config_error(key + " expects a non-negative integer, got \"" + v + "\"");
  return out;
}

inline double parse_f64(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw config_error(key + " expects a number, got \"" + v + "\"");
  }
  if (pos != v.size()) throw config_error(key + " expects a number, got \"" + v + "\"");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw config_error(key + " expects true or false, got \"" + v + "\"");
}

inline std::string fmt_f64(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

struct ConfigKey {
  std::string name;
  std::function<void(Config&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

inline const std::vector<ConfigKey>& config_schema() {
  using detail::fmt_f64;
  using detail::parse_bool;
  using detail::parse_f64;
  using detail::parse_i64;
  using detail::parse_u64;
  static const std::vector<ConfigKey> schema = {
      {"seed", [](Config& c, const std::string& v) { c.seed = parse_u64("seed", v); },
       [](const Config& c) { return std::to_string(c.seed); }},
      {"deterministic",
       [](Config& c, const std::string& v) { c.deterministic = parse_bool("deterministic", v); },
       [](const Config& c) { return c.deterministic ? "true" : "false"; }},
      {"dataset.root", [](Config& c, const std::string& v) { c.dataset_root = v; },
       [](const Config& c) { return c.dataset_root; }},
      {"dataset.image_size",
       [](Config& c, const std::string& v) { c.image_size = parse_i64("dataset.image_size", v); },
       [](const Config& c) { return std::to_string(c.image_size); }},
      {"fold.index",
       [](Config& c, const std::string& v) { c.fold_index = int(parse_i64("fold.index", v)); },
       [](const Config& c) { return std::to_string(c.fold_index); }},
      {"fold.classes_per_fold",
       [](Config& c, const std::string& v) {
         c.classes_per_fold = int(parse_i64("fold.classes_per_fold", v));
       },
       [](const Config& c) { return std::to_string(c.classes_per_fold); }},
      {"fold.file", [](Config& c, const std::string& v) { c.fold_file = v; },
       [](const Config& c) { return c.fold_file; }},
      {"backbone.variant", [](Config& c, const std::string& v) { c.backbone_variant = v; },
       [](const Config& c) { return c.backbone_variant; }},
      {"backbone.weights", [](Config& c, const std::string& v) { c.backbone_weights = v; },
       [](const Config& c) { return c.backbone_weights; }},
      {"backbone.block4_channels",
       [](Config& c, const std::string& v) {
         c.block4_channels = parse_i64("backbone.block4_channels", v);
       },
       [](const Config& c) { return std::to_string(c.block4_channels); }},
      {"backbone.align", [](Config& c, const std::string& v) { c.backbone_align = v; },
       [](const Config& c) { return c.backbone_align; }},
      {"mam.upsample", [](Config& c, const std::string& v) { c.mam_upsample = v; },
       [](const Config& c) { return c.mam_upsample; }},
      {"train.lr", [](Config& c, const std::string& v) { c.lr = parse_f64("train.lr", v); },
       [](const Config& c) { return fmt_f64(c.lr); }},
      {"train.momentum",
       [](Config& c, const std::string& v) { c.momentum = parse_f64("train.momentum", v); },
       [](const Config& c) { return fmt_f64(c.momentum); }},
      {"train.iterations",
       [](Config& c, const std::string& v) { c.iterations = parse_i64("train.iterations", v); },
       [](const Config& c) { return std::to_string(c.iterations); }},
      {"train.batch_size",
       [](Config& c, const std::string& v) { c.batch_size = parse_i64("train.batch_size", v); },
       [](const Config& c) { return std::to_string(c.batch_size); }},
      {"train.loss", [](Config& c, const std::string& v) { c.loss = v; },
       [](const Config& c) { return c.loss; }},
      {"train.poly_power",
       [](Config& c, const std::string& v) { c.poly_power = parse_f64("train.poly_power", v); },
       [](const Config& c) { return fmt_f64(c.poly_power); }},
      {"train.checkpoint_every",
       [](Config& c, const std::string& v) {
         c.checkpoint_every = parse_i64("train.checkpoint_every", v);
       },
       [](const Config& c) { return std::to_string(c.checkpoint_every); }},
      {"train.log_every",
       [](Config& c, const std::string& v) { c.log_every = parse_i64("train.log_every", v); },
       [](const Config& c) { return std::to_string(c.log_every); }},
      {"train.out_dir", [](Config& c, const std::string& v) { c.out_dir = v; },
       [](const Config& c) { return c.out_dir; }},
      {"eval.episodes",
       [](Config& c, const std::string& v) { c.eval_episodes = parse_i64("eval.episodes", v); },
       [](const Config& c) { return std::to_string(c.eval_episodes); }},
      {"eval.seed",
       [](Config& c, const std::string& v) { c.eval_seed = parse_u64("eval.seed", v); },
       [](const Config& c) { return std::to_string(c.eval_seed); }},
  };
  return schema;
}

inline void set_config_value(Config& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : config_schema()) {
    if (k.name == key) {
      k.set(cfg, value);
      return;
    }
  }
  throw config_error("unknown config key \"" + key + "\"");
}

// "key=value" with optional whitespace around either side.
inline void apply_override(Config& cfg, const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos)
    throw config_error("override must be key=value, got \"" + text + "\"");
  set_config_value(cfg, detail::trim(text.substr(0, eq)), detail::trim(text.substr(eq + 1)));
}

// File format: one key=value per line; '#' starts a comment; blank lines
// are skipped. Later assignments win, matching override semantics.
inline Config parse_config_text(const std::string& text, const std::string& what) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    try {
      apply_override(cfg, line);
    } catch (const config_error& e) {
      throw config_error(what + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

inline Config load_config_file(const std::string& path) {
  return parse_config_text(read_file_bytes(path), path);
}

// Canonical serialization: every key, sorted, one per line.
inline std::string canonical_config(const Config& cfg) {
  std::vector<std::string> lines;
  for (const auto& k : config_schema()) lines.push_back(k.name + "=" + k.get(cfg));
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const auto& l : lines) {
    out += l;
    out += '\n';
  }
  return out;
}

inline std::uint64_t config_hash(const Config& cfg) { return fnv1a64(canonical_config(cfg)); }

inline BackboneVariant parse_backbone_variant(const std::string& s) {
  if (s == "tiny_random") return BackboneVariant::tiny_random;
  if (s == "pretrained_resnet50") return BackboneVariant::pretrained_resnet50;
  throw config_error("backbone.variant must be tiny_random or pretrained_resnet50, got \"" +
                     s + "\"");
}

inline AlignMode parse_align_mode(const std::string& s) {
  if (s == "pool") return AlignMode::pool;
  if (s == "upsample") return AlignMode::upsample;
  throw config_error("backbone.align must be pool or upsample, got \"" + s + "\"");
}

inline UpsampleMode parse_upsample_mode(const std::string& s) {
  if (s == "bilinear") return UpsampleMode::bilinear;
  if (s == "nearest") return UpsampleMode::nearest;
  throw config_error("mam.upsample must be bilinear or nearest, got \"" + s + "\"");
}

inline ModelConfig model_config(const Config& cfg) {
  ModelConfig mc;
  mc.backbone.variant = parse_backbone_variant(cfg.backbone_variant);
  mc.backbone.weights_path = cfg.backbone_weights;
  mc.backbone.block4_channels = cfg.block4_channels;
  mc.backbone.align = parse_align_mode(cfg.backbone_align);
  mc.mam_upsample = parse_upsample_mode(cfg.mam_upsample);
  mc.init_seed = cfg.seed;
  validate_backbone_config(mc.backbone, /*require_weights=*/false);
  return mc;
}

inline void validate_config(const Config& cfg) {
  if (cfg.image_size < 48 || cfg.image_size > 1024)
    throw config_error("dataset.image_size must be in [48, 1024], got " +
                       std::to_string(cfg.image_size));
  if (cfg.fold_index < 0) throw config_error("fold.index must be >= 0");
  if (cfg.classes_per_fold < 1) throw config_error("fold.classes_per_fold must be >= 1");
  if (cfg.lr <= 0) throw config_error("train.lr must be > 0");
  if (cfg.momentum < 0 || cfg.momentum >= 1)
    throw config_error("train.momentum must be in [0, 1)");
  if (cfg.iterations < 1) throw config_error("train.iterations must be >= 1");
  if (cfg.batch_size < 1) throw config_error("train.batch_size must be >= 1");
  if (cfg.poly_power <= 0 || cfg.poly_power > 10)
    throw config_error("train.poly_power must be in (0, 10]");
  if (cfg.checkpoint_every < 0) throw config_error("train.checkpoint_every must be >= 0");
  if (cfg.log_every < 1) throw config_error("train.log_every must be >= 1");
  if (cfg.eval_episodes < 1) throw config_error("eval.episodes must be >= 1");
  parse_loss_kind(cfg.loss);
  model_config(cfg);  // validates the enum-like strings and channel count
}

// The architecture block stored in checkpoints: exactly the keys that
// shape the parameter manifest.
inline std::string arch_text(const Config& cfg) {
  return "backbone.variant=" + cfg.backbone_variant +
         "\nbackbone.block4_channels=" + std::to_string(cfg.block4_channels) +
         "\nbackbone.align=" + cfg.backbone_align + "\nmam.upsample=" + cfg.mam_upsample +
         "\n";
}

// Rebuilds a model configuration from a checkpoint's architecture block.
inline ModelConfig model_config_from_arch(const std::string& arch) {
  Config cfg;
  std::istringstream in(arch);
  std::string line;
  while (std::getline(in, line)) {
    line = detail::trim(line);
    if (line.empty()) continue;
    apply_override(cfg, line);
  }
  cfg.backbone_weights.clear();  // parameters come from the checkpoint itself
  return model_config(cfg);
}

}  // namespace zsseg
