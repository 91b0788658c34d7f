#pragma once

// Class-wise fold partitioning for the episodic zero-shot protocol.
// Classes are numbered 1..n (0 is background); fold f holds the f-th
// contiguous block of ids out for testing and trains on the rest.

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zsseg/core.hpp"
#include "zsseg/serialize.hpp"

namespace zsseg {

struct FoldSpec {
  int fold = 0;
  std::vector<int> test_classes;
  std::vector<int> train_classes;
};

inline void validate_fold_spec(const FoldSpec& spec, int n_classes) {
  if (spec.test_classes.empty())
    throw config_error("fold " + std::to_string(spec.fold) + " has no test classes");
  if (spec.train_classes.empty())
    throw config_error("fold " + std::to_string(spec.fold) + " has no train classes");
  std::set<int> seen;
  for (const auto& group : {spec.test_classes, spec.train_classes})
    for (int c : group) {
      if (c < 1 || c > n_classes)
        throw config_error("fold class id " + std::to_string(c) + " outside 1.." +
                           std::to_string(n_classes));
      if (!seen.insert(c).second)
        throw config_error("fold class id " + std::to_string(c) +
                           " appears in both splits or twice");
    }
  if (int(seen.size()) != n_classes)
    throw config_error("fold splits must cover all " + std::to_string(n_classes) +
                       " classes, covered " + std::to_string(seen.size()));
}

inline FoldSpec build_fold_spec(int fold, int n_classes, int classes_per_fold) {
  if (n_classes < 2) throw config_error("need at least 2 classes for a fold split");
  if (classes_per_fold < 1 || classes_per_fold >= n_classes)
    throw config_error("fold.classes_per_fold must be in [1, n_classes), got " +
                       std::to_string(classes_per_fold));
  if (n_classes % classes_per_fold != 0)
    throw config_error("fold.classes_per_fold " + std::to_string(classes_per_fold) +
                       " must divide n_classes " + std::to_string(n_classes));
  const int n_folds = n_classes / classes_per_fold;
  if (fold < 0 || fold >= n_folds)
    throw config_error("fold.index " + std::to_string(fold) + " outside 0.." +
                       std::to_string(n_folds - 1));
  FoldSpec spec;
  spec.fold = fold;
  for (int c = 1; c <= n_classes; ++c) {
    if (c > fold * classes_per_fold && c <= (fold + 1) * classes_per_fold)
      spec.test_classes.push_back(c);
    else
      spec.train_classes.push_back(c);
  }
  validate_fold_spec(spec, n_classes);
  return spec;
}

// Override file: {"fold": int, "test_classes": [int...]}. Remaining
// classes become the train split.
inline FoldSpec load_fold_override(const std::string& path, int n_classes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw config_error("fold override " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object() || !j.contains("fold") || !j.contains("test_classes"))
    throw config_error("fold override " + path +
                       " must be an object with \"fold\" and \"test_classes\"");
  if (!j["fold"].is_number_integer())
    throw config_error("fold override: \"fold\" must be an integer");
  if (!j["test_classes"].is_array() || j["test_classes"].empty())
    throw config_error("fold override: \"test_classes\" must be a non-empty array");
  FoldSpec spec;
  spec.fold = j["fold"].get<int>();
  std::set<int> test;
  for (const auto& v : j["test_classes"]) {
    if (!v.is_number_integer())
      throw config_error("fold override: test class ids must be integers");
    const int c = v.get<int>();
    if (c < 1 || c > n_classes)
      throw config_error("fold override: class id " + std::to_string(c) + " outside 1.." +
                         std::to_string(n_classes));
    if (!test.insert(c).second)
      throw config_error("fold override: duplicate class id " + std::to_string(c));
  }
  spec.test_classes.assign(test.begin(), test.end());
  for (int c = 1; c <= n_classes; ++c)
    if (!test.count(c)) spec.train_classes.push_back(c);
  validate_fold_spec(spec, n_classes);
  return spec;
}

}  // namespace zsseg
