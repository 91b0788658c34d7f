#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "zsseg/autodiff.hpp"

namespace zsseg {

struct ParamInfo {
  std::string name;
  std::vector<std::int64_t> shape;
  bool trainable = false;
};

// Ordered, named parameter registry. Creation order is fixed by model
// construction, which makes seeded initialization reproducible and the
// manifest stable for checkpointing and the frozen-backbone audit.
template <class T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Var<T> var;
    bool trainable;
  };

  Var<T> add(const std::string& name, Tensor<T> init, bool trainable) {
    if (index_.count(name)) throw contract_error("duplicate parameter name: " + name);
    auto v = make_leaf<T>(std::move(init), trainable, name);
    index_[name] = entries_.size();
    entries_.push_back({name, v, trainable});
    return v;
  }

  // He (fan-in scaled) normal initialization for conv weights.
  Var<T> add_conv_weight(const std::string& name, std::int64_t cout, std::int64_t cin, int kh, int kw,
                         Rng& rng, bool trainable, T gain = T(1)) {
    const double stddev = std::sqrt(2.0 / double(cin * kh * kw));
    Tensor<T> w = Tensor<T>::randn({cout, cin, kh, kw}, rng, T(0), static_cast<T>(stddev));
    if (gain != T(1))
      for (std::int64_t i = 0; i < w.numel(); ++i) w[i] *= gain;
    return add(name, std::move(w), trainable);
  }

  Var<T> add_bias(const std::string& name, std::int64_t cout, bool trainable) {
    return add(name, Tensor<T>::zeros({cout}), trainable);
  }

  const std::vector<Entry>& entries() const { return entries_; }

  Var<T> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw contract_error("unknown parameter: " + name);
    return entries_[it->second].var;
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::vector<ParamInfo> manifest() const {
    std::vector<ParamInfo> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back({e.name, e.var->value.shape(), e.trainable});
    return out;
  }

  std::int64_t total_params() const {
    std::int64_t n = 0;
    for (const auto& e : entries_) n += e.var->value.numel();
    return n;
  }
  std::int64_t trainable_params() const {
    std::int64_t n = 0;
    for (const auto& e : entries_)
      if (e.trainable) n += e.var->value.numel();
    return n;
  }

  // Deep copy of parameter values, for frozen-backbone assertions.
  std::map<std::string, Tensor<T>> snapshot() const {
    std::map<std::string, Tensor<T>> out;
    for (const auto& e : entries_) out.emplace(e.name, e.var->value);
    return out;
  }

  void zero_grads() {
    for (auto& e : entries_)
      if (!e.var->grad.empty()) e.var->grad.fill(T(0));
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

// True iff both snapshots enumerate the same parameters with element-wise
// identical values. Exact comparison: a frozen parameter must not move at
// all.
template <class T>
bool assert_frozen(const std::map<std::string, Tensor<T>>& before,
                   const std::map<std::string, Tensor<T>>& after) {
  if (before.size() != after.size())
    throw contract_error("assert_frozen: parameter sets differ in size");
  for (const auto& [name, tb] : before) {
    auto it = after.find(name);
    if (it == after.end()) throw contract_error("assert_frozen: missing parameter " + name);
    const Tensor<T>& ta = it->second;
    if (!tb.same_shape(ta)) throw contract_error("assert_frozen: shape changed for " + name);
    for (std::int64_t i = 0; i < tb.numel(); ++i)
      if (tb[i] != ta[i]) return false;
  }
  return true;
}

}  // namespace zsseg
