#pragma once

#include <cmath>
#include <vector>

#include "zsseg/params.hpp"

namespace zsseg {

// Momentum SGD with a polynomial learning-rate decay:
// lr(t) = lr0 * (1 - t/T)^power.
template <class T>
class SgdMomentum {
 public:
  SgdMomentum(ParamStore<T>& store, T lr0, T momentum, std::int64_t total_iterations,
              T poly_power = T(0.9))
      : store_(store), lr0_(lr0), momentum_(momentum), total_(total_iterations), power_(poly_power) {
    if (lr0 <= T(0)) throw config_error("learning rate must be > 0");
    for (const auto& e : store.entries())
      if (e.trainable) {
        targets_.push_back(e.var);
        velocity_.push_back(Tensor<T>::zeros(e.var->value.shape()));
      }
  }

  T lr_at(std::int64_t t) const {
    const double frac = total_ > 0 ? std::min(1.0, double(t) / double(total_)) : 0.0;
    return static_cast<T>(double(lr0_) * std::pow(1.0 - frac, double(power_)));
  }

  void zero_grad() { store_.zero_grads(); }

  // Applies one update using gradients currently accumulated on the
  // trainable parameters. Parameters with no accumulated gradient are
  // left untouched.
  void step(std::int64_t t) {
    const T lr = lr_at(t);
    for (std::size_t i = 0; i < targets_.size(); ++i) {
      auto& p = targets_[i];
      if (p->grad.empty()) continue;
      Tensor<T>& v = velocity_[i];
      for (std::int64_t j = 0; j < v.numel(); ++j) {
        v[j] = momentum_ * v[j] + p->grad[j];
        p->value[j] -= lr * v[j];
      }
    }
    ++steps_done_;
  }

  std::int64_t steps_done() const { return steps_done_; }
  const std::vector<Tensor<T>>& velocity() const { return velocity_; }
  std::vector<Tensor<T>>& velocity() { return velocity_; }
  const std::vector<Var<T>>& targets() const { return targets_; }
  void set_steps_done(std::int64_t n) { steps_done_ = n; }

 private:
  ParamStore<T>& store_;
  std::vector<Var<T>> targets_;
  std::vector<Tensor<T>> velocity_;
  T lr0_, momentum_;
  std::int64_t total_;
  T power_;
  std::int64_t steps_done_ = 0;
};

}  // namespace zsseg
