#ifndef NSG_NN_ADAM_HPP
#define NSG_NN_ADAM_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nsg/autodiff/tape.hpp"
#include "nsg/nn/module.hpp"

namespace nsg {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // global gradient-norm ceiling; <= 0 disables
};

/// Adam over master tensors, reading gradients from the tape bindings of the
/// current phase. Parameters whose gradient was never touched this phase are
/// skipped, state included. Moment state is keyed by parameter name so it
/// survives re-placement and checkpointing.
template <typename S>
class Adam {
 public:
  struct Slot {
    Tensor<S> m;
    Tensor<S> v;
  };

  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(const std::vector<BoundParam<S>>& params, Tape<S>& tape) {
    double sq_norm = 0.0;
    for (const auto& p : params) {
      if (!tape.grad_set(p.id)) continue;
      const auto& g = tape.grad(p.id);
      if (!g.all_finite()) throw NumericError("non-finite gradient in " + p.name);
      sq_norm += static_cast<double>(g.data.template cast<double>().square().sum());
    }
    double scale = 1.0;
    if (cfg_.clip_norm > 0.0) {
      const double norm = std::sqrt(sq_norm);
      if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
    }
    ++t_;
    const S c1 = static_cast<S>(1.0 / (1.0 - std::pow(cfg_.beta1, static_cast<double>(t_))));
    const S c2 = static_cast<S>(1.0 / (1.0 - std::pow(cfg_.beta2, static_cast<double>(t_))));
    const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
    const S lr = static_cast<S>(cfg_.lr), eps = static_cast<S>(cfg_.eps);
    const S gs = static_cast<S>(scale);
    for (const auto& p : params) {
      if (!tape.grad_set(p.id)) continue;
      Slot& slot = slots_[p.name];
      if (slot.m.numel() == 0) {
        slot.m = Tensor<S>::zeros(p.master->shape);
        slot.v = Tensor<S>::zeros(p.master->shape);
      }
      const auto g = (tape.grad(p.id).data * gs).eval();
      slot.m.data = b1 * slot.m.data + (S(1) - b1) * g;
      slot.v.data = b2 * slot.v.data + (S(1) - b2) * g.square();
      p.master->data -= lr * (slot.m.data * c1) / ((slot.v.data * c2).sqrt() + eps);
    }
  }

  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }
  std::map<std::string, Slot>& slots() { return slots_; }
  const std::map<std::string, Slot>& slots() const { return slots_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::map<std::string, Slot> slots_;
};

}  // namespace nsg

#endif
