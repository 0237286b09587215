#ifndef NSG_NN_MODULE_HPP
#define NSG_NN_MODULE_HPP

#include <string>
#include <utility>
#include <vector>

#include "nsg/autodiff/ops.hpp"
#include "nsg/autodiff/tape.hpp"
#include "nsg/core/tensor.hpp"

namespace nsg {

/// Weight containers below own their tensors and expose visit(prefix, f)
/// enumerating (name, tensor) pairs in a fixed order. Forward passes never
/// run on the containers directly: a Binder places every parameter onto a
/// tape once per phase, producing a Placed* mirror that holds Vars and the
/// actual operator() logic. Re-placing after an optimizer step picks up the
/// updated master tensors.

template <typename S>
struct Conv2d {
  Tensor<S> w;  // [Cout, Cin, k, k]
  Tensor<S> b;  // [Cout]
  int stride = 1;
  int pad = 0;

  static Conv2d make(int cin, int cout, int k, int stride, int pad) {
    Conv2d c;
    c.w = Tensor<S>::zeros({cout, cin, k, k});
    c.b = Tensor<S>::zeros({cout});
    c.stride = stride;
    c.pad = pad;
    return c;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".w", w);
    f(prefix + ".b", b);
  }
};

template <typename S>
struct Linear {
  Tensor<S> w;  // [out, in]
  Tensor<S> b;  // [out]

  static Linear make(int in, int out) {
    Linear l;
    l.w = Tensor<S>::zeros({out, in});
    l.b = Tensor<S>::zeros({out});
    return l;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".w", w);
    f(prefix + ".b", b);
  }
};

/// One learned scalar per channel; used to scale broadcast noise maps.
template <typename S>
struct ChannelScale {
  Tensor<S> s;  // [C]

  static ChannelScale make(int channels) {
    ChannelScale c;
    c.s = Tensor<S>::zeros({channels});
    return c;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".s", s);
  }
};

template <typename S>
struct BoundParam {
  std::string name;
  Tensor<S>* master = nullptr;
  int id = -1;
};

/// Places master tensors onto a tape as leaves and records the binding so
/// the optimizer can pair each tape gradient with the tensor it updates.
template <typename S>
class Binder {
 public:
  Binder(Tape<S>& tape, bool needs_grad) : tape_(&tape), needs_grad_(needs_grad) {}

  Var<S> bind(const std::string& name, Tensor<S>& master) {
    Var<S> v = tape_->leaf(master, needs_grad_);
    bound_.push_back(BoundParam<S>{name, &master, v.id});
    return v;
  }

  Tape<S>& tape() { return *tape_; }
  bool needs_grad() const { return needs_grad_; }
  const std::vector<BoundParam<S>>& params() const { return bound_; }

 private:
  Tape<S>* tape_;
  bool needs_grad_;
  std::vector<BoundParam<S>> bound_;
};

template <typename S>
struct PlacedConv {
  Var<S> w;
  Var<S> b;
  int stride = 1;
  int pad = 0;

  Var<S> operator()(Var<S> x) const { return conv2d(x, w, b, stride, pad); }
};

template <typename S>
PlacedConv<S> place(Binder<S>& binder, const std::string& prefix, Conv2d<S>& m) {
  return PlacedConv<S>{binder.bind(prefix + ".w", m.w), binder.bind(prefix + ".b", m.b), m.stride,
                       m.pad};
}

template <typename S>
struct PlacedLinear {
  Var<S> w;
  Var<S> b;

  Var<S> operator()(Var<S> x) const { return linear(x, w, b); }
};

template <typename S>
PlacedLinear<S> place(Binder<S>& binder, const std::string& prefix, Linear<S>& m) {
  return PlacedLinear<S>{binder.bind(prefix + ".w", m.w), binder.bind(prefix + ".b", m.b)};
}

template <typename S>
struct PlacedChannelScale {
  Var<S> s;
};

template <typename S>
PlacedChannelScale<S> place(Binder<S>& binder, const std::string& prefix, ChannelScale<S>& m) {
  return PlacedChannelScale<S>{binder.bind(prefix + ".s", m.s)};
}

}  // namespace nsg

#endif
