#ifndef NSG_TESTS_GRADCHECK_HPP
#define NSG_TESTS_GRADCHECK_HPP

#include <doctest.h>

#include <algorithm>
#include <functional>
#include <vector>

#include "nsg/autodiff/ops.hpp"
#include "nsg/autodiff/tape.hpp"
#include "nsg/core/rng.hpp"
#include "nsg/core/tensor.hpp"

namespace nsg::testing {

/// Checks the tape gradient of a scalar-valued graph against central finite
/// differences, in double precision. `build` receives the tape and the leaf
/// list (same order as `inputs`) and returns the scalar loss. Every element
/// of every input is probed unless the input is large, in which case a
/// deterministic random subset of `max_probes` elements is used.
inline void check_gradients(
    const std::vector<Tensor<double>>& inputs,
    const std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>& build,
    double tol = 1e-6, double h = 1e-5, int max_probes = 24, uint64_t probe_seed = 99) {
  auto eval = [&](const std::vector<Tensor<double>>& xs) {
    Tape<double> t;
    std::vector<Var<double>> leaves;
    leaves.reserve(xs.size());
    for (const auto& x : xs) leaves.push_back(t.leaf(x, true));
    return build(t, leaves).item();
  };

  Tape<double> tape;
  std::vector<Var<double>> leaves;
  for (const auto& x : inputs) leaves.push_back(tape.leaf(x, true));
  Var<double> loss = build(tape, leaves);
  REQUIRE(loss.val().numel() == 1);
  tape.backward(loss);

  Rng rng(probe_seed);
  for (size_t k = 0; k < inputs.size(); ++k) {
    const auto& analytic = tape.grad(leaves[k].id);
    const int64_t n = inputs[k].numel();
    std::vector<int64_t> idx;
    if (n <= max_probes) {
      for (int64_t i = 0; i < n; ++i) idx.push_back(i);
    } else {
      for (int p = 0; p < max_probes; ++p) idx.push_back(static_cast<int64_t>(rng.below(n)));
    }
    for (int64_t i : idx) {
      auto xs = inputs;
      xs[k].data[i] += h;
      const double fp = eval(xs);
      xs[k].data[i] -= 2 * h;
      const double fm = eval(xs);
      const double fd = (fp - fm) / (2 * h);
      const double got = analytic.data[i];
      const double denom = std::max({1.0, std::abs(fd), std::abs(got)});
      INFO("input ", k, " element ", i, ": analytic=", got, " fd=", fd);
      CHECK(std::abs(got - fd) / denom < tol);
    }
  }
}

inline Tensor<double> random_tensor(std::vector<int> shape, Rng& rng, double stddev = 1.0) {
  Tensor<double> t(std::move(shape));
  rng.fill_normal(t, stddev);
  return t;
}

}  // namespace nsg::testing

#endif
