#ifndef NSG_TRAIN_LOSSES_HPP
#define NSG_TRAIN_LOSSES_HPP

#include <cmath>
#include <string>

#include "nsg/autodiff/ops.hpp"

namespace nsg {

struct LossWeights {
  double id = 10.0;
  double pix = 1.0;
  double cyc = 1.0;
  double self = 10.0;
  double age_reg = 800.0;
  double age_est = 10.0;
  double constraint = 1.0;
  double delta = 0.5;
  double age_est_cap = 1.0;  // ceiling on the negated squared term

  void validate() const {
    for (double v : {id, pix, cyc, self, age_reg, age_est, constraint})
      if (v < 0) throw ConfigError("loss weights must be non-negative");
    if (delta < 0.0 || delta > 1.0) throw ConfigError("delta must lie in [0, 1]");
    if (age_est_cap <= 0.0) throw ConfigError("age_est_cap must be positive");
  }
};

struct LossReport {
  double adv = 0.0;
  double age_reg = 0.0;
  double id = 0.0;
  double pix = 0.0;
  double cyc = 0.0;
  double self = 0.0;
  double age_est = 0.0;
  double constraint = 0.0;
  double total = 0.0;
};

/// Weighted sum over all components; adv carries weight 1.
inline double weighted_total(const LossReport& r, const LossWeights& w) {
  return r.adv + w.id * r.id + w.pix * r.pix + w.cyc * r.cyc + w.self * r.self +
         w.age_reg * r.age_reg + w.age_est * r.age_est + w.constraint * r.constraint;
}

inline LossReport finalize_report(LossReport r, const LossWeights& w) {
  r.total = weighted_total(r, w);
  return r;
}

/// Critic side of the least-squares objective for one discriminator:
/// mean((D(real) - 1)^2) + mean(D(fake)^2).
template <typename S>
Var<S> adv_d_term(Var<S> d_real, Var<S> d_fake) {
  return mean_all(square(add_const(d_real, S(-1)))) + mean_all(square(d_fake));
}

/// Generator side for one discriminator: mean((D(fake) - 1)^2).
template <typename S>
Var<S> adv_g_term(Var<S> d_fake) {
  return mean_all(square(add_const(d_fake, S(-1))));
}

/// Squared error of a scalar age estimate against its target.
template <typename S>
Var<S> age_sq_term(Var<S> estimate, double target) {
  return sum_all(square(add_const(estimate, static_cast<S>(-target))));
}

/// Squared distance between two identity embeddings, summed over dimensions.
template <typename S>
Var<S> id_term(Var<S> embed_a, Var<S> embed_b) {
  return sum_all(square(embed_a - embed_b));
}

/// Mean squared image distance.
template <typename S>
Var<S> pixel_term(Var<S> fake, Var<S> src) {
  return mean_sq_diff(fake, src);
}

/// Mean absolute image distance.
template <typename S>
Var<S> cycle_term(Var<S> reconstruction, Var<S> original) {
  return mean_abs_diff(reconstruction, original);
}

/// Mean squared self-reconstruction distance.
template <typename S>
Var<S> self_term(Var<S> reconstruction, Var<S> original) {
  return mean_sq_diff(reconstruction, original);
}

/// Opposing age terms on the disentangled feature groups: the age-related
/// group must predict the target, the age-unrelated group is pushed away
/// from it, with the negated term capped so it cannot diverge.
template <typename S>
Var<S> age_est_term(Var<S> e_re, Var<S> e_un, double target, double delta, double cap) {
  auto pull = age_sq_term(e_re, target);
  auto push = clamp_max(age_sq_term(e_un, target), static_cast<S>(cap));
  return pull + scale(push, static_cast<S>(-delta));
}

/// Mean absolute distance between the latent map and the age-related feature
/// group; the feature group is the target and receives no gradient.
template <typename S>
Var<S> constraint_term(Var<S> f_re, Var<S> m) {
  return mean_abs_diff(detach(f_re), m);
}

}  // namespace nsg

#endif
