// Adam, EMA of parameter vectors, and a finite-difference gradient checker.
#pragma once

#include <cstdint>
#include <functional>

#include "ractd/network.hpp"
#include "ractd/types.hpp"

namespace ractd {

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  Vec m;
  Vec v;

  static AdamState make(Index n_params, double lr);
};

// One Adam update with bias correction. params and grad must match the
// state's size.
void adam_step(AdamState& state, Vec& params, const Vec& grad);

// target <- decay * target + (1 - decay) * source. Topologies must match.
void ema_update(NetworkParams& target, const NetworkParams& source, double decay);

struct LossEval {
  double value = 0.0;
  Vec grad;
};

// Central-difference check of f's reported gradient at `params`:
// max_i |g_ad[i] - g_fd[i]| / (|g_fd[i]| + 1e-12).
// Throws if any probed loss value is non-finite.
double finite_diff_check(const std::function<LossEval(const Vec&)>& f, const Vec& params,
                         double eps = 1e-6);

}  // namespace ractd
