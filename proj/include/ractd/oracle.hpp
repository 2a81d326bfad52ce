// Closed-form Gaussian-mixture ground truth used to validate solvers and
// losses independently of any trained network.
#pragma once

#include <vector>

#include "ractd/rng.hpp"
#include "ractd/types.hpp"

namespace ractd {

// Mixture of diagonal Gaussians. weights sum to 1, vars strictly positive.
struct GaussianMixture {
  std::vector<double> weights;
  std::vector<Vec> means;
  std::vector<Vec> vars;

  Index dim() const;
  void validate() const;
  Vec sample(Rng& rng) const;
  Vec mean() const;
  // Per-dimension second moment minus squared mean.
  Vec variance() const;
};

// E[x0 | x_sigma = x] for x = x0 + sigma eps: responsibilities over
// components of the smoothed mixture, then the conjugate per-component mean
// (sigma^2 mu + v x) / (v + sigma^2).
Vec gmm_posterior_mean(const GaussianMixture& gmm, const Vec& x, double sigma);

// grad_x log p_sigma(x) of the smoothed mixture. Related to the posterior
// mean by posterior = x + sigma^2 * score.
Vec gmm_score(const GaussianMixture& gmm, const Vec& x, double sigma);

// Mean absolute difference of sorted, quantile-matched samples. Equal sizes
// compare directly; unequal sizes are both resampled to the larger size via
// linear quantile interpolation.
double wasserstein_1d(std::vector<double> a, std::vector<double> b);

}  // namespace ractd
