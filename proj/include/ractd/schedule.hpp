// Noise schedule and denoiser preconditioning, sigma(t) = t convention.
#pragma once

#include <cmath>

#include "ractd/rng.hpp"
#include "ractd/types.hpp"

namespace ractd {

// Descending Karras grid sigma_0 = sigma_max > ... > sigma_{n-1} = sigma_min,
// with a terminal 0 appended (sigmas has n_bins + 1 entries). grid_sigma()
// exposes the ascending view 0, sigma_min, ..., sigma_max used for timestep
// triples and multi-step sampling.
struct NoiseSchedule {
  double sigma_min = 0.002;
  double sigma_max = 80.0;
  double rho = 7.0;
  int n_bins = 80;
  Vec sigmas;

  static NoiseSchedule karras(int n_bins, double sigma_min = 0.002, double sigma_max = 80.0,
                              double rho = 7.0);

  // Number of ascending grid points including the terminal 0.
  int grid_size() const { return n_bins + 1; }
  // idx 0 is the terminal 0, idx n_bins is sigma_max.
  double grid_sigma(int idx) const;

  bool operator==(const NoiseSchedule& o) const {
    return sigma_min == o.sigma_min && sigma_max == o.sigma_max && rho == o.rho &&
           n_bins == o.n_bins;
  }
};

struct Preconditioner {
  double sigma_data = 0.5;

  double c_skip(double sigma) const {
    const double sd2 = sigma_data * sigma_data;
    return sd2 / (sigma * sigma + sd2);
  }
  double c_out(double sigma) const {
    return sigma * sigma_data / std::sqrt(sigma * sigma + sigma_data * sigma_data);
  }
  double c_in(double sigma) const {
    return 1.0 / std::sqrt(sigma * sigma + sigma_data * sigma_data);
  }
  double c_noise(double sigma) const { return 0.25 * std::log(sigma); }
};

// D(x, sigma) = c_skip x + c_out F(c_in x, c_noise, cond); exactly x at
// sigma = 0 (the raw net is not invoked there). F is any callable
// (Vec scaled_x, double sigma, Vec cond) -> Vec.
template <class RawNet>
Vec edm_denoise(const Preconditioner& pre, RawNet&& raw, const Vec& x, double sigma,
                const Vec& cond) {
  if (sigma == 0.0) return x;
  return pre.c_skip(sigma) * x + pre.c_out(sigma) * raw(pre.c_in(sigma) * x, sigma, cond);
}

// sqrt(||a-b||^2 + c^2) - c. Zero iff a == b; approaches ||a-b|| - c for
// distances much larger than c.
double pseudo_huber(const Vec& a, const Vec& b, double c);

// Default pseudo-Huber constant for a given data dimension.
double default_huber_c(Index dim);

// exp(N(p_mean, p_std^2)) clamped into [sigma_min, sigma_max].
double sample_training_sigma(Rng& rng, double p_mean = -1.2, double p_std = 1.2,
                             double sigma_min = 0.002, double sigma_max = 80.0);

// x0 + sigma * eps with eps ~ N(0, I). sigma = 0 returns x0 bit-exactly.
Vec perturb(const Vec& x0, double sigma, Rng& rng);

}  // namespace ractd
