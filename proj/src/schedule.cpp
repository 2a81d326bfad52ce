#include "ractd/schedule.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace ractd {

NoiseSchedule NoiseSchedule::karras(int n_bins, double sigma_min, double sigma_max, double rho) {
  if (n_bins < 2) throw std::invalid_argument("karras: need at least 2 bins");
  if (!(sigma_min > 0.0) || !(sigma_max > sigma_min))
    throw std::invalid_argument("karras: need 0 < sigma_min < sigma_max");
  if (!(rho > 0.0)) throw std::invalid_argument("karras: rho must be positive");

  NoiseSchedule s;
  s.sigma_min = sigma_min;
  s.sigma_max = sigma_max;
  s.rho = rho;
  s.n_bins = n_bins;
  s.sigmas = Vec::Zero(n_bins + 1);
  const double inv_rho = 1.0 / rho;
  const double hi = std::pow(sigma_max, inv_rho);
  const double lo = std::pow(sigma_min, inv_rho);
  for (int i = 0; i < n_bins; ++i) {
    const double frac = static_cast<double>(i) / static_cast<double>(n_bins - 1);
    s.sigmas[i] = std::pow(hi + frac * (lo - hi), rho);
  }
  // Pin the endpoints so they are exact regardless of pow round-off.
  s.sigmas[0] = sigma_max;
  s.sigmas[n_bins - 1] = sigma_min;
  s.sigmas[n_bins] = 0.0;

  for (int i = 0; i + 1 < n_bins; ++i)
    if (!(s.sigmas[i] > s.sigmas[i + 1]))
      throw std::runtime_error("karras: schedule not strictly decreasing at " +
                               std::to_string(i));
  return s;
}

double NoiseSchedule::grid_sigma(int idx) const {
  if (idx < 0 || idx > n_bins)
    throw std::invalid_argument("grid_sigma: index " + std::to_string(idx) + " out of range");
  return sigmas[n_bins - idx];
}

double pseudo_huber(const Vec& a, const Vec& b, double c) {
  if (a.size() != b.size()) throw std::invalid_argument("pseudo_huber: size mismatch");
  if (!(c > 0.0)) throw std::invalid_argument("pseudo_huber: c must be positive");
  return std::sqrt((a - b).squaredNorm() + c * c) - c;
}

double default_huber_c(Index dim) {
  return 0.00054 * std::sqrt(static_cast<double>(dim));
}

double sample_training_sigma(Rng& rng, double p_mean, double p_std, double sigma_min,
                             double sigma_max) {
  if (!(p_std >= 0.0)) throw std::invalid_argument("sample_training_sigma: p_std < 0");
  const double sigma = std::exp(p_mean + p_std * rng.normal());
  return std::clamp(sigma, sigma_min, sigma_max);
}

Vec perturb(const Vec& x0, double sigma, Rng& rng) {
  if (sigma == 0.0) return x0;
  return x0 + sigma * rng.normal_vec(x0.size());
}

}  // namespace ractd
