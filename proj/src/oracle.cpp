#include "ractd/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ractd {

Index GaussianMixture::dim() const {
  if (means.empty()) throw std::invalid_argument("GaussianMixture: empty");
  return means.front().size();
}

void GaussianMixture::validate() const {
  if (weights.empty() || weights.size() != means.size() || weights.size() != vars.size())
    throw std::invalid_argument("GaussianMixture: inconsistent component counts");
  const Index d = means.front().size();
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] > 0.0)) throw std::invalid_argument("GaussianMixture: weight <= 0");
    if (means[i].size() != d || vars[i].size() != d)
      throw std::invalid_argument("GaussianMixture: dimension mismatch");
    if (!(vars[i].minCoeff() > 0.0))
      throw std::invalid_argument("GaussianMixture: variance <= 0");
    total += weights[i];
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument("GaussianMixture: weights do not sum to 1");
}

Vec GaussianMixture::sample(Rng& rng) const {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t pick = weights.size() - 1;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) {
      pick = i;
      break;
    }
  }
  return means[pick] + vars[pick].cwiseSqrt().cwiseProduct(rng.normal_vec(dim()));
}

Vec GaussianMixture::mean() const {
  Vec m = Vec::Zero(dim());
  for (std::size_t i = 0; i < weights.size(); ++i) m += weights[i] * means[i];
  return m;
}

Vec GaussianMixture::variance() const {
  const Vec m = mean();
  Vec second = Vec::Zero(dim());
  for (std::size_t i = 0; i < weights.size(); ++i)
    second += weights[i] * (vars[i] + means[i].cwiseProduct(means[i]));
  return second - m.cwiseProduct(m);
}

namespace {

// Log responsibilities of each component of the sigma-smoothed mixture at x.
std::vector<double> log_responsibilities(const GaussianMixture& gmm, const Vec& x,
                                         double sigma) {
  const double s2 = sigma * sigma;
  std::vector<double> logp(gmm.weights.size());
  for (std::size_t i = 0; i < gmm.weights.size(); ++i) {
    double lp = std::log(gmm.weights[i]);
    for (Index d = 0; d < x.size(); ++d) {
      const double var = gmm.vars[i][d] + s2;
      const double diff = x[d] - gmm.means[i][d];
      lp -= 0.5 * (diff * diff / var + std::log(2.0 * kPi * var));
    }
    logp[i] = lp;
  }
  const double mx = *std::max_element(logp.begin(), logp.end());
  double denom = 0.0;
  for (double lp : logp) denom += std::exp(lp - mx);
  const double log_denom = mx + std::log(denom);
  for (double& lp : logp) lp -= log_denom;
  return logp;
}

}  // namespace

Vec gmm_posterior_mean(const GaussianMixture& gmm, const Vec& x, double sigma) {
  gmm.validate();
  if (x.size() != gmm.dim()) throw std::invalid_argument("gmm_posterior_mean: dim mismatch");
  const double s2 = sigma * sigma;
  const auto logr = log_responsibilities(gmm, x, sigma);
  Vec out = Vec::Zero(x.size());
  for (std::size_t i = 0; i < gmm.weights.size(); ++i) {
    const double r = std::exp(logr[i]);
    for (Index d = 0; d < x.size(); ++d) {
      const double v = gmm.vars[i][d];
      out[d] += r * (s2 * gmm.means[i][d] + v * x[d]) / (v + s2);
    }
  }
  return out;
}

Vec gmm_score(const GaussianMixture& gmm, const Vec& x, double sigma) {
  gmm.validate();
  if (x.size() != gmm.dim()) throw std::invalid_argument("gmm_score: dim mismatch");
  const double s2 = sigma * sigma;
  const auto logr = log_responsibilities(gmm, x, sigma);
  Vec out = Vec::Zero(x.size());
  for (std::size_t i = 0; i < gmm.weights.size(); ++i) {
    const double r = std::exp(logr[i]);
    for (Index d = 0; d < x.size(); ++d)
      out[d] += r * (gmm.means[i][d] - x[d]) / (gmm.vars[i][d] + s2);
  }
  return out;
}

namespace {

// Linear-interpolated quantile of a sorted sample at p in [0, 1].
double quantile_sorted(const std::vector<double>& s, double p) {
  const double h = p * static_cast<double>(s.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= s.size()) return s.back();
  const double f = h - static_cast<double>(lo);
  return s[lo] * (1.0 - f) + s[lo + 1] * f;
}

}  // namespace

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein_1d: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
    return total / static_cast<double>(a.size());
  }
  const std::size_t m = std::max(a.size(), b.size());
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(m);
    total += std::abs(quantile_sorted(a, p) - quantile_sorted(b, p));
  }
  return total / static_cast<double>(m);
}

}  // namespace ractd
