#include "ractd/network.hpp"

#include <cmath>
#include <stdexcept>

namespace ractd {

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Mish: return "mish";
    case Activation::Silu: return "silu";
    case Activation::Sigmoid: return "sigmoid";
  }
  throw std::invalid_argument("activation_name: unknown activation");
}

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "mish") return Activation::Mish;
  if (name == "silu") return Activation::Silu;
  if (name == "sigmoid") return Activation::Sigmoid;
  throw std::invalid_argument("activation_from_name: unknown activation '" + name + "'");
}

namespace {

double sigmoid(double x) {
  // Split on sign to avoid exp overflow.
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace

double activate(Activation f, double x) {
  switch (f) {
    case Activation::Identity: return x;
    case Activation::Mish: return x * std::tanh(softplus(x));
    case Activation::Silu: return x * sigmoid(x);
    case Activation::Sigmoid: return sigmoid(x);
  }
  throw std::invalid_argument("activate: unknown activation");
}

double activate_grad(Activation f, double x) {
  switch (f) {
    case Activation::Identity: return 1.0;
    case Activation::Mish: {
      const double sp = softplus(x);
      const double t = std::tanh(sp);
      return t + x * (1.0 - t * t) * sigmoid(x);
    }
    case Activation::Silu: {
      const double s = sigmoid(x);
      return s * (1.0 + x * (1.0 - s));
    }
    case Activation::Sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
  }
  throw std::invalid_argument("activate_grad: unknown activation");
}

Vec activate(Activation f, const Vec& x) {
  Vec y(x.size());
  for (Index i = 0; i < x.size(); ++i) y[i] = activate(f, x[i]);
  return y;
}

NetworkParams NetworkParams::make(std::vector<LayerSpec> layers) {
  if (layers.empty()) throw std::invalid_argument("NetworkParams: no layers");
  NetworkParams p;
  p.layers = std::move(layers);
  p.offsets.resize(p.layers.size());
  Index total = 0;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& spec = p.layers[l];
    if (spec.in <= 0 || spec.out <= 0)
      throw std::invalid_argument("NetworkParams: layer " + std::to_string(l) +
                                  " has non-positive dims");
    p.offsets[l] = total;
    total += spec.in * spec.out + spec.out;
  }
  p.flat = Vec::Zero(total);
  return p;
}

Eigen::Map<const Mat> NetworkParams::weight(int layer) const {
  const auto& spec = layers[layer];
  return Eigen::Map<const Mat>(flat.data() + offsets[layer], spec.out, spec.in);
}

Eigen::Map<const Vec> NetworkParams::bias(int layer) const {
  const auto& spec = layers[layer];
  return Eigen::Map<const Vec>(flat.data() + offsets[layer] + spec.in * spec.out, spec.out);
}

void NetworkParams::init_uniform(Rng& rng) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& spec = layers[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.in));
    const Index n = spec.in * spec.out + spec.out;
    for (Index i = 0; i < n; ++i) flat[offsets[l] + i] = rng.uniform(-bound, bound);
  }
}

void NetworkParams::validate() const {
  Index total = 0;
  for (const auto& spec : layers) total += spec.in * spec.out + spec.out;
  if (total != flat.size())
    throw std::runtime_error("NetworkParams: flat size " + std::to_string(flat.size()) +
                             " does not match topology size " + std::to_string(total));
  if (!flat.allFinite()) throw std::runtime_error("NetworkParams: non-finite weight");
}

bool NetworkParams::same_topology(const NetworkParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].in != other.layers[l].in || layers[l].out != other.layers[l].out ||
        layers[l].act != other.layers[l].act)
      return false;
  }
  return true;
}

NetworkParams make_mlp(Index x_dim, Index cond_dim, const std::vector<Index>& hidden,
                       Index out_dim, Activation hidden_act) {
  std::vector<LayerSpec> layers;
  Index prev = x_dim;
  for (Index h : hidden) {
    layers.push_back({prev + cond_dim, h, hidden_act});
    prev = h;
  }
  layers.push_back({prev + cond_dim, out_dim, Activation::Identity});
  return NetworkParams::make(std::move(layers));
}

Vec mlp_eval(const NetworkParams& p, const Vec& x, const Vec& cond) {
  Vec h = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& spec = p.layers[l];
    if (h.size() + cond.size() != spec.in)
      throw std::invalid_argument("mlp_eval: layer " + std::to_string(l) + " expects input " +
                                  std::to_string(spec.in) + ", got " +
                                  std::to_string(h.size() + cond.size()));
    Vec in(spec.in);
    in.head(h.size()) = h;
    if (cond.size() > 0) in.tail(cond.size()) = cond;
    Vec z = p.weight(l) * in + p.bias(l);
    h = (spec.act == Activation::Identity) ? std::move(z) : activate(spec.act, z);
  }
  return h;
}

Vec fourier_features(double u, int pairs) {
  Vec f(2 * pairs);
  double freq = kPi;
  for (int k = 0; k < pairs; ++k) {
    f[2 * k] = std::sin(freq * u);
    f[2 * k + 1] = std::cos(freq * u);
    freq *= 2.0;
  }
  return f;
}

}  // namespace ractd
