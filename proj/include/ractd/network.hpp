// Dense feed-forward networks stored as a topology descriptor plus one flat
// 64-bit weight vector. The flat layout (per layer: column-major W, then b)
// is what the optimizer, the checkpoint format and the tape all index into,
// so it is part of the on-disk contract.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ractd/rng.hpp"
#include "ractd/types.hpp"

namespace ractd {

enum class Activation : std::uint8_t { Identity = 0, Mish = 1, Silu = 2, Sigmoid = 3 };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

double activate(Activation f, double x);
double activate_grad(Activation f, double x);
Vec activate(Activation f, const Vec& x);

struct LayerSpec {
  Index in = 0;
  Index out = 0;
  Activation act = Activation::Identity;
};

struct NetworkParams {
  std::vector<LayerSpec> layers;
  std::vector<Index> offsets;  // flat start of each layer's [W | b] block
  Vec flat;

  static NetworkParams make(std::vector<LayerSpec> layers);

  Index n_params() const { return flat.size(); }
  Index in_dim() const { return layers.front().in; }
  Index out_dim() const { return layers.back().out; }

  Eigen::Map<const Mat> weight(int layer) const;
  Eigen::Map<const Vec> bias(int layer) const;

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per layer.
  void init_uniform(Rng& rng);

  // Throws if the flat size disagrees with the topology or a value is
  // non-finite.
  void validate() const;

  bool same_topology(const NetworkParams& other) const;
};

// MLP whose every layer sees the conditioning vector: layer k input is
// [h_{k-1} | cond]. hidden activation applies to all but the last layer.
NetworkParams make_mlp(Index x_dim, Index cond_dim, const std::vector<Index>& hidden,
                       Index out_dim, Activation hidden_act = Activation::Mish);

// Plain forward evaluation. cond may be empty; its width must match what the
// topology was built with. Dimension mismatches throw, naming the layer.
Vec mlp_eval(const NetworkParams& p, const Vec& x, const Vec& cond);

// Fourier feature pairs [sin(pi 2^k u), cos(pi 2^k u)], k = 0..pairs-1.
Vec fourier_features(double u, int pairs);

}  // namespace ractd
