// Reverse-mode autodiff over vector-valued nodes.
//
// A Tape records an eager computation graph whose values are Eigen vectors.
// Primitives are deliberately few: affine layer application, elementwise
// activation, add, scale, concatenate, slice, reduce-mean, squared and
// pseudo-Huber distances, and stop-gradient. Network weights enter through
// registered parameter sources; backward() accumulates a flat gradient per
// trainable source.
//
// Registered NetworkParams must outlive the tape and must not be mutated
// between node creation and backward(): the backward pass re-reads weights.
#pragma once

#include <cstdint>
#include <vector>

#include "ractd/network.hpp"
#include "ractd/types.hpp"

namespace ractd {

class Tape {
 public:
  int register_params(const NetworkParams& p, bool trainable);

  int constant(Vec v);
  // W_layer * x + b_layer for the given source. Throws on a dimension
  // mismatch, naming the layer.
  int affine(int src, int layer, int x);
  int activation(Activation f, int x);
  int add(int a, int b);
  int scale(double c, int a);
  int concat(const std::vector<int>& xs);
  int slice(int a, Index off, Index len);
  // Mean of the entries of a, as a length-1 node.
  int reduce_mean(int a);
  // ||a - b||^2 as a length-1 node.
  int squared_dist(int a, int b);
  // sqrt(||a - b||^2 + c^2) - c as a length-1 node. Requires c > 0.
  int pseudo_huber(int a, int b, double c);
  // Identity value; adjoints do not flow past it.
  int stop_grad(int a);

  const Vec& value(int id) const { return values_.at(id); }
  double scalar(int id) const;

  // Seeds the adjoint of a scalar root with 1 and propagates in reverse.
  // Resets all adjoints and parameter gradients first, so repeated calls
  // from different roots give independent results.
  void backward(int root);

  const Vec& adjoint(int id) const;
  // Flat gradient for a trainable source; throws for frozen sources.
  const Vec& param_grad(int src) const;

  int n_nodes() const { return static_cast<int>(nodes_.size()); }

 private:
  enum class Op : std::uint8_t {
    Const,
    Affine,
    Act,
    Add,
    Scale,
    Concat,
    Slice,
    ReduceMean,
    SquaredDist,
    PseudoHuber,
    StopGrad,
  };

  struct Node {
    Op op;
    Activation act = Activation::Identity;
    int a = -1;
    int b = -1;
    int src = -1;
    int layer = -1;
    double c = 0.0;
    Index off = 0;
    Index len = 0;
    std::vector<int> many;  // Concat inputs
  };

  struct ParamSource {
    const NetworkParams* params = nullptr;
    bool trainable = false;
    Vec grad;  // allocated for trainable sources
  };

  int push(Node n, Vec value);
  void check_id(int id) const;

  std::vector<Node> nodes_;
  std::vector<Vec> values_;
  std::vector<Vec> adjoints_;
  std::vector<ParamSource> sources_;
  bool ran_backward_ = false;
};

// Records the conditioned MLP forward pass (layer input = [h | cond]) on the
// tape. cond < 0 means no conditioning node. Bit-identical to mlp_eval.
int mlp_node(Tape& tape, int src, const NetworkParams& p, int x, int cond);

}  // namespace ractd
