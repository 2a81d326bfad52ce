#include "ractd/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ractd {

int Tape::register_params(const NetworkParams& p, bool trainable) {
  ParamSource s;
  s.params = &p;
  s.trainable = trainable;
  sources_.push_back(std::move(s));
  return static_cast<int>(sources_.size() - 1);
}

int Tape::push(Node n, Vec value) {
  nodes_.push_back(std::move(n));
  values_.push_back(std::move(value));
  return static_cast<int>(nodes_.size() - 1);
}

void Tape::check_id(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("Tape: bad node id " + std::to_string(id));
}

int Tape::constant(Vec v) {
  Node n;
  n.op = Op::Const;
  return push(std::move(n), std::move(v));
}

int Tape::affine(int src, int layer, int x) {
  check_id(x);
  if (src < 0 || src >= static_cast<int>(sources_.size()))
    throw std::invalid_argument("Tape::affine: bad source");
  const NetworkParams& p = *sources_[src].params;
  if (layer < 0 || layer >= static_cast<int>(p.layers.size()))
    throw std::invalid_argument("Tape::affine: bad layer " + std::to_string(layer));
  const auto& spec = p.layers[layer];
  const Vec& in = values_[x];
  if (in.size() != spec.in)
    throw std::invalid_argument("Tape::affine: layer " + std::to_string(layer) +
                                " expects input " + std::to_string(spec.in) + ", got " +
                                std::to_string(in.size()));
  Node n;
  n.op = Op::Affine;
  n.a = x;
  n.src = src;
  n.layer = layer;
  return push(std::move(n), p.weight(layer) * in + p.bias(layer));
}

int Tape::activation(Activation f, int x) {
  check_id(x);
  Node n;
  n.op = Op::Act;
  n.act = f;
  n.a = x;
  return push(std::move(n), activate(f, values_[x]));
}

int Tape::add(int a, int b) {
  check_id(a);
  check_id(b);
  if (values_[a].size() != values_[b].size())
    throw std::invalid_argument("Tape::add: size mismatch");
  Node n;
  n.op = Op::Add;
  n.a = a;
  n.b = b;
  return push(std::move(n), values_[a] + values_[b]);
}

int Tape::scale(double c, int a) {
  check_id(a);
  Node n;
  n.op = Op::Scale;
  n.a = a;
  n.c = c;
  return push(std::move(n), c * values_[a]);
}

int Tape::concat(const std::vector<int>& xs) {
  if (xs.empty()) throw std::invalid_argument("Tape::concat: no inputs");
  Index total = 0;
  for (int x : xs) {
    check_id(x);
    total += values_[x].size();
  }
  Vec v(total);
  Index at = 0;
  for (int x : xs) {
    v.segment(at, values_[x].size()) = values_[x];
    at += values_[x].size();
  }
  Node n;
  n.op = Op::Concat;
  n.many = xs;
  return push(std::move(n), std::move(v));
}

int Tape::slice(int a, Index off, Index len) {
  check_id(a);
  if (off < 0 || len < 0 || off + len > values_[a].size())
    throw std::invalid_argument("Tape::slice: out of range");
  Node n;
  n.op = Op::Slice;
  n.a = a;
  n.off = off;
  n.len = len;
  return push(std::move(n), values_[a].segment(off, len));
}

int Tape::reduce_mean(int a) {
  check_id(a);
  if (values_[a].size() == 0) throw std::invalid_argument("Tape::reduce_mean: empty input");
  Node n;
  n.op = Op::ReduceMean;
  n.a = a;
  Vec v(1);
  v[0] = values_[a].mean();
  return push(std::move(n), std::move(v));
}

int Tape::squared_dist(int a, int b) {
  check_id(a);
  check_id(b);
  if (values_[a].size() != values_[b].size())
    throw std::invalid_argument("Tape::squared_dist: size mismatch");
  Node n;
  n.op = Op::SquaredDist;
  n.a = a;
  n.b = b;
  Vec v(1);
  v[0] = (values_[a] - values_[b]).squaredNorm();
  return push(std::move(n), std::move(v));
}

int Tape::pseudo_huber(int a, int b, double c) {
  check_id(a);
  check_id(b);
  if (values_[a].size() != values_[b].size())
    throw std::invalid_argument("Tape::pseudo_huber: size mismatch");
  if (!(c > 0.0)) throw std::invalid_argument("Tape::pseudo_huber: c must be positive");
  Node n;
  n.op = Op::PseudoHuber;
  n.a = a;
  n.b = b;
  n.c = c;
  Vec v(1);
  v[0] = std::sqrt((values_[a] - values_[b]).squaredNorm() + c * c) - c;
  return push(std::move(n), std::move(v));
}

int Tape::stop_grad(int a) {
  check_id(a);
  Node n;
  n.op = Op::StopGrad;
  n.a = a;
  return push(std::move(n), values_[a]);
}

double Tape::scalar(int id) const {
  check_id(id);
  if (values_[id].size() != 1)
    throw std::invalid_argument("Tape::scalar: node is not a scalar");
  return values_[id][0];
}

void Tape::backward(int root) {
  check_id(root);
  if (values_[root].size() != 1)
    throw std::invalid_argument("Tape::backward: root must be scalar");

  adjoints_.assign(nodes_.size(), Vec());
  for (std::size_t i = 0; i < nodes_.size(); ++i) adjoints_[i] = Vec::Zero(values_[i].size());
  for (auto& s : sources_)
    if (s.trainable) s.grad = Vec::Zero(s.params->flat.size());

  adjoints_[root][0] = 1.0;

  for (int i = root; i >= 0; --i) {
    const Node& n = nodes_[i];
    const Vec& bar = adjoints_[i];
    if (bar.isZero(0.0)) continue;
    switch (n.op) {
      case Op::Const:
        break;
      case Op::Affine: {
        ParamSource& s = sources_[n.src];
        const NetworkParams& p = *s.params;
        const auto& spec = p.layers[n.layer];
        adjoints_[n.a].noalias() += p.weight(n.layer).transpose() * bar;
        if (s.trainable) {
          Eigen::Map<Mat> gW(s.grad.data() + p.offsets[n.layer], spec.out, spec.in);
          gW.noalias() += bar * values_[n.a].transpose();
          Eigen::Map<Vec> gb(s.grad.data() + p.offsets[n.layer] + spec.in * spec.out, spec.out);
          gb += bar;
        }
        break;
      }
      case Op::Act: {
        const Vec& x = values_[n.a];
        Vec& ax = adjoints_[n.a];
        for (Index j = 0; j < x.size(); ++j) ax[j] += activate_grad(n.act, x[j]) * bar[j];
        break;
      }
      case Op::Add:
        adjoints_[n.a] += bar;
        adjoints_[n.b] += bar;
        break;
      case Op::Scale:
        adjoints_[n.a] += n.c * bar;
        break;
      case Op::Concat: {
        Index at = 0;
        for (int x : n.many) {
          adjoints_[x] += bar.segment(at, values_[x].size());
          at += values_[x].size();
        }
        break;
      }
      case Op::Slice:
        adjoints_[n.a].segment(n.off, n.len) += bar;
        break;
      case Op::ReduceMean:
        adjoints_[n.a].array() += bar[0] / static_cast<double>(values_[n.a].size());
        break;
      case Op::SquaredDist: {
        const Vec d = values_[n.a] - values_[n.b];
        adjoints_[n.a] += 2.0 * bar[0] * d;
        adjoints_[n.b] -= 2.0 * bar[0] * d;
        break;
      }
      case Op::PseudoHuber: {
        // d/da sqrt(||a-b||^2 + c^2) = (a-b)/sqrt(...); sqrt(...) = value + c > 0.
        const Vec d = values_[n.a] - values_[n.b];
        const double denom = values_[i][0] + n.c;
        adjoints_[n.a] += (bar[0] / denom) * d;
        adjoints_[n.b] -= (bar[0] / denom) * d;
        break;
      }
      case Op::StopGrad:
        break;
    }
  }
  ran_backward_ = true;
}

const Vec& Tape::adjoint(int id) const {
  check_id(id);
  if (!ran_backward_) throw std::runtime_error("Tape::adjoint: backward not run");
  return adjoints_[id];
}

const Vec& Tape::param_grad(int src) const {
  if (src < 0 || src >= static_cast<int>(sources_.size()))
    throw std::invalid_argument("Tape::param_grad: bad source");
  if (!ran_backward_) throw std::runtime_error("Tape::param_grad: backward not run");
  if (!sources_[src].trainable)
    throw std::invalid_argument("Tape::param_grad: source is frozen");
  return sources_[src].grad;
}

int mlp_node(Tape& tape, int src, const NetworkParams& p, int x, int cond) {
  int h = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const int in = (cond >= 0) ? tape.concat({h, cond}) : h;
    int z = tape.affine(src, static_cast<int>(l), in);
    h = (p.layers[l].act == Activation::Identity) ? z : tape.activation(p.layers[l].act, z);
  }
  return h;
}

}  // namespace ractd
