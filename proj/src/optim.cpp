#include "ractd/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace ractd {

AdamState AdamState::make(Index n_params, double lr) {
  AdamState s;
  s.lr = lr;
  s.m = Vec::Zero(n_params);
  s.v = Vec::Zero(n_params);
  return s;
}

void adam_step(AdamState& state, Vec& params, const Vec& grad) {
  if (params.size() != state.m.size() || grad.size() != state.m.size())
    throw std::invalid_argument("adam_step: size mismatch");
  state.step += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -=
      state.lr * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + state.eps);
}

void ema_update(NetworkParams& target, const NetworkParams& source, double decay) {
  if (!target.same_topology(source))
    throw std::invalid_argument("ema_update: topology mismatch");
  if (!(decay >= 0.0 && decay <= 1.0))
    throw std::invalid_argument("ema_update: decay outside [0, 1]");
  target.flat = decay * target.flat + (1.0 - decay) * source.flat;
}

double finite_diff_check(const std::function<LossEval(const Vec&)>& f, const Vec& params,
                         double eps) {
  const LossEval base = f(params);
  if (!std::isfinite(base.value)) throw std::runtime_error("finite_diff_check: non-finite loss");
  if (base.grad.size() != params.size())
    throw std::runtime_error("finite_diff_check: gradient size mismatch");
  double worst = 0.0;
  Vec p = params;
  for (Index i = 0; i < params.size(); ++i) {
    const double save = p[i];
    p[i] = save + eps;
    const double up = f(p).value;
    p[i] = save - eps;
    const double dn = f(p).value;
    p[i] = save;
    if (!std::isfinite(up) || !std::isfinite(dn))
      throw std::runtime_error("finite_diff_check: non-finite loss");
    const double g_fd = (up - dn) / (2.0 * eps);
    const double err = std::abs(base.grad[i] - g_fd) / (std::abs(g_fd) + 1e-12);
    if (err > worst) worst = err;
  }
  return worst;
}

}  // namespace ractd
