#include "ractd/teacher.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "ractd/optim.hpp"

namespace ractd {

Vec TeacherModel::time_features(double sigma) const {
  return fourier_features(pre.c_noise(sigma), time_pairs);
}

Vec TeacherModel::denoise(const Vec& x, double sigma, const Vec& cond) const {
  if (x.size() != x_dim || cond.size() != cond_dim)
    throw std::invalid_argument("TeacherModel::denoise: dimension mismatch");
  return edm_denoise(
      pre,
      [&](const Vec& xin, double s, const Vec& c) {
        Vec cfull(cond_dim + 2 * time_pairs);
        cfull << c, time_features(s);
        return mlp_eval(net, xin, cfull);
      },
      x, sigma, cond);
}

TeacherModel make_teacher(Index x_dim, Index cond_dim, const std::vector<Index>& hidden,
                          const NoiseSchedule& sched, Rng& rng) {
  TeacherModel tm;
  tm.x_dim = x_dim;
  tm.cond_dim = cond_dim;
  tm.schedule = sched;
  tm.net = make_mlp(x_dim, cond_dim + 2 * tm.time_pairs, hidden, x_dim, Activation::Mish);
  tm.net.init_uniform(rng);
  return tm;
}

int teacher_denoise_node(Tape& tape, int src, const TeacherModel& tm, int x, double sigma,
                         const Vec& cond) {
  if (sigma == 0.0) return x;
  Vec cfull(tm.cond_dim + 2 * tm.time_pairs);
  cfull << cond, tm.time_features(sigma);
  const int xin = tape.scale(tm.pre.c_in(sigma), x);
  const int f = mlp_node(tape, src, tm.net, xin, tape.constant(cfull));
  return tape.add(tape.scale(tm.pre.c_skip(sigma), x), tape.scale(tm.pre.c_out(sigma), f));
}

Vec Denoiser::operator()(const Vec& x, double sigma, const Vec& cond) {
  if (sigma == 0.0) return x;
  ++nfe_;
  return eval(x, sigma, cond);
}

Vec heun_step(Denoiser& den, const Vec& x, double sigma_from, double sigma_to,
              const Vec& cond) {
  if (sigma_from <= 0.0) throw std::invalid_argument("heun_step: sigma_from must be positive");
  if (sigma_to < 0.0) throw std::invalid_argument("heun_step: sigma_to must be >= 0");
  const Vec d = (x - den(x, sigma_from, cond)) / sigma_from;
  const Vec x_euler = x + (sigma_to - sigma_from) * d;
  if (sigma_to == 0.0) return x_euler;
  const Vec d2 = (x_euler - den(x_euler, sigma_to, cond)) / sigma_to;
  return x + 0.5 * (sigma_to - sigma_from) * (d + d2);
}

Vec solve_pfode(Denoiser& den, const Vec& x_T, const NoiseSchedule& sched, const Vec& cond) {
  if (sched.n_bins < 2) throw std::invalid_argument("solve_pfode: need at least two nodes");
  Vec x = x_T;
  for (int i = 0; i + 2 < sched.n_bins; ++i)
    x = heun_step(den, x, sched.sigmas[i], sched.sigmas[i + 1], cond);
  return heun_step(den, x, sched.sigmas[sched.n_bins - 2], 0.0, cond);
}

Vec ddim_sample(Denoiser& den, const Vec& x_T, const NoiseSchedule& sched, int steps,
                const Vec& cond) {
  if (steps < 1) throw std::invalid_argument("ddim_sample: steps must be >= 1");
  const NoiseSchedule grid =
      NoiseSchedule::karras(steps, sched.sigma_min, sched.sigma_max, sched.rho);
  Vec x = x_T;
  for (int i = 0; i < steps; ++i) {
    const double from = grid.sigmas[i];
    const double to = grid.sigmas[i + 1];  // terminal entry is 0
    const Vec d = (x - den(x, from, cond)) / from;
    x += (to - from) * d;
  }
  return x;
}

Vec ddpm_sample(Denoiser& den, const Vec& x_T, const NoiseSchedule& sched, int steps, Rng& rng,
                const Vec& cond) {
  if (steps < 1) throw std::invalid_argument("ddpm_sample: steps must be >= 1");
  const NoiseSchedule grid =
      NoiseSchedule::karras(steps, sched.sigma_min, sched.sigma_max, sched.rho);
  Vec x = x_T;
  for (int i = 0; i < steps; ++i) {
    const double from = grid.sigmas[i];
    const double to = grid.sigmas[i + 1];
    const Vec d = (x - den(x, from, cond)) / from;
    double sigma_up = 0.0;
    double sigma_down = to;
    if (to > 0.0) {
      // Ancestral split: variance to^2 = sigma_down^2 + sigma_up^2.
      const double up2 = to * to * (from * from - to * to) / (from * from);
      sigma_up = std::min(to, std::sqrt(std::max(0.0, up2)));
      sigma_down = std::sqrt(std::max(0.0, to * to - sigma_up * sigma_up));
    }
    x += (sigma_down - from) * d;
    if (sigma_up > 0.0) x += sigma_up * rng.normal_vec(x.size());
  }
  return x;
}

DsmBatch sample_dsm_batch(const WindowSet& ws, int batch, double p_mean, double p_std,
                          const NoiseSchedule& sched, Rng& rng) {
  if (ws.windows.empty()) throw std::invalid_argument("sample_dsm_batch: no windows");
  DsmBatch out;
  for (int b = 0; b < batch; ++b) {
    const auto i = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(ws.windows.size()) - 1));
    out.x0.push_back(ws.windows[i].x);
    out.cond.push_back(ws.windows[i].cond);
    out.sigma.push_back(
        sample_training_sigma(rng, p_mean, p_std, sched.sigma_min, sched.sigma_max));
    out.noise.push_back(rng.normal_vec(ws.windows[i].x.size()));
  }
  return out;
}

int dsm_loss_node(Tape& tape, const DsmBatch& batch, const Preconditioner& pre,
                  const DenoiseNodeFn& denoise) {
  if (batch.size() == 0) throw std::invalid_argument("dsm_loss_node: empty batch");
  std::vector<int> terms;
  terms.reserve(batch.x0.size());
  for (int b = 0; b < batch.size(); ++b) {
    const Vec xt = batch.x0[b] + batch.sigma[b] * batch.noise[b];
    const int d = denoise(tape, tape.constant(xt), batch.sigma[b], batch.cond[b]);
    const int err = tape.squared_dist(d, tape.constant(batch.x0[b]));
    const double co = pre.c_out(batch.sigma[b]);
    terms.push_back(tape.scale(1.0 / (co * co * static_cast<double>(batch.x0[b].size())), err));
  }
  return tape.reduce_mean(tape.concat(terms));
}

TeacherModel train_teacher(const WindowSet& ws, const NoiseSchedule& sched,
                           const TeacherTrainConfig& cfg, Rng& rng,
                           const RewardModel* reward, std::vector<TeacherLogRow>* log) {
  if (cfg.reward_weight > 0.0 && !reward)
    throw std::invalid_argument("train_teacher: reward_weight > 0 needs a reward model");
  if (cfg.reward_weight < 0.0)
    throw std::invalid_argument("train_teacher: reward_weight must be >= 0");

  TeacherModel tm = make_teacher(ws.x_dim(), ws.cond_dim(), cfg.hidden, sched, rng);
  NetworkParams ema = tm.net;
  AdamState opt = AdamState::make(tm.net.n_params(), cfg.lr);

  const auto t0 = std::chrono::steady_clock::now();
  for (int step = 0; step < cfg.steps; ++step) {
    const DsmBatch batch = sample_dsm_batch(ws, cfg.batch, cfg.p_mean, cfg.p_std, sched, rng);
    Tape tape;
    const int src = tape.register_params(tm.net, true);
    const int dsm = dsm_loss_node(tape, batch, tm.pre, [&](Tape& t, int x, double s,
                                                           const Vec& c) {
      return teacher_denoise_node(t, src, tm, x, s, c);
    });

    int total = dsm;
    int rterm = -1;
    if (cfg.reward_weight > 0.0) {
      const int rsrc = tape.register_params(reward->net, false);
      std::vector<int> terms;
      terms.reserve(batch.x0.size());
      for (int b = 0; b < batch.size(); ++b) {
        const Vec x_T = sched.sigma_max * rng.normal_vec(tm.x_dim);
        const int d = teacher_denoise_node(tape, src, tm, tape.constant(x_T), sched.sigma_max,
                                           batch.cond[b]);
        const int a0 = tape.slice(d, 0, ws.action_dim);
        terms.push_back(reward_node(tape, rsrc, *reward, a0, tape.constant(batch.cond[b])));
      }
      rterm = tape.scale(-1.0, tape.reduce_mean(tape.concat(terms)));
      total = tape.add(dsm, tape.scale(cfg.reward_weight, rterm));
    }

    tape.backward(total);
    adam_step(opt, tm.net.flat, tape.param_grad(src));
    ema_update(ema, tm.net, cfg.ema_decay);

    if (log && (step % cfg.log_every == 0 || step + 1 == cfg.steps)) {
      const double ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
              .count();
      log->push_back({step, tape.scalar(dsm), rterm >= 0 ? tape.scalar(rterm) : 0.0,
                      tape.scalar(total), ms});
    }
  }
  tm.net = ema;
  return tm;
}

Checkpoint teacher_checkpoint(const TeacherModel& tm, int step, const std::string& config_hash) {
  Checkpoint ck;
  ck.role = "teacher";
  ck.step = step;
  ck.config_hash = config_hash;
  ck.params = tm.net;
  ck.meta = {{"x_dim", tm.x_dim},
             {"cond_dim", tm.cond_dim},
             {"time_pairs", tm.time_pairs},
             {"sigma_data", tm.pre.sigma_data},
             {"schedule",
              {{"sigma_min", tm.schedule.sigma_min},
               {"sigma_max", tm.schedule.sigma_max},
               {"rho", tm.schedule.rho},
               {"n_bins", tm.schedule.n_bins}}}};
  return ck;
}

TeacherModel teacher_from_checkpoint(const Checkpoint& ck) {
  if (ck.role != "teacher")
    throw std::runtime_error("teacher_from_checkpoint: role is '" + ck.role + "'");
  TeacherModel tm;
  tm.net = ck.params;
  tm.x_dim = ck.meta.at("x_dim").get<Index>();
  tm.cond_dim = ck.meta.at("cond_dim").get<Index>();
  tm.time_pairs = ck.meta.at("time_pairs").get<int>();
  tm.pre.sigma_data = ck.meta.at("sigma_data").get<double>();
  const auto& s = ck.meta.at("schedule");
  tm.schedule = NoiseSchedule::karras(s.at("n_bins").get<int>(), s.at("sigma_min").get<double>(),
                                      s.at("sigma_max").get<double>(), s.at("rho").get<double>());
  return tm;
}

}  // namespace ractd
