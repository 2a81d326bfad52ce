#include "ractd/student.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "ractd/optim.hpp"

namespace ractd {

namespace {

void check_jump_levels(double t, double s) {
  if (t < 0.0 || s < 0.0) throw std::invalid_argument("jump: levels must be >= 0");
  if (s > t) throw std::invalid_argument("jump: cannot move up the noise scale (s > t)");
}

}  // namespace

Vec StudentModel::time_features(double t, double s) const {
  Vec f(4 * time_pairs);
  f << fourier_features(pre.c_noise(t), time_pairs), fourier_features(s / t, time_pairs);
  return f;
}

Vec StudentModel::jump(const Vec& x, double t, double s, const Vec& cond) const {
  if (x.size() != x_dim || cond.size() != cond_dim)
    throw std::invalid_argument("StudentModel::jump: dimension mismatch");
  check_jump_levels(t, s);
  if (s == t) return x;
  ++nfe;
  Vec cfull(cond_dim + 4 * time_pairs);
  cfull << cond, time_features(t, s);
  const Vec f = mlp_eval(net, pre.c_in(t) * x, cfull);
  const Vec g = pre.c_skip(t) * x + pre.c_out(t) * f;
  const double r = s / t;
  return r * x + (1.0 - r) * g;
}

StudentModel make_student(Index x_dim, Index cond_dim, const std::vector<Index>& hidden,
                          const NoiseSchedule& sched, Rng& rng) {
  StudentModel sm;
  sm.x_dim = x_dim;
  sm.cond_dim = cond_dim;
  sm.schedule = sched;
  sm.net = make_mlp(x_dim, cond_dim + 4 * sm.time_pairs, hidden, x_dim, Activation::Mish);
  sm.net.init_uniform(rng);
  return sm;
}

int jump_node(Tape& tape, int src, const StudentModel& sm, int x, double t, double s,
              const Vec& cond) {
  check_jump_levels(t, s);
  if (s == t) return x;
  Vec cfull(sm.cond_dim + 4 * sm.time_pairs);
  cfull << cond, sm.time_features(t, s);
  const int xin = tape.scale(sm.pre.c_in(t), x);
  const int f = mlp_node(tape, src, sm.net, xin, tape.constant(cfull));
  const int g = tape.add(tape.scale(sm.pre.c_skip(t), x), tape.scale(sm.pre.c_out(t), f));
  const double r = s / t;
  return tape.add(tape.scale(r, x), tape.scale(1.0 - r, g));
}

Triple sample_triple(const NoiseSchedule& sched, Rng& rng) {
  if (sched.n_bins < 2) throw std::invalid_argument("sample_triple: need at least 3 levels");
  Triple tr;
  tr.t_idx = static_cast<int>(rng.uniform_int(2, sched.n_bins));
  tr.u_idx = static_cast<int>(rng.uniform_int(1, tr.t_idx - 1));
  tr.k_idx = static_cast<int>(rng.uniform_int(0, tr.u_idx - 1));
  return tr;
}

std::vector<CtmSample> sample_ctm_batch(const WindowSet& ws, const NoiseSchedule& sched,
                                        int batch, Rng& rng) {
  if (ws.windows.empty()) throw std::invalid_argument("sample_ctm_batch: no windows");
  std::vector<CtmSample> out;
  out.reserve(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    const auto i = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(ws.windows.size()) - 1));
    CtmSample smp;
    smp.x0 = ws.windows[i].x;
    smp.cond = ws.windows[i].cond;
    smp.idx = sample_triple(sched, rng);
    smp.t = sched.grid_sigma(smp.idx.t_idx);
    smp.u = sched.grid_sigma(smp.idx.u_idx);
    smp.k = sched.grid_sigma(smp.idx.k_idx);
    smp.noise = rng.normal_vec(smp.x0.size());
    out.push_back(std::move(smp));
  }
  return out;
}

int ctm_loss_node(Tape& tape, int live_src, const StudentModel& live, int sg_src,
                  const StudentModel& sg, Denoiser& teacher, const NoiseSchedule& sched,
                  int solver_max_gap, const std::vector<CtmSample>& batch, double huber_c) {
  if (batch.empty()) throw std::invalid_argument("ctm_loss_node: empty batch");
  if (!live.net.same_topology(sg.net))
    throw std::invalid_argument("ctm_loss_node: live and snapshot topologies differ");
  const int gap = solver_max_gap <= 0 ? sched.n_bins : solver_max_gap;
  std::vector<int> terms;
  terms.reserve(batch.size());
  for (const auto& smp : batch) {
    const Vec x_t = smp.x0 + smp.t * smp.noise;
    // Live path on the tape; the snapshot jump passes adjoints through.
    const int a1 = jump_node(tape, live_src, live, tape.constant(x_t), smp.t, smp.k, smp.cond);
    const int a2 = jump_node(tape, sg_src, sg, a1, smp.k, 0.0, smp.cond);
    // Reference path off the tape: teacher ODE solve down to u in Heun
    // steps of at most `gap` grid cells, then snapshot jumps.
    Vec x_u = x_t;
    for (int i = smp.idx.t_idx; i > smp.idx.u_idx;) {
      const int next = std::max(smp.idx.u_idx, i - gap);
      x_u = heun_step(teacher, x_u, sched.grid_sigma(i), sched.grid_sigma(next), smp.cond);
      i = next;
    }
    const Vec b = sg.jump(sg.jump(x_u, smp.u, smp.k, smp.cond), smp.k, 0.0, smp.cond);
    terms.push_back(tape.pseudo_huber(a2, tape.constant(b), huber_c));
  }
  return tape.reduce_mean(tape.concat(terms));
}

int student_dsm_loss_node(Tape& tape, int live_src, const StudentModel& live,
                          const DsmBatch& batch) {
  return dsm_loss_node(tape, batch, live.pre, [&](Tape& t, int x, double sigma, const Vec& c) {
    return jump_node(t, live_src, live, x, sigma, 0.0, c);
  });
}

int reward_term_node(Tape& tape, int live_src, const StudentModel& live, int reward_src,
                     const RewardModel& rm, Index action_dim, const std::vector<Vec>& x_T,
                     const std::vector<Vec>& cond) {
  if (x_T.empty() || x_T.size() != cond.size())
    throw std::invalid_argument("reward_term_node: bad batch");
  std::vector<int> terms;
  terms.reserve(x_T.size());
  for (std::size_t b = 0; b < x_T.size(); ++b) {
    const int plan = jump_node(tape, live_src, live, tape.constant(x_T[b]),
                               live.schedule.sigma_max, 0.0, cond[b]);
    const int a0 = tape.slice(plan, 0, action_dim);
    terms.push_back(reward_node(tape, reward_src, rm, a0, tape.constant(cond[b])));
  }
  return tape.scale(-1.0, tape.reduce_mean(tape.concat(terms)));
}

int goal_reward_term_node(Tape& tape, int live_src, const StudentModel& live,
                          const EnvSpec& spec, const NormStats& stats,
                          const std::vector<Vec>& x_T, const std::vector<Vec>& cond) {
  if (x_T.empty() || x_T.size() != cond.size())
    throw std::invalid_argument("goal_reward_term_node: bad batch");
  std::vector<int> terms;
  terms.reserve(x_T.size());
  for (std::size_t b = 0; b < x_T.size(); ++b) {
    const int plan = jump_node(tape, live_src, live, tape.constant(x_T[b]),
                               live.schedule.sigma_max, 0.0, cond[b]);
    terms.push_back(goal_reward_node(tape, spec, stats, plan, spec.state_dim()));
  }
  return tape.scale(-1.0, tape.reduce_mean(tape.concat(terms)));
}

StudentModel distill(const WindowSet& ws, Denoiser& teacher, const NoiseSchedule& sched,
                     const DistillConfig& cfg, Rng& rng, const RewardModel* rm,
                     const EnvSpec* goal_env, std::vector<DistillLogRow>* log,
                     std::vector<std::pair<int, Vec>>* snapshots) {
  if (cfg.reward_weight < 0.0)
    throw std::invalid_argument("distill: reward_weight must be >= 0");
  if (cfg.reward_weight > 0.0 && !rm && !goal_env)
    throw std::invalid_argument("distill: reward_weight > 0 needs a reward source");
  if (rm && goal_env)
    throw std::invalid_argument("distill: pick one reward source, not both");

  StudentModel live = make_student(ws.x_dim(), ws.cond_dim(), cfg.hidden, sched, rng);
  NetworkParams ema = live.net;
  AdamState opt = AdamState::make(live.net.n_params(), cfg.lr);
  const double huber_c = cfg.huber_c < 0.0 ? default_huber_c(live.x_dim) : cfg.huber_c;

  const auto t0 = std::chrono::steady_clock::now();
  for (int step = 0; step < cfg.steps; ++step) {
    if (cfg.lr_final >= 0.0 && cfg.steps > 1) {
      const double frac = static_cast<double>(step) / (cfg.steps - 1);
      opt.lr = cfg.lr_final + 0.5 * (cfg.lr - cfg.lr_final) * (1.0 + std::cos(M_PI * frac));
    }
    const auto ctm_batch = sample_ctm_batch(ws, sched, cfg.batch, rng);
    const DsmBatch dsm_batch =
        sample_dsm_batch(ws, cfg.batch, cfg.p_mean, cfg.p_std, sched, rng);

    std::vector<Vec> reward_x_T, reward_cond;
    if (cfg.reward_weight > 0.0) {
      reward_x_T.reserve(ctm_batch.size());
      reward_cond.reserve(ctm_batch.size());
      for (const auto& smp : ctm_batch) {
        reward_x_T.push_back(sched.sigma_max * rng.normal_vec(live.x_dim));
        reward_cond.push_back(smp.cond);
      }
    }

    const StudentModel sg = live;  // frozen snapshot of the current weights
    Tape tape;
    const int live_src = tape.register_params(live.net, true);
    const int sg_src = tape.register_params(sg.net, false);

    int ctm = -1, dsm = -1, rterm = -1;
    std::vector<int> parts;
    if (cfg.alpha > 0.0) {
      ctm = ctm_loss_node(tape, live_src, live, sg_src, sg, teacher, sched,
                          cfg.solver_max_gap, ctm_batch, huber_c);
      parts.push_back(tape.scale(cfg.alpha, ctm));
    }
    if (cfg.beta > 0.0) {
      dsm = student_dsm_loss_node(tape, live_src, live, dsm_batch);
      parts.push_back(tape.scale(cfg.beta, dsm));
    }
    if (cfg.reward_weight > 0.0) {
      if (rm) {
        const int rsrc = tape.register_params(rm->net, false);
        rterm = reward_term_node(tape, live_src, live, rsrc, *rm, ws.action_dim, reward_x_T,
                                 reward_cond);
      } else {
        rterm = goal_reward_term_node(tape, live_src, live, *goal_env, ws.stats, reward_x_T,
                                      reward_cond);
      }
      parts.push_back(tape.scale(cfg.reward_weight, rterm));
    }

    int total = parts.empty() ? tape.constant(Vec::Zero(1)) : parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) total = tape.add(total, parts[i]);

    tape.backward(total);
    adam_step(opt, live.net.flat, tape.param_grad(live_src));
    ema_update(ema, live.net, cfg.ema_decay);

    if (snapshots && cfg.snapshot_every > 0 && (step + 1) % cfg.snapshot_every == 0 &&
        step + 1 < cfg.steps)
      snapshots->emplace_back(step + 1, ema.flat);

    if (log && (step % cfg.log_every == 0 || step + 1 == cfg.steps)) {
      const double ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
              .count();
      log->push_back({step, ctm >= 0 ? tape.scalar(ctm) : 0.0, dsm >= 0 ? tape.scalar(dsm) : 0.0,
                      rterm >= 0 ? tape.scalar(rterm) : 0.0, tape.scalar(total), ms});
    }
  }
  if (snapshots) snapshots->emplace_back(cfg.steps, ema.flat);
  live.net = ema;
  live.nfe = 0;
  return live;
}

Vec one_step_sample(const StudentModel& sm, const Vec& x_T, const Vec& cond) {
  return sm.jump(x_T, sm.schedule.sigma_max, 0.0, cond);
}

Vec multi_step_sample(const StudentModel& sm, const Vec& x_T, int m, const Vec& cond,
                      Rng& rng) {
  if (m < 1) throw std::invalid_argument("multi_step_sample: m must be >= 1");
  Vec x = one_step_sample(sm, x_T, cond);
  if (m == 1) return x;
  const NoiseSchedule grid =
      NoiseSchedule::karras(m, sm.schedule.sigma_min, sm.schedule.sigma_max, sm.schedule.rho);
  for (int i = 1; i < m; ++i) {
    const double tau = grid.sigmas[i];
    x = sm.jump(x + tau * rng.normal_vec(x.size()), tau, 0.0, cond);
  }
  return x;
}

Checkpoint student_checkpoint(const StudentModel& sm, int step, const std::string& config_hash) {
  Checkpoint ck;
  ck.role = "student";
  ck.step = step;
  ck.config_hash = config_hash;
  ck.params = sm.net;
  ck.meta = {{"x_dim", sm.x_dim},
             {"cond_dim", sm.cond_dim},
             {"time_pairs", sm.time_pairs},
             {"sigma_data", sm.pre.sigma_data},
             {"schedule",
              {{"sigma_min", sm.schedule.sigma_min},
               {"sigma_max", sm.schedule.sigma_max},
               {"rho", sm.schedule.rho},
               {"n_bins", sm.schedule.n_bins}}}};
  return ck;
}

StudentModel student_from_checkpoint(const Checkpoint& ck) {
  if (ck.role != "student")
    throw std::runtime_error("student_from_checkpoint: role is '" + ck.role + "'");
  StudentModel sm;
  sm.net = ck.params;
  sm.x_dim = ck.meta.at("x_dim").get<Index>();
  sm.cond_dim = ck.meta.at("cond_dim").get<Index>();
  sm.time_pairs = ck.meta.at("time_pairs").get<int>();
  sm.pre.sigma_data = ck.meta.at("sigma_data").get<double>();
  const auto& s = ck.meta.at("schedule");
  sm.schedule = NoiseSchedule::karras(s.at("n_bins").get<int>(), s.at("sigma_min").get<double>(),
                                      s.at("sigma_max").get<double>(), s.at("rho").get<double>());
  return sm;
}

}  // namespace ractd
