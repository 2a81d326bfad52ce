// Acceptance gate: one [PASS]/[FAIL] line per criterion, tolerances pinned
// in code. Heavy pipeline stages cache under RACTD_OUT_ROOT (default
// "acceptance_runs"); delete that directory to retrain everything.
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ractd/checkpoint.hpp"
#include "ractd/config.hpp"
#include "ractd/dataenv.hpp"
#include "ractd/harness.hpp"
#include "ractd/network.hpp"
#include "ractd/oracle.hpp"
#include "ractd/planeval.hpp"
#include "ractd/reward.hpp"
#include "ractd/student.hpp"
#include "ractd/tape.hpp"
#include "ractd/teacher.hpp"

namespace fs = std::filesystem;
using namespace ractd;

namespace {

struct Result {
  bool pass = false;
  std::string detail;
};

std::string cache_root() {
  if (const char* env = std::getenv("RACTD_OUT_ROOT")) return env;
  return "acceptance_runs";
}

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

// Mirrors configs/bimodal.json; pinned here so the gate is self-contained.
ExperimentConfig bimodal_config() {
  ExperimentConfig cfg;
  cfg.env = "bimodal-reach";
  cfg.n_episodes = 400;
  cfg.h = 4;
  cfg.c = 8;
  cfg.n_bins = 80;
  cfg.sigma_min = 0.002;
  cfg.sigma_max = 20.0;
  cfg.teacher.steps = 8000;
  cfg.teacher.lr = 1e-3;
  cfg.teacher.p_mean = -0.5;
  cfg.teacher.p_std = 1.4;
  cfg.reward.steps = 3000;
  cfg.distill.steps = 20000;
  cfg.distill.batch = 32;
  cfg.distill.lr = 1e-3;
  cfg.distill.lr_final = 5e-5;
  cfg.distill.reward_weight = 0.1;
  cfg.eval.rollouts = 100;
  cfg.seed = 1;
  cfg.out_root = cache_root();
  return cfg;
}

// Mirrors configs/maze{32,64,96}.json.
ExperimentConfig maze_config(const std::string& variant, int horizon) {
  ExperimentConfig cfg = bimodal_config();
  cfg.env = "pointmass-maze";
  cfg.variant = variant;
  cfg.h = 1;
  cfg.plan_states = true;
  cfg.plan_horizon = horizon;
  cfg.reward_source = "goal";
  cfg.eval.mode = "open";
  return cfg;
}

void build_chain(const ExperimentConfig& cfg) {
  ensure_dataset(cfg);
  const bool needs_rm = cfg.teacher.reward_weight > 0.0 ||
                        (cfg.distill.reward_weight > 0.0 && cfg.reward_source == "model");
  if (needs_rm) ensure_reward(cfg);
  ensure_teacher(cfg);
  if (cfg.eval.sampler != "teacher-heun") ensure_distill(cfg);
  if (cfg.eval.mode == "open") ensure_reverse_dynamics(cfg);
}

nlohmann::json eval_report(const ExperimentConfig& cfg) {
  build_chain(cfg);
  const fs::path dir = run_eval(cfg);
  nlohmann::json j;
  std::ifstream in(dir / "report.json");
  in >> j;
  return j;
}

StudentModel cached_student(const ExperimentConfig& cfg) {
  build_chain(cfg);
  return student_from_checkpoint(
      load_checkpoint(stage_dir(cfg, "distill") / "student.ckpt", "student"));
}

double r_squared(const std::vector<double>& xs, const std::vector<double>& ys) {
  const std::size_t n = xs.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  const double b = sxy / sxx;
  double sse = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = ys[i] - (my + b * (xs[i] - mx));
    sse += e * e;
  }
  return 1.0 - sse / syy;
}

GaussianMixture mixture_1d() {
  GaussianMixture g;
  g.weights = {0.5, 0.5};
  g.means.resize(2, Vec(1));
  g.means[0] << -0.95;
  g.means[1] << 0.95;
  g.vars.resize(2, Vec::Constant(1, 0.09));
  return g;
}

WindowSet mixture_windows(const GaussianMixture& g, int n, Rng& rng) {
  WindowSet ws;
  ws.h = 1;
  ws.c = 1;
  ws.state_dim = static_cast<int>(g.dim());
  ws.action_dim = static_cast<int>(g.dim());
  for (int i = 0; i < n; ++i) {
    PlanWindow w;
    w.x = g.sample(rng);
    w.cond = Vec(0);
    ws.windows.push_back(std::move(w));
  }
  return ws;
}

// ---------------------------------------------------------------------------
// 1. autodiff soundness

double max_rel_err(const Vec& analytic, const Vec& numeric) {
  double worst = 0.0;
  for (Index i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-3});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

Result criterion_autodiff() {
  // per-primitive sweeps: a 12-parameter affine feeds each op; gradients are
  // finite-differenced over the raw parameter vector
  Rng rng(21);
  NetworkParams base = make_mlp(1, 0, {}, 6, Activation::Identity);
  base.init_uniform(rng);
  const Vec probe = Vec::Constant(6, 0.3);

  using Builder = std::function<int(Tape&, int)>;
  const std::vector<std::pair<std::string, Builder>> prims = {
      {"affine", [](Tape& t, int x) { return t.reduce_mean(x); }},
      {"mish",
       [](Tape& t, int x) { return t.reduce_mean(t.activation(Activation::Mish, x)); }},
      {"silu",
       [](Tape& t, int x) { return t.reduce_mean(t.activation(Activation::Silu, x)); }},
      {"sigmoid",
       [](Tape& t, int x) { return t.reduce_mean(t.activation(Activation::Sigmoid, x)); }},
      {"add", [](Tape& t, int x) {
         return t.reduce_mean(t.add(x, t.activation(Activation::Mish, x)));
       }},
      {"scale", [](Tape& t, int x) { return t.reduce_mean(t.scale(-1.7, x)); }},
      {"concat",
       [](Tape& t, int x) { return t.reduce_mean(t.concat({x, t.scale(2.0, x)})); }},
      {"slice", [](Tape& t, int x) { return t.reduce_mean(t.slice(x, 1, 3)); }},
      {"squared_dist",
       [&](Tape& t, int x) { return t.squared_dist(x, t.constant(probe)); }},
      {"pseudo_huber",
       [&](Tape& t, int x) { return t.pseudo_huber(x, t.constant(probe), 0.1); }}};

  double prim_worst = 0.0;
  std::string prim_name;
  for (const auto& [name, build] : prims) {
    auto loss_at = [&](const Vec& flat) {
      NetworkParams p = base;
      p.flat = flat;
      Tape t;
      const int src = t.register_params(p, true);
      const int x = t.affine(src, 0, t.constant(Vec::Ones(1)));
      return std::pair<double, Vec>(t.scalar(build(t, x)), Vec());
    };
    NetworkParams p = base;
    Tape t;
    const int src = t.register_params(p, true);
    const int x = t.affine(src, 0, t.constant(Vec::Ones(1)));
    t.backward(build(t, x));
    const Vec g = t.param_grad(src);

    Vec fd(g.size());
    for (Index i = 0; i < g.size(); ++i) {
      Vec flat = base.flat;
      const double eps = 1e-6 * std::max(1.0, std::abs(flat[i]));
      flat[i] += eps;
      const double lp = loss_at(flat).first;
      flat[i] -= 2 * eps;
      const double lm = loss_at(flat).first;
      fd[i] = (lp - lm) / (2 * eps);
    }
    const double err = max_rel_err(g, fd);
    if (err > prim_worst) {
      prim_worst = err;
      prim_name = name;
    }
  }
  if (prim_worst >= 1e-5)
    return {false, "primitive '" + prim_name + "' rel err " + fmt(prim_worst) + " >= 1e-5"};

  // stop-gradient blocks adjoints exactly
  {
    NetworkParams p = base;
    Tape t;
    const int src = t.register_params(p, true);
    const int x = t.affine(src, 0, t.constant(Vec::Ones(1)));
    t.backward(t.reduce_mean(t.stop_grad(t.scale(3.0, x))));
    if (t.param_grad(src).cwiseAbs().maxCoeff() != 0.0)
      return {false, "stop_grad leaked a nonzero adjoint"};
  }

  // full distillation loss, all three terms live
  const EnvSpec spec = EnvSpec::bimodal_reach();
  GenConfig gen;
  gen.n_episodes = 6;
  Rng data_rng(5);
  const Dataset ds = gen_offline_dataset(spec, gen, data_rng);
  const WindowSet ws = window_dataset(ds, 2, 4);
  const NoiseSchedule sched = NoiseSchedule::karras(10, 0.002, 20.0);

  Rng net_rng(7);
  const TeacherModel tm = make_teacher(ws.x_dim(), ws.cond_dim(), {8, 8}, sched, net_rng);
  StudentModel live = make_student(ws.x_dim(), ws.cond_dim(), {8, 8}, sched, net_rng);
  RewardModel rm;
  rm.net = make_mlp(ws.action_dim, ws.cond_dim(), {8}, 1, Activation::Mish);
  rm.net.init_uniform(net_rng);
  rm.target_mean = 50.0;
  rm.target_std = 20.0;

  Rng batch_rng(11);
  const auto ctm_batch = sample_ctm_batch(ws, sched, 3, batch_rng);
  const DsmBatch dsm_batch = sample_dsm_batch(ws, 3, -1.0, 1.0, sched, batch_rng);
  std::vector<Vec> r_x_T, r_cond;
  for (const auto& smp : ctm_batch) {
    r_x_T.push_back(sched.sigma_max * batch_rng.normal_vec(live.x_dim));
    r_cond.push_back(smp.cond);
  }
  const StudentModel sg = live;  // frozen branch stays at the base point

  auto full_loss = [&](const Vec& flat, Vec* grad) {
    StudentModel cur = live;
    cur.net.flat = flat;
    TeacherDenoiser den(tm);
    Tape tape;
    const int live_src = tape.register_params(cur.net, true);
    const int sg_src = tape.register_params(sg.net, false);
    const int rsrc = tape.register_params(rm.net, false);
    const int ctm =
        ctm_loss_node(tape, live_src, cur, sg_src, sg, den, sched, 2, ctm_batch, 0.03);
    const int dsm = student_dsm_loss_node(tape, live_src, cur, dsm_batch);
    const int rterm =
        reward_term_node(tape, live_src, cur, rsrc, rm, ws.action_dim, r_x_T, r_cond);
    const int total =
        tape.add(tape.add(tape.scale(1.0, ctm), tape.scale(1.0, dsm)), tape.scale(0.5, rterm));
    if (grad) {
      tape.backward(total);
      *grad = tape.param_grad(live_src);
    }
    return tape.scalar(total);
  };

  Vec g;
  full_loss(live.net.flat, &g);
  Vec fd(g.size());
  for (Index i = 0; i < g.size(); ++i) {
    Vec flat = live.net.flat;
    const double eps = 1e-5 * std::max(1.0, std::abs(flat[i]));
    flat[i] += eps;
    const double lp = full_loss(flat, nullptr);
    flat[i] -= 2 * eps;
    const double lm = full_loss(flat, nullptr);
    fd[i] = (lp - lm) / (2 * eps);
  }
  const double err = max_rel_err(g, fd);
  if (err >= 1e-4)
    return {false, "full-loss FD rel err " + fmt(err) + " >= 1e-4 over " +
                       std::to_string(g.size()) + " params"};
  return {true, "full-loss FD rel err " + fmt(err) + " over " + std::to_string(g.size()) +
                    " params; worst primitive (" + prim_name + ") " + fmt(prim_worst)};
}

// ---------------------------------------------------------------------------
// 2. solver order

Result criterion_solver_order() {
  const GaussianMixture g = mixture_1d();
  OracleDenoiser den(g);
  Rng rng(11);
  const int m = 400;
  std::vector<Vec> noise;
  for (int i = 0; i < m; ++i) noise.push_back(rng.normal_vec(1));

  auto endpoints = [&](int bins) {
    const NoiseSchedule s = NoiseSchedule::karras(bins);
    std::vector<double> out;
    out.reserve(noise.size());
    for (const auto& z : noise) out.push_back(solve_pfode(den, s.sigma_max * z, s, Vec(0))[0]);
    return out;
  };
  // identity-coupled transport error: each grid shares the same terminal
  // noise draws as the 513-bin reference
  const auto ref = endpoints(513);
  std::vector<double> errs;
  for (const int bins : {17, 33, 65, 129}) {
    const auto got = endpoints(bins);
    double sum = 0.0;
    for (int i = 0; i < m; ++i) sum += std::abs(got[i] - ref[i]);
    errs.push_back(sum / m);
  }

  std::string detail = "transport error ratios";
  bool ok = true;
  for (std::size_t i = 0; i + 1 < errs.size(); ++i) {
    const double ratio = errs[i] / errs[i + 1];
    ok = ok && ratio >= 3.2 && ratio <= 4.8;
    detail += " " + fmt(ratio);
  }
  return {ok, detail + (ok ? " in" : " outside") + " [3.2,4.8]"};
}

// ---------------------------------------------------------------------------
// 3. boundary identities

Result criterion_identities() {
  Rng rng(13);
  const NoiseSchedule sched = NoiseSchedule::karras(18, 0.002, 20.0);
  const TeacherModel tm = make_teacher(3, 2, {16, 16}, sched, rng);
  const StudentModel sm = make_student(3, 2, {16, 16}, sched, rng);
  TeacherDenoiser den(tm);

  const std::vector<double> levels = {0.0, sched.sigma_min, 0.5, 1.0, sched.sigma_max};
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Vec x = 2.0 * rng.normal_vec(3);
    const Vec cond = rng.normal_vec(2);
    worst = std::max(worst, (den(x, 0.0, cond) - x).cwiseAbs().maxCoeff());
    const double t = levels[static_cast<std::size_t>(i) % levels.size()];
    worst = std::max(worst, (sm.jump(x, t, t, cond) - x).cwiseAbs().maxCoeff());
  }
  const bool ok = worst == 0.0 && den.nfe() == 0 && sm.nfe == 0;
  return {ok, "max deviation " + fmt(worst) + " over 1e4 inputs, network calls " +
                  std::to_string(den.nfe() + sm.nfe)};
}

// ---------------------------------------------------------------------------
// 4. distillation fidelity against the analytic denoiser

Result criterion_oracle_distill() {
  const GaussianMixture g = mixture_1d();
  OracleDenoiser den(g);
  const NoiseSchedule sched = NoiseSchedule::karras(80, 0.002, 20.0);

  Rng data_rng(3);
  const WindowSet ws = mixture_windows(g, 4000, data_rng);

  DistillConfig cfg;
  cfg.hidden = {96, 96};
  cfg.steps = 60000;
  cfg.batch = 32;
  cfg.lr = 1e-3;
  cfg.lr_final = 5e-5;
  cfg.reward_weight = 0.0;
  cfg.log_every = 0;
  Rng rng(1);
  const StudentModel sm = distill(ws, den, sched, cfg, rng);

  Rng eval_rng(17);
  const NoiseSchedule fine = NoiseSchedule::karras(257, 0.002, 20.0);
  std::vector<double> student, reference;
  for (int i = 0; i < 5000; ++i) {
    const Vec z = eval_rng.normal_vec(1);
    student.push_back(one_step_sample(sm, sched.sigma_max * z, Vec(0))[0]);
    reference.push_back(solve_pfode(den, fine.sigma_max * z, fine, Vec(0))[0]);
  }
  const double w1 = wasserstein_1d(student, reference);
  return {w1 < 0.05, "W1(one-step student, fine-grid solver) = " + fmt(w1) +
                         " at n=5000 (tolerance 0.05)"};
}

// ---------------------------------------------------------------------------
// 5. mode selection

Result criterion_mode_selection() {
  const ExperimentConfig aware = bimodal_config();
  ExperimentConfig plain = aware;
  plain.distill.reward_weight = 0.0;

  const EnvSpec spec = aware.env_spec();
  if (spec.rate_hi < 5.0 * spec.rate_lo)
    return {false, "mode rewards separated only " + fmt(spec.rate_hi / spec.rate_lo) + "x"};

  const double hi_plain = eval_report(plain)["hi_fraction"].get<double>();
  const double hi_aware = eval_report(aware)["hi_fraction"].get<double>();
  const bool ok = hi_plain >= 0.35 && hi_plain <= 0.65 && hi_aware >= 0.9;
  return {ok, "high-mode fraction: sigma_r=0 " + fmt(hi_plain) +
                  " (want [0.35,0.65]), reward-aware " + fmt(hi_aware) + " (want >= 0.9)"};
}

// ---------------------------------------------------------------------------
// 6. reward placement ablation

Result criterion_reward_placement() {
  const double w_student = 0.1, w_teacher = 0.1;
  auto cell = [&](double wt, double ws_) {
    ExperimentConfig cfg = bimodal_config();
    cfg.teacher.reward_weight = wt;
    cfg.distill.reward_weight = ws_;
    return eval_report(cfg)["normalized"].get<double>();
  };
  const double n_none = cell(0.0, 0.0);
  const double n_student = cell(0.0, w_student);
  const double n_teacher = cell(w_teacher, 0.0);
  const double n_both = cell(w_teacher, w_student);

  const double mid_lo = std::min(n_teacher, n_both);
  const double mid_hi = std::max(n_teacher, n_both);
  const bool ordered = n_student > mid_hi && mid_lo > n_none;
  const bool margin = n_student >= mid_hi + 10.0;
  return {ordered && margin,
          "normalized: student-only " + fmt(n_student, 4) + ", both " + fmt(n_both, 4) +
              ", teacher-only " + fmt(n_teacher, 4) + ", none " + fmt(n_none, 4) +
              " (want student-only best by >= 10 and none worst)"};
}

// ---------------------------------------------------------------------------
// 7. reward-weight curve

Result criterion_weight_curve() {
  const std::vector<double> weights = {0.05, 0.1, 0.2, 0.4, 0.8};
  ExperimentConfig base = bimodal_config();
  base.distill.reward_weight = 0.0;
  const double ret_base = eval_report(base)["mean_return"].get<double>();

  double best_w = 0.0, best_ret = -1e300;
  std::map<double, double> curve;
  for (const double w : weights) {
    ExperimentConfig cfg = bimodal_config();
    cfg.distill.reward_weight = w;
    const double r = eval_report(cfg)["mean_return"].get<double>();
    curve[w] = r;
    if (r > best_ret) {
      best_ret = r;
      best_w = w;
    }
  }
  // the zero-weight run shares the CTD stage hash, so it is the baseline by
  // construction; the curve checks are the substantive ones
  double excess_ret = 1e300;
  double excess_w = 0.0;
  for (const auto& [w, r] : curve)
    if (w >= 4.0 * best_w && r < excess_ret) {
      excess_ret = r;
      excess_w = w;
    }
  const bool has_excess = excess_ret < 1e300;
  const bool peak_ok = best_ret >= 1.2 * ret_base;
  const bool excess_ok = has_excess && excess_ret < ret_base;
  std::string detail = "baseline " + fmt(ret_base, 4) + "; peak " + fmt(best_ret, 4) +
                       " at sigma_r=" + fmt(best_w) + " (want >= 1.2x); " +
                       (has_excess ? "sigma_r=" + fmt(excess_w) + " scores " + fmt(excess_ret, 4)
                                   : "no weight >= 4x peak in sweep") +
                       " (want < baseline)";
  return {peak_ok && excess_ok, detail};
}

// ---------------------------------------------------------------------------
// 8. NFE and wall-clock

Result criterion_nfe_timing() {
  ExperimentConfig cfg = bimodal_config();
  build_chain(cfg);
  const Dataset ds = load_dataset(stage_dir(cfg, "data") / "dataset.jsonl");
  const WindowSet ws = window_dataset(ds, cfg.h, cfg.c);
  const TeacherModel tm = teacher_from_checkpoint(
      load_checkpoint(stage_dir(cfg, "teacher") / "teacher.ckpt", "teacher"));
  const StudentModel sm = cached_student(cfg);
  if (cfg.teacher.hidden != cfg.distill.hidden)
    return {false, "teacher and student topologies differ"};

  TeacherDenoiser den(tm);
  HeunPlanSampler heun(den, NoiseSchedule::karras(41, cfg.sigma_min, cfg.sigma_max, cfg.rho),
                       ws.x_dim());
  DdpmPlanSampler ddpm(den, cfg.schedule(), 15, ws.x_dim());
  DdimPlanSampler ddim(den, cfg.schedule(), 15, ws.x_dim());
  StudentPlanSampler student(sm, 1);

  const Vec cond = ws.windows.front().cond;
  Rng rng(5);
  std::vector<std::pair<PlanSampler*, int>> expect = {
      {&ddpm, 15}, {&ddim, 15}, {&heun, 79}, {&student, 1}};
  for (auto& [sampler, want] : expect) {
    sampler->sample(cond, rng);
    if (sampler->last_nfe() != want)
      return {false, sampler->name() + " used " + std::to_string(sampler->last_nfe()) +
                         " evaluations, expected " + std::to_string(want)};
  }

  const auto rows = benchmark({&heun, &ddpm, &ddim, &student}, cond, 40, 5, 7);
  const double speedup = rows.back().speedup;
  const bool ok = speedup >= 40.0;
  return {ok, "NFE {ddpm 15, ddim 15, heun 79, student 1} exact; student speedup " +
                  fmt(speedup, 4) + "x (want >= 40x)"};
}

// ---------------------------------------------------------------------------
// 9. multi-step sampling

Result criterion_multi_step() {
  ExperimentConfig cfg = bimodal_config();
  const StudentModel sm = cached_student(cfg);
  const Dataset ds = load_dataset(stage_dir(cfg, "data") / "dataset.jsonl");
  const WindowSet ws = window_dataset(ds, cfg.h, cfg.c);
  const EnvSpec spec = cfg.env_spec();
  const double threshold = mode_threshold(spec);

  std::vector<double> ms, walls, returns;
  for (int m = 1; m <= 4; ++m) {
    StudentPlanSampler sampler(sm, m);
    std::vector<RolloutResult> rollouts;
    // shared rollout seeds across m: same starts and env stream, so the
    // m = 2 vs m = 1 comparison is not seed noise
    for (int i = 0; i < 50; ++i) {
      ClosedLoopOptions opt;
      opt.h = cfg.h;
      rollouts.push_back(closed_loop_rollout(sampler, spec, ws.stats, 1000 + 7 * i, opt));
      for (const int nfe : rollouts.back().nfe)
        if (nfe != m)
          return {false, "m=" + std::to_string(m) + " action used " + std::to_string(nfe) +
                             " evaluations"};
    }
    const EvalReport rep = summarize(rollouts, threshold, "");
    const auto rows = benchmark({&sampler}, ws.windows.front().cond, 60, 8, 7);
    ms.push_back(m);
    walls.push_back(rows.front().median_s);
    returns.push_back(rep.mean_return);
  }
  const double r2 = r_squared(ms, walls);
  const double drift = std::abs(returns[1] - returns[0]) / std::max(std::abs(returns[0]), 1e-9);
  const bool ok = r2 > 0.95 && drift <= 0.05;
  return {ok, "NFE = m exactly for m in {1..4}; wall-time linearity R^2 " + fmt(r2, 4) +
                  " (want > 0.95); m=2 return drift " + fmt(100 * drift) + "% (want <= 5%)"};
}

// ---------------------------------------------------------------------------
// 10. long-horizon open loop

Result criterion_long_horizon() {
  struct Row {
    std::string variant;
    int horizon;
    double teacher, ctd, ractd;
  };
  std::vector<Row> rows;
  for (const auto& [variant, horizon] :
       std::vector<std::pair<std::string, int>>{{"umaze", 32}, {"medium", 64}, {"large", 96}}) {
    ExperimentConfig ractd = maze_config(variant, horizon);
    ExperimentConfig ctd = ractd;
    ctd.distill.reward_weight = 0.0;
    ExperimentConfig teach = ractd;
    teach.eval.sampler = "teacher-heun";

    Row row{variant, horizon, 0, 0, 0};
    row.teacher = eval_report(teach)["success_rate"].get<double>();
    row.ctd = eval_report(ctd)["success_rate"].get<double>();
    row.ractd = eval_report(ractd)["success_rate"].get<double>();
    rows.push_back(row);
  }
  bool ok = true;
  std::string detail;
  for (const auto& r : rows) {
    ok = ok && r.ractd >= r.teacher - 0.05;
    detail += r.variant + " h" + std::to_string(r.horizon) + " teacher " + fmt(r.teacher) +
              "/ctd " + fmt(r.ctd) + "/ractd " + fmt(r.ractd) + "; ";
  }
  ok = ok && rows.back().ractd > rows.back().ctd;
  return {ok, detail + "(want ractd >= teacher-0.05 everywhere, ractd > ctd on large)"};
}

// ---------------------------------------------------------------------------
// 11. determinism

Result criterion_determinism() {
  ExperimentConfig cfg = bimodal_config();
  cfg.n_episodes = 30;
  cfg.teacher.steps = 100;
  cfg.reward.steps = 60;
  cfg.rd.steps = 80;
  cfg.distill.steps = 120;
  cfg.eval.rollouts = 4;
  cfg.out_root = cache_root() + "/determinism";
  cfg.seed = 3;
  fs::remove_all(cfg.out_root);

  auto read_bytes = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
  };
  auto run_all = [&] {
    run_gen_data(cfg);
    run_train_reward(cfg);
    run_train_teacher(cfg);
    run_distill(cfg);
    run_reverse_dynamics(cfg);
    run_eval(cfg);
  };

  run_all();
  const std::vector<std::pair<std::string, std::string>> artifacts = {
      {"data", "dataset.jsonl"},   {"reward", "reward.ckpt"}, {"teacher", "teacher.ckpt"},
      {"distill", "student.ckpt"}, {"rd", "rd.ckpt"}};
  std::map<std::string, std::string> first;
  for (const auto& [stage, file] : artifacts)
    first[stage] = read_bytes(stage_dir(cfg, stage) / file);
  nlohmann::json rep1;
  std::ifstream(stage_dir(cfg, "eval") / "report.json") >> rep1;
  rep1.erase("timing");

  run_all();
  for (const auto& [stage, file] : artifacts)
    if (read_bytes(stage_dir(cfg, stage) / file) != first[stage])
      return {false, stage + " artifact changed across identical re-runs"};
  nlohmann::json rep2;
  std::ifstream(stage_dir(cfg, "eval") / "report.json") >> rep2;
  rep2.erase("timing");
  if (rep1 != rep2) return {false, "non-timing report fields changed across re-runs"};
  return {true, "dataset, 4 checkpoints, and non-timing report fields byte-identical "
                "across re-runs"};
}

struct Criterion {
  int id;
  std::string name;
  std::function<Result()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> c = {
      {1, "autodiff-soundness", criterion_autodiff},
      {2, "solver-order", criterion_solver_order},
      {3, "boundary-identities", criterion_identities},
      {4, "oracle-distill-fidelity", criterion_oracle_distill},
      {5, "mode-selection", criterion_mode_selection},
      {6, "reward-placement", criterion_reward_placement},
      {7, "reward-weight-curve", criterion_weight_curve},
      {8, "nfe-timing", criterion_nfe_timing},
      {9, "multi-step-sampling", criterion_multi_step},
      {10, "long-horizon-open-loop", criterion_long_horizon},
      {11, "determinism", criterion_determinism},
  };
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--list") {
      for (const auto& c : criteria()) std::cout << c.id << " " << c.name << "\n";
      return 0;
    }
    if (arg == "--only" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
      if (only < 1 || only > static_cast<int>(criteria().size())) {
        std::cerr << "error: --only wants 1.." << criteria().size() << "\n";
        return 1;
      }
      continue;
    }
    std::cerr << "usage: acceptance [--list] [--only N]\n";
    return 1;
  }

  int failures = 0;
  for (const auto& c : criteria()) {
    if (only != 0 && c.id != only) continue;
    Result r;
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << c.id << " " << c.name << ": " << r.detail
              << "\n";
    failures += r.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 2;
}
