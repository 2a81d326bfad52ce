// One-step student distilled from a diffusion teacher.
//
// The student's jump G(x, t, s) = (s/t) x + (1 - s/t) g(x, t, s) moves a
// noisy plan from level t to level s in a single network call; g is
// preconditioned at level t like the teacher's denoiser. G(x, t, t) = x by
// construction with no network call, and s > t is an error.
//
// Training mixes three terms: trajectory consistency against the teacher's
// ODE step (compared through a frozen snapshot of the student itself),
// plain denoising on G(., t, 0), and an optional reward term on one-step
// generations from fresh terminal noise.
#pragma once

#include <vector>

#include "ractd/checkpoint.hpp"
#include "ractd/dataenv.hpp"
#include "ractd/network.hpp"
#include "ractd/reward.hpp"
#include "ractd/rng.hpp"
#include "ractd/schedule.hpp"
#include "ractd/tape.hpp"
#include "ractd/teacher.hpp"
#include "ractd/types.hpp"

namespace ractd {

struct StudentModel {
  NetworkParams net;  // raw g net; input [c_in(t) x | cond | t features | s/t features]
  NoiseSchedule schedule;
  Preconditioner pre;
  Index x_dim = 0;
  Index cond_dim = 0;
  int time_pairs = 4;
  mutable int nfe = 0;  // network calls made by jump()

  Vec time_features(double t, double s) const;
  // G(x, t, s). s == t returns x without touching the net or the counter.
  Vec jump(const Vec& x, double t, double s, const Vec& cond) const;
};

StudentModel make_student(Index x_dim, Index cond_dim, const std::vector<Index>& hidden,
                          const NoiseSchedule& sched, Rng& rng);

// On-tape jump; bit-identical values to StudentModel::jump. Does not count
// evaluations. src must come from register_params(sm.net, ...) on this tape.
int jump_node(Tape& tape, int src, const StudentModel& sm, int x, double t, double s,
              const Vec& cond);

// Ascending-grid index triple k < u < t for trajectory-consistency training:
// t uniform over {2..n_bins}, u over {1..t-1}, k over {0..u-1} (0 is the
// terminal level).
struct Triple {
  int t_idx = 0;
  int u_idx = 0;
  int k_idx = 0;
};
Triple sample_triple(const NoiseSchedule& sched, Rng& rng);

struct CtmSample {
  Vec x0, cond, noise;
  Triple idx;                        // grid indices of the levels below
  double t = 0.0, u = 0.0, k = 0.0;  // sigma levels, t > u > k >= 0
};
std::vector<CtmSample> sample_ctm_batch(const WindowSet& ws, const NoiseSchedule& sched,
                                        int batch, Rng& rng);

// mean_b pseudo_huber( G_live(x_t, t -> k) then G_sg(k -> 0),
//                      teacher ODE solve t -> u, then G_sg(u -> k -> 0) ).
// The teacher solve takes Heun steps spanning at most solver_max_gap grid
// cells each (<= 0 means one step across the whole t -> u gap). The
// reference path is built off the tape; the sg jump applied to the live
// path uses frozen parameters but still passes adjoints to its input.
int ctm_loss_node(Tape& tape, int live_src, const StudentModel& live, int sg_src,
                  const StudentModel& sg, Denoiser& teacher, const NoiseSchedule& sched,
                  int solver_max_gap, const std::vector<CtmSample>& batch, double huber_c);

// The shared denoising loss with G(., sigma, 0) as the denoiser.
int student_dsm_loss_node(Tape& tape, int live_src, const StudentModel& live,
                          const DsmBatch& batch);

// mean_b of -R_hat(first action of G(x_T_b, sigma_max, 0), cond_b),
// z-scored scale.
int reward_term_node(Tape& tape, int live_src, const StudentModel& live, int reward_src,
                     const RewardModel& rm, Index action_dim, const std::vector<Vec>& x_T,
                     const std::vector<Vec>& cond);

// mean_b of -soft goal reward of the one-step plan; for goal envs with no
// learned surrogate.
int goal_reward_term_node(Tape& tape, int live_src, const StudentModel& live,
                          const EnvSpec& spec, const NormStats& stats,
                          const std::vector<Vec>& x_T, const std::vector<Vec>& cond);

struct DistillConfig {
  std::vector<Index> hidden = {128, 128, 128};
  int steps = 6000;
  int batch = 32;
  double lr = 1e-4;
  double lr_final = -1.0;  // >= 0 turns on cosine decay from lr to this
  double ema_decay = 0.999;
  double alpha = 1.0;          // trajectory-consistency weight
  double beta = 1.0;           // denoising weight
  double reward_weight = 0.8;  // sigma_r
  double huber_c = -1.0;  // < 0 picks default_huber_c(x_dim)
  // Noise-level draw for the denoising term. Tighter than the teacher's
  // (-1.2, 1.2): at mid sigmas the posterior mean and the ODE endpoint
  // disagree on multi-modal data, and sampling there blurs the one-step map.
  double p_mean = -1.8;
  double p_std = 0.8;
  int solver_max_gap = 4;  // grid cells per teacher Heun step; <= 0 spans t -> u
  int snapshot_every = 0;  // > 0: record EMA weights every so many steps
  int log_every = 100;
};

struct DistillLogRow {
  int step = 0;
  double ctm = 0.0;
  double dsm = 0.0;
  double reward = 0.0;
  double total = 0.0;
  double wall_ms = 0.0;
};

// Distills `teacher` into a fresh one-step student; the returned model
// carries EMA weights. Reward shaping comes from `rm` (learned surrogate) or
// `goal_env` (smoothed goal reward), exactly one when reward_weight > 0.
// reward_weight == 0 draws no reward noise, so the run is bit-identical to
// plain consistency-trajectory distillation. `snapshots` collects
// (step, EMA weights) every cfg.snapshot_every steps plus the final state;
// recording draws nothing from rng.
StudentModel distill(const WindowSet& ws, Denoiser& teacher, const NoiseSchedule& sched,
                     const DistillConfig& cfg, Rng& rng, const RewardModel* rm = nullptr,
                     const EnvSpec* goal_env = nullptr,
                     std::vector<DistillLogRow>* log = nullptr,
                     std::vector<std::pair<int, Vec>>* snapshots = nullptr);

// G(x_T, sigma_max, 0): one network call.
Vec one_step_sample(const StudentModel& sm, const Vec& x_T, const Vec& cond);

// m-step refinement: jump to 0, then m-1 rounds of re-noising to a lower
// level and jumping back to 0. Exactly m network calls; m = 1 is bit-equal
// to one_step_sample and draws nothing from rng.
Vec multi_step_sample(const StudentModel& sm, const Vec& x_T, int m, const Vec& cond, Rng& rng);

Checkpoint student_checkpoint(const StudentModel& sm, int step, const std::string& config_hash);
StudentModel student_from_checkpoint(const Checkpoint& ck);

}  // namespace ractd
