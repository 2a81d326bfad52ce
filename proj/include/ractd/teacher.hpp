// Preconditioned diffusion teacher over plan windows, denoising
// score-matching training, and the reference samplers: Heun integration of
// the probability-flow ODE, deterministic Euler (ddim) and Euler-ancestral
// (ddpm).
//
// Every sampler draws its network through the Denoiser interface, whose call
// operator is the single place evaluations are counted.
#pragma once

#include <functional>
#include <vector>

#include "ractd/checkpoint.hpp"
#include "ractd/dataenv.hpp"
#include "ractd/network.hpp"
#include "ractd/oracle.hpp"
#include "ractd/reward.hpp"
#include "ractd/rng.hpp"
#include "ractd/schedule.hpp"
#include "ractd/tape.hpp"
#include "ractd/types.hpp"

namespace ractd {

struct TeacherModel {
  NetworkParams net;  // raw F; input [c_in x | cond | time features]
  NoiseSchedule schedule;
  Preconditioner pre;
  Index x_dim = 0;
  Index cond_dim = 0;
  int time_pairs = 4;

  Vec time_features(double sigma) const;
  // c_skip x + c_out F(c_in x, ...); exactly x at sigma = 0 (no net call).
  Vec denoise(const Vec& x, double sigma, const Vec& cond) const;
};

TeacherModel make_teacher(Index x_dim, Index cond_dim, const std::vector<Index>& hidden,
                          const NoiseSchedule& sched, Rng& rng);

// On-tape denoise; bit-identical to TeacherModel::denoise. src must come
// from register_params(tm.net, ...) on the same tape.
int teacher_denoise_node(Tape& tape, int src, const TeacherModel& tm, int x, double sigma,
                         const Vec& cond);

// Counts network evaluations. sigma == 0 short-circuits to the identity
// without counting: the preconditioner pins D(x, 0) = x with no net call.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  Vec operator()(const Vec& x, double sigma, const Vec& cond);
  int nfe() const { return nfe_; }
  void reset_nfe() { nfe_ = 0; }

 protected:
  virtual Vec eval(const Vec& x, double sigma, const Vec& cond) = 0;

 private:
  int nfe_ = 0;
};

class TeacherDenoiser : public Denoiser {
 public:
  explicit TeacherDenoiser(const TeacherModel& model) : model_(&model) {}

 protected:
  Vec eval(const Vec& x, double sigma, const Vec& cond) override {
    return model_->denoise(x, sigma, cond);
  }

 private:
  const TeacherModel* model_;
};

// Exact posterior mean under a Gaussian mixture; ignores cond.
class OracleDenoiser : public Denoiser {
 public:
  explicit OracleDenoiser(GaussianMixture gmm) : gmm_(std::move(gmm)) {}
  const GaussianMixture& gmm() const { return gmm_; }

 protected:
  Vec eval(const Vec& x, double sigma, const Vec&) override {
    return gmm_posterior_mean(gmm_, x, sigma);
  }

 private:
  GaussianMixture gmm_;
};

// One step of the PFODE dx/dsigma = (x - D(x, sigma)) / sigma. Second-order
// Heun, except a step to sigma 0 is plain Euler (the correction would need
// D at 0, which is the identity anyway).
Vec heun_step(Denoiser& den, const Vec& x, double sigma_from, double sigma_to, const Vec& cond);

// Integrates along the schedule nodes sigma_0 .. sigma_{N-2}, then one Euler
// step to 0; the sigma_min node is dropped in favor of the terminal step.
// Cost: exactly 2(N-1) - 1 evaluations; N = 2 is a single Euler step.
Vec solve_pfode(Denoiser& den, const Vec& x_T, const NoiseSchedule& sched, const Vec& cond);

// Deterministic Euler on a fresh `steps`-node grid with the schedule's
// endpoint parameters. Cost: exactly `steps` evaluations.
Vec ddim_sample(Denoiser& den, const Vec& x_T, const NoiseSchedule& sched, int steps,
                const Vec& cond);

// Euler-ancestral: each step splits sigma_next into a deterministic part and
// fresh noise. Cost: exactly `steps` evaluations.
Vec ddpm_sample(Denoiser& den, const Vec& x_T, const NoiseSchedule& sched, int steps, Rng& rng,
                const Vec& cond);

struct DsmBatch {
  std::vector<Vec> x0, cond, noise;
  std::vector<double> sigma;
  int size() const { return static_cast<int>(x0.size()); }
};

DsmBatch sample_dsm_batch(const WindowSet& ws, int batch, double p_mean, double p_std,
                          const NoiseSchedule& sched, Rng& rng);

// Emits D(x0 + sigma eps, sigma) for one batch element as a tape node.
using DenoiseNodeFn = std::function<int(Tape&, int x, double sigma, const Vec& cond)>;

// mean_b ||D_b - x0_b||^2 / (c_out(sigma_b)^2 dim): the denoising loss with
// the variance-normalizing weight, shared by teacher and student training.
int dsm_loss_node(Tape& tape, const DsmBatch& batch, const Preconditioner& pre,
                  const DenoiseNodeFn& denoise);

struct TeacherLogRow {
  int step = 0;
  double dsm = 0.0;
  double reward = 0.0;  // mean -R_hat before weighting; 0 when disabled
  double total = 0.0;
  double wall_ms = 0.0;
};

struct TeacherTrainConfig {
  std::vector<Index> hidden = {128, 128, 128};
  int steps = 4000;
  int batch = 64;
  double lr = 1e-3;
  double ema_decay = 0.999;
  double p_mean = -1.2;
  double p_std = 1.2;
  double reward_weight = 0.0;  // > 0 turns on the reward-aware variant
  int log_every = 100;
};

// Denoising score matching with EMA weights; the returned model carries the
// EMA. reward_weight > 0 additionally pushes the sigma_max denoising of
// fresh noise toward high predicted return (needs `reward`).
TeacherModel train_teacher(const WindowSet& ws, const NoiseSchedule& sched,
                           const TeacherTrainConfig& cfg, Rng& rng,
                           const RewardModel* reward = nullptr,
                           std::vector<TeacherLogRow>* log = nullptr);

Checkpoint teacher_checkpoint(const TeacherModel& tm, int step, const std::string& config_hash);
TeacherModel teacher_from_checkpoint(const Checkpoint& ck);

}  // namespace ractd
