// Rollout execution for plan samplers (closed-loop action planning and
// open-loop state planning), return and mode metrics, and the NFE /
// wall-clock benchmark.
//
// Timing is measured on the monotonic clock around the sampler call only;
// every non-timing field of a result is bit-deterministic for a fixed
// (sampler config, seed).
#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "ractd/dataenv.hpp"
#include "ractd/schedule.hpp"
#include "ractd/student.hpp"
#include "ractd/teacher.hpp"
#include "ractd/types.hpp"

namespace ractd {

// One normalized plan window per call. sample() snapshots the underlying
// evaluation counter around generate(), so wrappers cannot under-report NFE.
class PlanSampler {
 public:
  virtual ~PlanSampler() = default;
  Vec sample(const Vec& cond, Rng& rng);
  // Network evaluations made by the most recent sample().
  int last_nfe() const { return last_nfe_; }
  virtual std::string name() const = 0;
  virtual Index plan_dim() const = 0;

 protected:
  virtual Vec generate(const Vec& cond, Rng& rng) = 0;
  virtual std::int64_t nfe_mark() const = 0;

 private:
  int last_nfe_ = 0;
};

// Teacher PFODE samplers. x_T = sigma_max * eps is drawn from the rollout
// rng, so samplers sharing a seed see the same terminal noise.
class HeunPlanSampler : public PlanSampler {
 public:
  HeunPlanSampler(Denoiser& den, NoiseSchedule sched, Index x_dim);
  std::string name() const override { return "teacher-heun"; }
  Index plan_dim() const override { return x_dim_; }

 protected:
  Vec generate(const Vec& cond, Rng& rng) override;
  std::int64_t nfe_mark() const override;

 private:
  Denoiser* den_;
  NoiseSchedule sched_;
  Index x_dim_;
};

class DdimPlanSampler : public PlanSampler {
 public:
  DdimPlanSampler(Denoiser& den, NoiseSchedule sched, int steps, Index x_dim);
  std::string name() const override { return "ddim-" + std::to_string(steps_); }
  Index plan_dim() const override { return x_dim_; }

 protected:
  Vec generate(const Vec& cond, Rng& rng) override;
  std::int64_t nfe_mark() const override;

 private:
  Denoiser* den_;
  NoiseSchedule sched_;
  int steps_;
  Index x_dim_;
};

class DdpmPlanSampler : public PlanSampler {
 public:
  DdpmPlanSampler(Denoiser& den, NoiseSchedule sched, int steps, Index x_dim);
  std::string name() const override { return "ddpm-" + std::to_string(steps_); }
  Index plan_dim() const override { return x_dim_; }

 protected:
  Vec generate(const Vec& cond, Rng& rng) override;
  std::int64_t nfe_mark() const override;

 private:
  Denoiser* den_;
  NoiseSchedule sched_;
  int steps_;
  Index x_dim_;
};

// Consistency student: m = 1 is the single-jump sampler, m > 1 re-noises
// along a fresh m-node grid. NFE per plan is exactly m.
class StudentPlanSampler : public PlanSampler {
 public:
  explicit StudentPlanSampler(const StudentModel& sm, int m = 1);
  std::string name() const override { return "student-" + std::to_string(m_); }
  Index plan_dim() const override { return sm_->x_dim; }

 protected:
  Vec generate(const Vec& cond, Rng& rng) override;
  std::int64_t nfe_mark() const override;

 private:
  const StudentModel* sm_;
  int m_;
};

// Scripted behavior policy dressed as a sampler: recovers the current state
// from the last history frame and tiles one scripted action across the
// window. Counts one evaluation per call.
class ScriptedPlanSampler : public PlanSampler {
 public:
  ScriptedPlanSampler(EnvSpec spec, std::string policy, NormStats stats, int c,
                      double noise_frac = 0.0);
  std::string name() const override { return "scripted-" + policy_; }
  Index plan_dim() const override;

 protected:
  Vec generate(const Vec& cond, Rng& rng) override;
  std::int64_t nfe_mark() const override { return calls_; }

 private:
  EnvSpec spec_;
  std::string policy_;
  NormStats stats_;
  int c_;
  double noise_frac_;
  std::int64_t calls_ = 0;
};

struct RolloutResult {
  double total_return = 0.0;
  std::vector<double> rewards;  // one per env step
  std::vector<int> nfe;         // one per plan, each >= 1
  std::vector<double> wall_s;   // one per plan, each > 0
  bool success = false;         // goal tasks: goal radius reached
  bool high_mode = false;       // set by mark_high_mode against a threshold

  int nfe_per_action() const;   // max over plans
  double median_wall_s() const;
};

struct ClosedLoopOptions {
  int h = 1;                   // history frames fed to the sampler
  int max_steps = 0;           // 0: run to the env horizon
  const Vec* start = nullptr;  // overrides the seeded start draw
};

// Replans every step: build the h-frame normalized history, sample a window,
// execute only its first action. A malformed plan or a sampler exception
// aborts with the failing step index.
RolloutResult closed_loop_rollout(PlanSampler& sampler, const EnvSpec& spec,
                                  const NormStats& stats, std::uint64_t seed,
                                  const ClosedLoopOptions& opt = {});

struct OpenLoopOptions {
  int max_steps = 0;           // 0: env horizon
  const Vec* start = nullptr;
};

// Samples one full state plan conditioned on [start | goal], then walks it:
// each action comes from the reverse-dynamics model on (current state, next
// planned state). A plan too short to reach the goal reports failure.
RolloutResult open_loop_rollout(PlanSampler& sampler, const ReverseDynamics& rd,
                                const EnvSpec& spec, const NormStats& stats,
                                std::uint64_t seed, const OpenLoopOptions& opt = {});

// Mean return of one scripted policy over n fresh episodes.
double scripted_mean_return(const EnvSpec& spec, const std::string& policy, int n,
                            std::uint64_t seed, double noise_frac = 0.2);

// Inter-mode valley of the bimodal return distribution: midpoint of the
// expert and medium scripted mean returns.
double mode_threshold(const EnvSpec& spec, int n = 64, std::uint64_t seed = 17);

// Flags every rollout whose return clears the threshold.
void mark_high_mode(std::vector<RolloutResult>& rollouts, double threshold);

struct ReturnHistogram {
  Vec edges;                // bins + 1, ascending
  std::vector<int> counts;  // bins
  double threshold = 0.0;
  double lo_mass = 0.0;     // fraction of returns below the threshold
  double hi_mass = 0.0;     // fraction at or above

  std::string csv() const;  // "bin_lo,bin_hi,count" rows
};

// Bins returns uniformly over their range and splits mass at the threshold.
// Requires at least 30 returns.
ReturnHistogram reward_histogram(const std::vector<double>& returns, int bins,
                                 double threshold);

// 100 * (ret - random) / (expert - random); anchors random-policy play at 0
// and the scripted expert at 100.
double normalized_score(double ret, double random_ret, double expert_ret);

struct EvalReport {
  int n = 0;
  double mean_return = 0.0;
  double se_return = 0.0;       // needs n >= 2
  double hi_fraction = 0.0;
  double lo_fraction = 0.0;
  double success_rate = 0.0;
  double threshold = 0.0;
  double normalized = std::numeric_limits<double>::quiet_NaN();  // optional
  double mean_nfe = 0.0;
  double wall_p50_s = 0.0;      // timing: excluded from determinism checks
  double wall_p90_s = 0.0;
  std::string config_hash;

  // Timing fields live under a "timing" subobject so deterministic fields
  // can be compared with the subobject erased.
  nlohmann::json to_json() const;
};

EvalReport summarize(const std::vector<RolloutResult>& rollouts, double threshold,
                     const std::string& config_hash);

// "rollout,return,nfe_per_action,median_wall_s,success,high_mode" rows.
std::string rollout_csv(const std::vector<RolloutResult>& rollouts);

struct BenchRow {
  std::string name;
  int nfe = 0;
  double median_s = 0.0;
  double speedup = 0.0;  // row-0 median / this median
};

// warmup untimed calls, then trials timed calls per sampler; median wall
// time around sample() only, single-threaded. Every sampler gets an
// identically seeded rng stream. Row 0 is the speedup reference.
std::vector<BenchRow> benchmark(const std::vector<PlanSampler*>& samplers, const Vec& cond,
                                int trials, int warmup, std::uint64_t seed);

std::string benchmark_csv(const std::vector<BenchRow>& rows);

}  // namespace ractd
