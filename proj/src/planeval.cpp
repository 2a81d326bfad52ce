// Rollout drivers, return metrics and the sampler benchmark.
#include "ractd/planeval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ractd {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  const double s = std::chrono::duration<double>(Clock::now() - t0).count();
  return std::max(s, 1e-9);  // keeps the wall-time > 0 invariant on coarse clocks
}

Vec draw_start(const EnvSpec& spec, Rng& rng) {
  Vec s(spec.state_dim());
  for (Index i = 0; i < s.size(); ++i) s[i] = rng.uniform(spec.start_lo[i], spec.start_hi[i]);
  return s;
}

// Oldest-first h-frame history, repeat-padded at the episode start; matches
// the training window layout.
Vec history_cond(const std::vector<Vec>& hist, int h, const NormStats& stats) {
  const Index sd = hist.front().size();
  Vec cond(static_cast<Index>(h) * sd);
  const int last = static_cast<int>(hist.size()) - 1;
  for (int k = 0; k < h; ++k) {
    const int idx = std::max(0, last - h + 1 + k);
    cond.segment(static_cast<Index>(k) * sd, sd) = stats.norm_state(hist[idx]);
  }
  return cond;
}

Vec timed_sample(PlanSampler& sampler, const Vec& cond, Rng& rng, int step, double& wall_out) {
  const auto t0 = Clock::now();
  Vec plan;
  try {
    plan = sampler.sample(cond, rng);
  } catch (const std::exception& e) {
    throw std::runtime_error("rollout: sampler '" + sampler.name() + "' failed at step " +
                             std::to_string(step) + ": " + e.what());
  }
  wall_out = seconds_since(t0);
  if (sampler.last_nfe() < 1)
    throw std::runtime_error("rollout: sampler '" + sampler.name() +
                             "' reported zero evaluations at step " + std::to_string(step));
  return plan;
}

double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const int rank = std::max(1, static_cast<int>(std::ceil(p * static_cast<double>(v.size()))));
  return v[static_cast<std::size_t>(rank - 1)];
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

Vec PlanSampler::sample(const Vec& cond, Rng& rng) {
  const std::int64_t before = nfe_mark();
  Vec out = generate(cond, rng);
  last_nfe_ = static_cast<int>(nfe_mark() - before);
  return out;
}

HeunPlanSampler::HeunPlanSampler(Denoiser& den, NoiseSchedule sched, Index x_dim)
    : den_(&den), sched_(std::move(sched)), x_dim_(x_dim) {
  if (x_dim_ < 1) throw std::invalid_argument("HeunPlanSampler: x_dim must be >= 1");
}

Vec HeunPlanSampler::generate(const Vec& cond, Rng& rng) {
  const Vec x_T = sched_.sigma_max * rng.normal_vec(x_dim_);
  return solve_pfode(*den_, x_T, sched_, cond);
}

std::int64_t HeunPlanSampler::nfe_mark() const { return den_->nfe(); }

DdimPlanSampler::DdimPlanSampler(Denoiser& den, NoiseSchedule sched, int steps, Index x_dim)
    : den_(&den), sched_(std::move(sched)), steps_(steps), x_dim_(x_dim) {
  if (steps_ < 1) throw std::invalid_argument("DdimPlanSampler: steps must be >= 1");
}

Vec DdimPlanSampler::generate(const Vec& cond, Rng& rng) {
  const Vec x_T = sched_.sigma_max * rng.normal_vec(x_dim_);
  return ddim_sample(*den_, x_T, sched_, steps_, cond);
}

std::int64_t DdimPlanSampler::nfe_mark() const { return den_->nfe(); }

DdpmPlanSampler::DdpmPlanSampler(Denoiser& den, NoiseSchedule sched, int steps, Index x_dim)
    : den_(&den), sched_(std::move(sched)), steps_(steps), x_dim_(x_dim) {
  if (steps_ < 1) throw std::invalid_argument("DdpmPlanSampler: steps must be >= 1");
}

Vec DdpmPlanSampler::generate(const Vec& cond, Rng& rng) {
  const Vec x_T = sched_.sigma_max * rng.normal_vec(x_dim_);
  return ddpm_sample(*den_, x_T, sched_, steps_, rng, cond);
}

std::int64_t DdpmPlanSampler::nfe_mark() const { return den_->nfe(); }

StudentPlanSampler::StudentPlanSampler(const StudentModel& sm, int m) : sm_(&sm), m_(m) {
  if (m_ < 1) throw std::invalid_argument("StudentPlanSampler: m must be >= 1");
}

Vec StudentPlanSampler::generate(const Vec& cond, Rng& rng) {
  const Vec x_T = sm_->schedule.sigma_max * rng.normal_vec(sm_->x_dim);
  return multi_step_sample(*sm_, x_T, m_, cond, rng);
}

std::int64_t StudentPlanSampler::nfe_mark() const { return sm_->nfe; }

ScriptedPlanSampler::ScriptedPlanSampler(EnvSpec spec, std::string policy, NormStats stats,
                                         int c, double noise_frac)
    : spec_(std::move(spec)),
      policy_(std::move(policy)),
      stats_(std::move(stats)),
      c_(c),
      noise_frac_(noise_frac) {
  if (c_ < 1) throw std::invalid_argument("ScriptedPlanSampler: c must be >= 1");
}

Index ScriptedPlanSampler::plan_dim() const {
  return static_cast<Index>(c_) * spec_.action_dim();
}

Vec ScriptedPlanSampler::generate(const Vec& cond, Rng& rng) {
  ++calls_;
  const Index sd = spec_.state_dim();
  if (cond.size() < sd || cond.size() % sd != 0)
    throw std::invalid_argument("ScriptedPlanSampler: cond is not a state history");
  const Vec s = stats_.denorm_state(cond.tail(sd));
  const Vec a = stats_.norm_action(scripted_action(spec_, policy_, s, rng, noise_frac_));
  Vec plan(plan_dim());
  for (int k = 0; k < c_; ++k) plan.segment(static_cast<Index>(k) * a.size(), a.size()) = a;
  return plan;
}

int RolloutResult::nfe_per_action() const {
  int m = 0;
  for (int v : nfe) m = std::max(m, v);
  return m;
}

double RolloutResult::median_wall_s() const { return median(wall_s); }

RolloutResult closed_loop_rollout(PlanSampler& sampler, const EnvSpec& spec,
                                  const NormStats& stats, std::uint64_t seed,
                                  const ClosedLoopOptions& opt) {
  if (opt.h < 1) throw std::invalid_argument("closed_loop_rollout: h must be >= 1");
  const Index ad = spec.action_dim();
  if (sampler.plan_dim() < ad || sampler.plan_dim() % ad != 0)
    throw std::invalid_argument("closed_loop_rollout: plan width is not a whole number of actions");

  Rng rng(seed);
  Vec s = opt.start ? *opt.start : draw_start(spec, rng);
  const int max_steps = opt.max_steps > 0 ? std::min(opt.max_steps, spec.horizon) : spec.horizon;

  RolloutResult out;
  std::vector<Vec> hist{s};
  for (int t = 0; t < max_steps; ++t) {
    const Vec cond = history_cond(hist, opt.h, stats);
    double wall = 0.0;
    const Vec plan = timed_sample(sampler, cond, rng, t, wall);
    if (plan.size() != sampler.plan_dim())
      throw std::runtime_error("closed_loop_rollout: malformed plan at step " +
                               std::to_string(t));
    out.nfe.push_back(sampler.last_nfe());
    out.wall_s.push_back(wall);

    const Vec a = stats.denorm_action(plan.head(ad));
    const StepResult r =
        env_step(spec, s, a, t, spec.process_noise > 0.0 ? &rng : nullptr);
    out.rewards.push_back(r.reward);
    s = r.next;
    hist.push_back(s);
    if (spec.name == "pointmass-maze" && in_zone(s, spec.goal, spec.goal_radius))
      out.success = true;
    if (r.done) break;
  }
  out.total_return = std::accumulate(out.rewards.begin(), out.rewards.end(), 0.0);
  return out;
}

RolloutResult open_loop_rollout(PlanSampler& sampler, const ReverseDynamics& rd,
                                const EnvSpec& spec, const NormStats& stats,
                                std::uint64_t seed, const OpenLoopOptions& opt) {
  const Index sd = spec.state_dim();
  if (spec.goal.size() != sd)
    throw std::invalid_argument("open_loop_rollout: env has no goal to condition on");
  if (sampler.plan_dim() < 2 * sd || sampler.plan_dim() % sd != 0)
    throw std::invalid_argument("open_loop_rollout: plan width is not a state sequence");

  Rng rng(seed);
  Vec s = opt.start ? *opt.start : draw_start(spec, rng);

  Vec cond(2 * sd);
  cond.head(sd) = stats.norm_state(s);
  cond.tail(sd) = stats.norm_state(spec.goal);

  double wall = 0.0;
  const Vec plan = timed_sample(sampler, cond, rng, 0, wall);
  if (plan.size() != sampler.plan_dim())
    throw std::runtime_error("open_loop_rollout: malformed plan at step 0");

  RolloutResult out;
  out.nfe.push_back(sampler.last_nfe());
  out.wall_s.push_back(wall);

  const int frames = static_cast<int>(plan.size() / sd);
  const int max_steps = opt.max_steps > 0 ? std::min(opt.max_steps, spec.horizon) : spec.horizon;
  const int steps = std::min(frames - 1, max_steps);
  for (int t = 0; t < steps; ++t) {
    const Vec target =
        stats.denorm_state(plan.segment(static_cast<Index>(t + 1) * sd, sd));
    const Vec a = reverse_action(rd, s, target);
    const StepResult r =
        env_step(spec, s, a, t, spec.process_noise > 0.0 ? &rng : nullptr);
    out.rewards.push_back(r.reward);
    s = r.next;
    if (in_zone(s, spec.goal, spec.goal_radius)) {
      out.success = true;
      break;
    }
    if (r.done) break;
  }
  out.total_return = std::accumulate(out.rewards.begin(), out.rewards.end(), 0.0);
  return out;
}

double scripted_mean_return(const EnvSpec& spec, const std::string& policy, int n,
                            std::uint64_t seed, double noise_frac) {
  if (n < 1) throw std::invalid_argument("scripted_mean_return: n must be >= 1");
  GenConfig gen;
  gen.n_episodes = n;
  gen.policy_mix = {{policy, 1.0}};
  gen.policy_noise = noise_frac;
  Rng rng(seed);
  const Dataset ds = gen_offline_dataset(spec, gen, rng);
  double sum = 0.0;
  for (const auto& ep : ds.episodes) sum += episode_return(ep);
  return sum / static_cast<double>(ds.episodes.size());
}

double mode_threshold(const EnvSpec& spec, int n, std::uint64_t seed) {
  const double hi = scripted_mean_return(spec, "expert", n, seed);
  const double lo = scripted_mean_return(spec, "medium", n, seed + 1);
  return 0.5 * (hi + lo);
}

void mark_high_mode(std::vector<RolloutResult>& rollouts, double threshold) {
  for (auto& r : rollouts) r.high_mode = r.total_return >= threshold;
}

std::string ReturnHistogram::csv() const {
  std::ostringstream os;
  os << "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < counts.size(); ++b)
    os << edges[static_cast<Index>(b)] << "," << edges[static_cast<Index>(b) + 1] << ","
       << counts[b] << "\n";
  return os.str();
}

ReturnHistogram reward_histogram(const std::vector<double>& returns, int bins,
                                 double threshold) {
  if (static_cast<int>(returns.size()) < 30)
    throw std::invalid_argument("reward_histogram: needs at least 30 returns");
  if (bins < 1) throw std::invalid_argument("reward_histogram: bins must be >= 1");

  double lo = *std::min_element(returns.begin(), returns.end());
  double hi = *std::max_element(returns.begin(), returns.end());
  if (hi - lo < 1e-12) {  // degenerate: widen so every return lands in one bin
    lo -= 0.5;
    hi += 0.5;
  }

  ReturnHistogram h;
  h.threshold = threshold;
  h.edges.resize(bins + 1);
  for (int b = 0; b <= bins; ++b)
    h.edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
  h.counts.assign(static_cast<std::size_t>(bins), 0);

  int above = 0;
  for (double r : returns) {
    int b = static_cast<int>(std::floor((r - lo) / (hi - lo) * bins));
    b = std::clamp(b, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
    if (r >= threshold) ++above;
  }
  h.hi_mass = static_cast<double>(above) / static_cast<double>(returns.size());
  h.lo_mass = 1.0 - h.hi_mass;
  return h;
}

double normalized_score(double ret, double random_ret, double expert_ret) {
  const double span = expert_ret - random_ret;
  if (std::abs(span) < 1e-12)
    throw std::invalid_argument("normalized_score: expert and random returns coincide");
  return 100.0 * (ret - random_ret) / span;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j{{"n", n},
                   {"mean_return", mean_return},
                   {"se_return", se_return},
                   {"hi_fraction", hi_fraction},
                   {"lo_fraction", lo_fraction},
                   {"success_rate", success_rate},
                   {"threshold", threshold},
                   {"mean_nfe", mean_nfe},
                   {"config_hash", config_hash}};
  if (std::isfinite(normalized)) j["normalized"] = normalized;
  j["timing"] = {{"wall_p50_s", wall_p50_s}, {"wall_p90_s", wall_p90_s}};
  return j;
}

EvalReport summarize(const std::vector<RolloutResult>& rollouts, double threshold,
                     const std::string& config_hash) {
  if (rollouts.size() < 2)
    throw std::invalid_argument("summarize: standard error needs at least 2 rollouts");

  EvalReport rep;
  rep.n = static_cast<int>(rollouts.size());
  rep.threshold = threshold;
  rep.config_hash = config_hash;

  double sum = 0.0;
  std::vector<double> walls;
  for (const auto& r : rollouts) {
    sum += r.total_return;
    rep.hi_fraction += r.total_return >= threshold ? 1.0 : 0.0;
    rep.success_rate += r.success ? 1.0 : 0.0;
    rep.mean_nfe += static_cast<double>(r.nfe_per_action());
    walls.push_back(r.median_wall_s());
  }
  const double n = static_cast<double>(rep.n);
  rep.mean_return = sum / n;
  rep.hi_fraction /= n;
  rep.lo_fraction = 1.0 - rep.hi_fraction;
  rep.success_rate /= n;
  rep.mean_nfe /= n;

  double ss = 0.0;
  for (const auto& r : rollouts) {
    const double d = r.total_return - rep.mean_return;
    ss += d * d;
  }
  rep.se_return = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  rep.wall_p50_s = percentile(walls, 0.5);
  rep.wall_p90_s = percentile(walls, 0.9);
  return rep;
}

std::string rollout_csv(const std::vector<RolloutResult>& rollouts) {
  std::ostringstream os;
  os << "rollout,return,nfe_per_action,median_wall_s,success,high_mode\n";
  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    const auto& r = rollouts[i];
    os << i << "," << r.total_return << "," << r.nfe_per_action() << "," << r.median_wall_s()
       << "," << (r.success ? 1 : 0) << "," << (r.high_mode ? 1 : 0) << "\n";
  }
  return os.str();
}

std::vector<BenchRow> benchmark(const std::vector<PlanSampler*>& samplers, const Vec& cond,
                                int trials, int warmup, std::uint64_t seed) {
  if (samplers.empty()) throw std::invalid_argument("benchmark: no samplers");
  if (trials < 1) throw std::invalid_argument("benchmark: trials must be >= 1");

  std::vector<BenchRow> rows;
  for (PlanSampler* sp : samplers) {
    Rng rng(seed);
    for (int w = 0; w < warmup; ++w) sp->sample(cond, rng);
    std::vector<double> times;
    int nfe = 0;
    for (int t = 0; t < trials; ++t) {
      const auto t0 = Clock::now();
      sp->sample(cond, rng);
      times.push_back(seconds_since(t0));
      nfe = sp->last_nfe();
    }
    BenchRow row;
    row.name = sp->name();
    row.nfe = nfe;
    row.median_s = median(times);
    rows.push_back(std::move(row));
  }
  for (auto& r : rows) r.speedup = rows.front().median_s / r.median_s;
  return rows;
}

std::string benchmark_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  os << "sampler,nfe,median_s,speedup\n";
  for (const auto& r : rows)
    os << r.name << "," << r.nfe << "," << r.median_s << "," << r.speedup << "\n";
  return os.str();
}

}  // namespace ractd
