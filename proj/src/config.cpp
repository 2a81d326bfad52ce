// Config parsing, validation, canonical serialization and stage hashing.
#include "ractd/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ractd {

namespace {

void check_keys(const nlohmann::json& j, const std::string& section,
                std::initializer_list<const char*> allowed, std::vector<std::string>& errs) {
  if (!j.is_object()) {
    errs.push_back(section + ": expected an object");
    return;
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* k) { return it.key() == k; });
    if (!known) errs.push_back(section + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
void get_if(const nlohmann::json& j, const char* key, T& out, const std::string& section,
            std::vector<std::string>& errs) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const nlohmann::json::exception& e) {
    errs.push_back(section + "." + key + ": " + e.what());
  }
}

nlohmann::json teacher_json(const TeacherTrainConfig& t) {
  return {{"hidden", t.hidden},   {"steps", t.steps},
          {"batch", t.batch},     {"lr", t.lr},
          {"ema_decay", t.ema_decay}, {"p_mean", t.p_mean},
          {"p_std", t.p_std},     {"reward_weight", t.reward_weight},
          {"log_every", t.log_every}};
}

nlohmann::json reward_json(const RewardTrainConfig& r) {
  return {{"hidden", r.hidden},
          {"steps", r.steps},
          {"batch", r.batch},
          {"lr", r.lr},
          {"gamma", r.gamma}};
}

nlohmann::json distill_json(const DistillConfig& d) {
  return {{"hidden", d.hidden},
          {"steps", d.steps},
          {"batch", d.batch},
          {"lr", d.lr},
          {"lr_final", d.lr_final},
          {"ema_decay", d.ema_decay},
          {"alpha", d.alpha},
          {"beta", d.beta},
          {"reward_weight", d.reward_weight},
          {"huber_c", d.huber_c},
          {"p_mean", d.p_mean},
          {"p_std", d.p_std},
          {"solver_max_gap", d.solver_max_gap},
          {"snapshot_every", d.snapshot_every},
          {"log_every", d.log_every}};
}

nlohmann::json rd_json(const RdConfig& r) {
  return {{"steps", r.steps}, {"batch", r.batch}, {"lr", r.lr}};
}

nlohmann::json eval_json(const EvalConfig& e) {
  return {{"rollouts", e.rollouts},
          {"max_steps", e.max_steps},
          {"mode", e.mode},
          {"sampler", e.sampler},
          {"nfe", e.nfe},
          {"sampler_steps", e.sampler_steps},
          {"solver_bins", e.solver_bins},
          {"model_select", e.model_select},
          {"hist_bins", e.hist_bins},
          {"bench_trials", e.bench_trials},
          {"bench_warmup", e.bench_warmup}};
}

nlohmann::json ablate_json(const AblateConfig& a) {
  return {{"reward_weights", a.reward_weights},
          {"betas", a.betas},
          {"placements", a.placements},
          {"windows", a.windows},
          {"rollouts", a.rollouts}};
}

}  // namespace

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

EnvSpec ExperimentConfig::env_spec() const {
  EnvSpec spec = EnvSpec::by_name(env, variant);
  if (horizon > 0) spec.horizon = horizon;
  return spec;
}

NoiseSchedule ExperimentConfig::schedule() const {
  return NoiseSchedule::karras(n_bins, sigma_min, sigma_max, rho);
}

std::vector<std::pair<std::string, double>> ExperimentConfig::resolved_mix() const {
  if (!policy_mix.empty()) return policy_mix;
  if (env == "pointmass-maze") return {{"path", 1.0}};
  return {{"expert", 0.5}, {"medium", 0.5}};
}

void ExperimentConfig::validate() const {
  std::vector<std::string> errs;
  auto require = [&](bool ok, const std::string& msg) {
    if (!ok) errs.push_back(msg);
  };

  require(env == "bimodal-reach" || env == "pointmass-maze", "env: unknown name '" + env + "'");
  if (env == "pointmass-maze")
    require(variant == "umaze" || variant == "medium" || variant == "large",
            "env.variant: unknown maze '" + variant + "'");
  require(horizon >= 0, "env.horizon: must be >= 0");

  require(n_episodes >= 1, "data.n_episodes: must be >= 1");
  require(policy_noise >= 0.0, "data.policy_noise: must be >= 0");
  if (!policy_mix.empty()) {
    double total = 0.0;
    for (const auto& [tag, frac] : policy_mix) {
      require(!tag.empty(), "data.policy_mix: empty policy tag");
      require(frac >= 0.0, "data.policy_mix: negative fraction");
      total += frac;
    }
    require(std::abs(total - 1.0) <= 1e-9, "data.policy_mix: fractions must sum to 1");
  }
  require(h >= 1, "data.h: must be >= 1");
  require(c >= 1, "data.c: must be >= 1");
  require(plan_horizon >= 2, "data.plan_horizon: must be >= 2");
  if (plan_states) {
    require(env == "pointmass-maze", "data.plan_states: needs a goal env");
    require(reward_source == "goal" || distill.reward_weight == 0.0,
            "data.plan_states: state plans take the goal reward, not the learned surrogate");
  }

  require(n_bins >= 2, "schedule.n_bins: must be >= 2");
  require(sigma_min > 0.0 && sigma_max > sigma_min,
          "schedule: needs 0 < sigma_min < sigma_max");
  require(rho > 0.0, "schedule.rho: must be > 0");

  require(!teacher.hidden.empty(), "teacher.hidden: must be non-empty");
  require(teacher.steps >= 0, "teacher.steps: must be >= 0");
  require(teacher.batch >= 1, "teacher.batch: must be >= 1");
  require(teacher.lr > 0.0, "teacher.lr: must be > 0");
  require(teacher.ema_decay >= 0.0 && teacher.ema_decay < 1.0,
          "teacher.ema_decay: must be in [0, 1)");
  require(teacher.p_std > 0.0, "teacher.p_std: must be > 0");
  require(teacher.reward_weight >= 0.0, "teacher.reward_weight: must be >= 0");

  require(!reward.hidden.empty(), "reward.hidden: must be non-empty");
  require(reward.steps >= 0, "reward.steps: must be >= 0");
  require(reward.batch >= 1, "reward.batch: must be >= 1");
  require(reward.lr > 0.0, "reward.lr: must be > 0");
  require(reward.gamma >= 0.0 && reward.gamma <= 1.0, "reward.gamma: must be in [0, 1]");

  require(!distill.hidden.empty(), "distill.hidden: must be non-empty");
  require(distill.steps >= 0, "distill.steps: must be >= 0");
  require(distill.batch >= 1, "distill.batch: must be >= 1");
  require(distill.lr > 0.0, "distill.lr: must be > 0");
  require(distill.ema_decay >= 0.0 && distill.ema_decay < 1.0,
          "distill.ema_decay: must be in [0, 1)");
  require(distill.alpha >= 0.0, "distill.alpha: must be >= 0");
  require(distill.beta >= 0.0, "distill.beta: must be >= 0");
  require(distill.reward_weight >= 0.0, "distill.reward_weight: must be >= 0");
  require(distill.p_std > 0.0, "distill.p_std: must be > 0");
  require(distill.snapshot_every >= 0, "distill.snapshot_every: must be >= 0");
  require(reward_source == "model" || reward_source == "goal",
          "reward_source: must be 'model' or 'goal'");
  if (reward_source == "goal")
    require(env == "pointmass-maze", "reward_source: goal reward needs a goal env");

  require(rd.steps >= 0, "rd.steps: must be >= 0");
  require(rd.batch >= 1, "rd.batch: must be >= 1");
  require(rd.lr > 0.0, "rd.lr: must be > 0");

  require(eval.rollouts >= 2, "eval.rollouts: standard errors need >= 2");
  require(eval.max_steps >= 0, "eval.max_steps: must be >= 0");
  require(eval.mode == "closed" || eval.mode == "open", "eval.mode: must be closed or open");
  if (eval.mode == "open")
    require(plan_states, "eval.mode: open-loop eval needs plan_states data");
  const bool known_sampler = eval.sampler == "student" || eval.sampler == "teacher-heun" ||
                             eval.sampler == "ddim" || eval.sampler == "ddpm" ||
                             eval.sampler.rfind("scripted-", 0) == 0;
  require(known_sampler, "eval.sampler: unknown sampler '" + eval.sampler + "'");
  require(eval.nfe >= 1, "eval.nfe: must be >= 1");
  require(eval.sampler_steps >= 1, "eval.sampler_steps: must be >= 1");
  require(eval.solver_bins >= 2, "eval.solver_bins: must be >= 2");
  require(eval.model_select == "last" || eval.model_select == "best",
          "eval.model_select: must be last or best");
  require(eval.hist_bins >= 1, "eval.hist_bins: must be >= 1");
  require(eval.bench_trials >= 1, "eval.bench_trials: must be >= 1");
  require(eval.bench_warmup >= 0, "eval.bench_warmup: must be >= 0");

  require(ablate.rollouts >= 2, "ablate.rollouts: must be >= 2");
  for (double w : ablate.reward_weights)
    require(w >= 0.0, "ablate.reward_weights: negative weight");
  for (double b : ablate.betas) require(b >= 0.0, "ablate.betas: negative weight");
  for (const auto& p : ablate.placements)
    require(p == "none" || p == "student" || p == "teacher" || p == "both",
            "ablate.placements: unknown placement '" + p + "'");
  for (const auto& [wh, wc] : ablate.windows)
    require(wh >= 1 && wc >= 1, "ablate.windows: h and c must be >= 1");

  if (!errs.empty()) {
    std::ostringstream os;
    os << "config: " << errs.size() << " violation(s): ";
    for (std::size_t i = 0; i < errs.size(); ++i) os << (i ? "; " : "") << errs[i];
    throw std::invalid_argument(os.str());
  }
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"env", {{"name", env}, {"variant", variant}, {"horizon", horizon}}},
          {"data",
           {{"n_episodes", n_episodes},
            {"policy_noise", policy_noise},
            {"policy_mix", policy_mix},
            {"h", h},
            {"c", c},
            {"plan_states", plan_states},
            {"plan_horizon", plan_horizon}}},
          {"schedule",
           {{"n_bins", n_bins},
            {"sigma_min", sigma_min},
            {"sigma_max", sigma_max},
            {"rho", rho}}},
          {"teacher", teacher_json(teacher)},
          {"reward", reward_json(reward)},
          {"distill", distill_json(distill)},
          {"reward_source", reward_source},
          {"rd", rd_json(rd)},
          {"eval", eval_json(eval)},
          {"ablate", ablate_json(ablate)},
          {"seed", seed},
          {"out_root", out_root}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  std::vector<std::string> errs;
  check_keys(j, "config",
             {"env", "data", "schedule", "teacher", "reward", "distill", "reward_source", "rd",
              "eval", "ablate", "seed", "out_root"},
             errs);

  if (j.contains("env")) {
    const auto& e = j.at("env");
    check_keys(e, "env", {"name", "variant", "horizon"}, errs);
    get_if(e, "name", cfg.env, "env", errs);
    get_if(e, "variant", cfg.variant, "env", errs);
    get_if(e, "horizon", cfg.horizon, "env", errs);
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    check_keys(d, "data",
               {"n_episodes", "policy_noise", "policy_mix", "h", "c", "plan_states",
                "plan_horizon"},
               errs);
    get_if(d, "n_episodes", cfg.n_episodes, "data", errs);
    get_if(d, "policy_noise", cfg.policy_noise, "data", errs);
    get_if(d, "policy_mix", cfg.policy_mix, "data", errs);
    get_if(d, "h", cfg.h, "data", errs);
    get_if(d, "c", cfg.c, "data", errs);
    get_if(d, "plan_states", cfg.plan_states, "data", errs);
    get_if(d, "plan_horizon", cfg.plan_horizon, "data", errs);
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    check_keys(s, "schedule", {"n_bins", "sigma_min", "sigma_max", "rho"}, errs);
    get_if(s, "n_bins", cfg.n_bins, "schedule", errs);
    get_if(s, "sigma_min", cfg.sigma_min, "schedule", errs);
    get_if(s, "sigma_max", cfg.sigma_max, "schedule", errs);
    get_if(s, "rho", cfg.rho, "schedule", errs);
  }
  if (j.contains("teacher")) {
    const auto& t = j.at("teacher");
    check_keys(t, "teacher",
               {"hidden", "steps", "batch", "lr", "ema_decay", "p_mean", "p_std",
                "reward_weight", "log_every"},
               errs);
    get_if(t, "hidden", cfg.teacher.hidden, "teacher", errs);
    get_if(t, "steps", cfg.teacher.steps, "teacher", errs);
    get_if(t, "batch", cfg.teacher.batch, "teacher", errs);
    get_if(t, "lr", cfg.teacher.lr, "teacher", errs);
    get_if(t, "ema_decay", cfg.teacher.ema_decay, "teacher", errs);
    get_if(t, "p_mean", cfg.teacher.p_mean, "teacher", errs);
    get_if(t, "p_std", cfg.teacher.p_std, "teacher", errs);
    get_if(t, "reward_weight", cfg.teacher.reward_weight, "teacher", errs);
    get_if(t, "log_every", cfg.teacher.log_every, "teacher", errs);
  }
  if (j.contains("reward")) {
    const auto& r = j.at("reward");
    check_keys(r, "reward", {"hidden", "steps", "batch", "lr", "gamma"}, errs);
    get_if(r, "hidden", cfg.reward.hidden, "reward", errs);
    get_if(r, "steps", cfg.reward.steps, "reward", errs);
    get_if(r, "batch", cfg.reward.batch, "reward", errs);
    get_if(r, "lr", cfg.reward.lr, "reward", errs);
    get_if(r, "gamma", cfg.reward.gamma, "reward", errs);
  }
  if (j.contains("distill")) {
    const auto& d = j.at("distill");
    check_keys(d, "distill",
               {"hidden", "steps", "batch", "lr", "lr_final", "ema_decay", "alpha", "beta",
                "reward_weight", "huber_c", "p_mean", "p_std", "solver_max_gap",
                "snapshot_every", "log_every"},
               errs);
    get_if(d, "hidden", cfg.distill.hidden, "distill", errs);
    get_if(d, "steps", cfg.distill.steps, "distill", errs);
    get_if(d, "batch", cfg.distill.batch, "distill", errs);
    get_if(d, "lr", cfg.distill.lr, "distill", errs);
    get_if(d, "lr_final", cfg.distill.lr_final, "distill", errs);
    get_if(d, "ema_decay", cfg.distill.ema_decay, "distill", errs);
    get_if(d, "alpha", cfg.distill.alpha, "distill", errs);
    get_if(d, "beta", cfg.distill.beta, "distill", errs);
    get_if(d, "reward_weight", cfg.distill.reward_weight, "distill", errs);
    get_if(d, "huber_c", cfg.distill.huber_c, "distill", errs);
    get_if(d, "p_mean", cfg.distill.p_mean, "distill", errs);
    get_if(d, "p_std", cfg.distill.p_std, "distill", errs);
    get_if(d, "solver_max_gap", cfg.distill.solver_max_gap, "distill", errs);
    get_if(d, "snapshot_every", cfg.distill.snapshot_every, "distill", errs);
    get_if(d, "log_every", cfg.distill.log_every, "distill", errs);
  }
  if (j.contains("reward_source")) get_if(j, "reward_source", cfg.reward_source, "config", errs);
  if (j.contains("rd")) {
    const auto& r = j.at("rd");
    check_keys(r, "rd", {"steps", "batch", "lr"}, errs);
    get_if(r, "steps", cfg.rd.steps, "rd", errs);
    get_if(r, "batch", cfg.rd.batch, "rd", errs);
    get_if(r, "lr", cfg.rd.lr, "rd", errs);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e, "eval",
               {"rollouts", "max_steps", "mode", "sampler", "nfe", "sampler_steps",
                "solver_bins", "model_select", "hist_bins", "bench_trials", "bench_warmup"},
               errs);
    get_if(e, "rollouts", cfg.eval.rollouts, "eval", errs);
    get_if(e, "max_steps", cfg.eval.max_steps, "eval", errs);
    get_if(e, "mode", cfg.eval.mode, "eval", errs);
    get_if(e, "sampler", cfg.eval.sampler, "eval", errs);
    get_if(e, "nfe", cfg.eval.nfe, "eval", errs);
    get_if(e, "sampler_steps", cfg.eval.sampler_steps, "eval", errs);
    get_if(e, "solver_bins", cfg.eval.solver_bins, "eval", errs);
    get_if(e, "model_select", cfg.eval.model_select, "eval", errs);
    get_if(e, "hist_bins", cfg.eval.hist_bins, "eval", errs);
    get_if(e, "bench_trials", cfg.eval.bench_trials, "eval", errs);
    get_if(e, "bench_warmup", cfg.eval.bench_warmup, "eval", errs);
  }
  if (j.contains("ablate")) {
    const auto& a = j.at("ablate");
    check_keys(a, "ablate", {"reward_weights", "betas", "placements", "windows", "rollouts"},
               errs);
    get_if(a, "reward_weights", cfg.ablate.reward_weights, "ablate", errs);
    get_if(a, "betas", cfg.ablate.betas, "ablate", errs);
    get_if(a, "placements", cfg.ablate.placements, "ablate", errs);
    get_if(a, "windows", cfg.ablate.windows, "ablate", errs);
    get_if(a, "rollouts", cfg.ablate.rollouts, "ablate", errs);
  }
  get_if(j, "seed", cfg.seed, "config", errs);
  get_if(j, "out_root", cfg.out_root, "config", errs);

  if (!errs.empty()) {
    std::ostringstream os;
    os << "config: " << errs.size() << " schema violation(s): ";
    for (std::size_t i = 0; i < errs.size(); ++i) os << (i ? "; " : "") << errs[i];
    throw std::invalid_argument(os.str());
  }
  return cfg;
}

nlohmann::json ExperimentConfig::stage_json(const std::string& stage) const {
  const nlohmann::json data = {{"env", {{"name", env}, {"variant", variant}, {"horizon", horizon}}},
                               {"episodes", n_episodes},
                               {"noise", policy_noise},
                               {"mix", resolved_mix()},
                               {"seed", seed}};
  if (stage == "data") return data;

  const nlohmann::json rewardj = {{"data", data},
                                  {"windows", {{"h", h}, {"c", c}}},
                                  {"cfg", reward_json(reward)},
                                  {"seed", seed}};
  if (stage == "reward") return rewardj;

  nlohmann::json windows;
  if (plan_states)
    windows = {{"plan_horizon", plan_horizon}};
  else
    windows = {{"h", h}, {"c", c}};
  const nlohmann::json sched = {
      {"n_bins", n_bins}, {"sigma_min", sigma_min}, {"sigma_max", sigma_max}, {"rho", rho}};
  const nlohmann::json teacherj = {
      {"data", data},
      {"windows", windows},
      {"schedule", sched},
      {"cfg", teacher_json(teacher)},
      {"reward_dep", teacher.reward_weight > 0.0 ? rewardj : nlohmann::json()},
      {"seed", seed}};
  if (stage == "teacher") return teacherj;

  const nlohmann::json rdj = {{"data", data}, {"cfg", rd_json(rd)}, {"seed", seed}};
  if (stage == "rd") return rdj;

  const bool learned = distill.reward_weight > 0.0 && reward_source == "model";
  const nlohmann::json distillj = {{"teacher", teacherj},
                                   {"cfg", distill_json(distill)},
                                   {"source", reward_source},
                                   {"select", eval.model_select},
                                   {"reward_dep", learned ? rewardj : nlohmann::json()},
                                   {"seed", seed}};
  if (stage == "distill") return distillj;

  if (stage == "eval") {
    nlohmann::json target;
    if (eval.sampler == "student")
      target = distillj;
    else if (eval.sampler.rfind("scripted-", 0) == 0)
      target = data;
    else
      target = teacherj;
    return {{"target", target},
            {"cfg",
             {{"rollouts", eval.rollouts},
              {"max_steps", eval.max_steps},
              {"mode", eval.mode},
              {"sampler", eval.sampler},
              {"nfe", eval.nfe},
              {"sampler_steps", eval.sampler_steps},
              {"solver_bins", eval.solver_bins},
              {"hist_bins", eval.hist_bins}}},
            {"rd", eval.mode == "open" ? rdj : nlohmann::json()},
            {"seed", seed}};
  }
  if (stage == "bench") {
    return {{"teacher", teacherj},
            {"distill", distillj},
            {"trials", eval.bench_trials},
            {"warmup", eval.bench_warmup},
            {"sampler_steps", eval.sampler_steps},
            {"solver_bins", eval.solver_bins},
            {"nfe", eval.nfe},
            {"seed", seed}};
  }
  if (stage == "ablate") {
    return {{"distill", distillj},
            {"grid", ablate_json(ablate)},
            {"nfe", eval.nfe},
            {"mode", eval.mode},
            {"max_steps", eval.max_steps},
            {"seed", seed}};
  }
  throw std::invalid_argument("stage_json: unknown stage '" + stage + "'");
}

std::string ExperimentConfig::stage_hash(const std::string& stage) const {
  return hash_hex(fnv1a64(stage_json(stage).dump()));
}

std::string ExperimentConfig::hash() const {
  nlohmann::json j = to_json();
  j.erase("out_root");
  return hash_hex(fnv1a64(j.dump()));
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("load_config: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("load_config: " + path.string() + ": " + e.what());
  }
  ExperimentConfig cfg = ExperimentConfig::from_json(j);
  cfg.validate();
  return cfg;
}

void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_config: cannot write " + path.string());
  out << cfg.to_json().dump(2) << "\n";
}

std::filesystem::path stage_dir(const ExperimentConfig& cfg, const std::string& stage) {
  return std::filesystem::path(cfg.out_root) / (stage + "-" + cfg.stage_hash(stage));
}

}  // namespace ractd
