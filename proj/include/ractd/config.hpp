// Experiment configuration: one JSON file drives the whole pipeline.
//
// Stage outputs are content-addressed: each stage hashes exactly the
// sub-config (plus upstream stage hashes) that determines its artifact
// bytes, so re-runs reuse unchanged dependencies and an ablation grid
// shares one teacher across cells.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ractd/dataenv.hpp"
#include "ractd/reward.hpp"
#include "ractd/schedule.hpp"
#include "ractd/student.hpp"
#include "ractd/teacher.hpp"

namespace ractd {

std::uint64_t fnv1a64(std::string_view s);
std::string hash_hex(std::uint64_t h);  // 16 lowercase hex digits

struct RdConfig {
  int steps = 1200;
  int batch = 64;
  double lr = 1e-3;
};

struct EvalConfig {
  int rollouts = 100;
  int max_steps = 0;                  // 0: env horizon
  std::string mode = "closed";        // closed | open
  std::string sampler = "student";    // student | teacher-heun | ddim | ddpm | scripted-<policy>
  int nfe = 1;                        // student jumps per plan
  int sampler_steps = 15;             // ddim / ddpm evaluations per plan
  int solver_bins = 41;               // heun solve grid; NFE = 2 (bins - 1) - 1
  std::string model_select = "last";  // last | best (probe-evaluated snapshots)
  int hist_bins = 20;
  int bench_trials = 25;
  int bench_warmup = 3;
};

struct AblateConfig {
  std::vector<double> reward_weights = {0.0, 0.8};
  std::vector<double> betas = {1.0};
  std::vector<std::string> placements = {"student"};  // none | student | teacher | both
  std::vector<std::pair<int, int>> windows;           // (h, c); empty: config values
  int rollouts = 32;
};

struct ExperimentConfig {
  std::string env = "bimodal-reach";
  std::string variant = "umaze";  // maze only
  int horizon = 0;                // > 0 overrides the env default

  int n_episodes = 400;
  double policy_noise = 0.2;
  std::vector<std::pair<std::string, double>> policy_mix;  // empty: env default
  int h = 1;
  int c = 8;
  bool plan_states = false;  // maze open-loop: model full state plans
  int plan_horizon = 32;

  int n_bins = 80;
  double sigma_min = 0.002;
  double sigma_max = 20.0;
  double rho = 7.0;

  TeacherTrainConfig teacher;
  RewardTrainConfig reward;
  DistillConfig distill;
  std::string reward_source = "model";  // model | goal
  RdConfig rd;
  EvalConfig eval;
  AblateConfig ablate;

  std::uint64_t seed = 1;
  std::string out_root = "runs";  // excluded from every hash

  EnvSpec env_spec() const;  // horizon override applied
  NoiseSchedule schedule() const;
  // Per-env default when policy_mix is empty: bimodal 50/50 expert/medium,
  // maze all "path".
  std::vector<std::pair<std::string, double>> resolved_mix() const;

  // Throws std::invalid_argument listing every violation.
  void validate() const;
  nlohmann::json to_json() const;  // round-trips losslessly through from_json
  // Deep-merges onto defaults; unknown keys are schema violations.
  static ExperimentConfig from_json(const nlohmann::json& j);

  // stage: data | reward | teacher | rd | distill | eval | bench. The json
  // nests every upstream stage the artifact depends on.
  nlohmann::json stage_json(const std::string& stage) const;
  std::string stage_hash(const std::string& stage) const;
  std::string hash() const;  // whole config minus out_root
};

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path);

// out_root/<stage>-<hash>
std::filesystem::path stage_dir(const ExperimentConfig& cfg, const std::string& stage);

}  // namespace ractd
