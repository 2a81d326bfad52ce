// Synthetic control environments, scripted data collection, dataset
// serialization and plan-window extraction.
//
// Two families:
//   bimodal-reach    2-D point mass, two reward zones with rates 10 and 1;
//                    scripted experts produce a bimodal return distribution.
//   pointmass-maze   2-D point mass with axis-aligned walls and a sparse
//                    goal; variants umaze/medium/large with growing horizon.
#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ractd/network.hpp"
#include "ractd/rng.hpp"
#include "ractd/types.hpp"

namespace ractd {

struct EnvSpec {
  std::string name;     // "bimodal-reach" | "pointmass-maze"
  std::string variant;  // maze: "umaze" | "medium" | "large"
  int horizon = 32;
  double action_max = 0.5;  // per-axis action bound
  double process_noise = 0.0;

  Vec start_lo, start_hi;     // uniform start box
  Vec bounds_lo, bounds_hi;   // position clamp box

  // bimodal-reach
  Vec zone_hi, zone_lo;
  double zone_radius = 0.5;
  double rate_hi = 10.0;
  double rate_lo = 1.0;

  // pointmass-maze
  std::vector<std::array<double, 4>> walls;  // x_lo, y_lo, x_hi, y_hi
  Vec goal;
  double goal_radius = 0.35;
  bool terminate_on_goal = false;

  int state_dim() const { return 2; }
  int action_dim() const { return 2; }

  static EnvSpec bimodal_reach();
  static EnvSpec pointmass_maze(const std::string& variant);
  static EnvSpec by_name(const std::string& name, const std::string& variant);

  nlohmann::json to_json() const;
  static EnvSpec from_json(const nlohmann::json& j);
  bool operator==(const EnvSpec& o) const { return to_json() == o.to_json(); }
};

struct StepResult {
  Vec next;
  double reward = 0.0;
  bool done = false;
  bool clamped = false;  // action exceeded the bound and was cut
};

// One transition. Walls block motion (axis-decomposed fallback), positions
// stay inside the bounds box. `step_index` is 0-based; done fires at the
// horizon or, if configured, on goal hit. rng may be null when
// process_noise == 0.
StepResult env_step(const EnvSpec& spec, const Vec& s, const Vec& a, int step_index,
                    Rng* rng = nullptr);

bool in_zone(const Vec& pos, const Vec& center, double radius);

struct EpisodeRecord {
  Mat states;   // T x state_dim
  Mat actions;  // T x action_dim
  Vec rewards;  // T
  std::string tag;
};

double episode_return(const EpisodeRecord& ep);

struct Dataset {
  EnvSpec spec;
  std::vector<EpisodeRecord> episodes;
  std::string config_hash;
  nlohmann::json stats;  // per-dimension moments plus return summary
};

struct GenConfig {
  int n_episodes = 400;
  // (policy tag, fraction); fractions sum to 1. Episodes are assigned by
  // count, not by coin flip, so the mix is exact.
  std::vector<std::pair<std::string, double>> policy_mix = {{"expert", 0.5}, {"medium", 0.5}};
  double policy_noise = 0.2;  // uniform action jitter as a fraction of action_max
};

// Scripted behavior policies. bimodal-reach: "expert" (high zone), "medium"
// (low zone), "random". pointmass-maze: "path" (grid-BFS waypoints to the
// goal), "random".
Vec scripted_action(const EnvSpec& spec, const std::string& policy, const Vec& s, Rng& rng,
                    double noise_frac);

// Waypoint planner used by the maze "path" policy and available to tests.
std::vector<Vec> maze_bfs_waypoints(const EnvSpec& spec, const Vec& from, const Vec& to);

Dataset gen_offline_dataset(const EnvSpec& spec, const GenConfig& gen, Rng& rng);

nlohmann::json dataset_stats(const Dataset& ds);

// Newline-delimited: a header object, then one episode object per line.
// write -> read -> write reproduces the file byte for byte.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

struct NormStats {
  Vec s_mean, s_std, a_mean, a_std;  // stds floored at 1e-6

  Vec norm_state(const Vec& s) const;
  Vec denorm_state(const Vec& s) const;
  Vec norm_action(const Vec& a) const;
  Vec denorm_action(const Vec& a) const;

  nlohmann::json to_json() const;
  static NormStats from_json(const nlohmann::json& j);
};

NormStats compute_norm_stats(const Dataset& ds);

struct PlanWindow {
  Vec x;     // normalized target: c actions (action mode) or full state plan
  Vec cond;  // normalized conditioning: h-frame state history, or [start|goal]
  bool padded = false;
  int episode = 0;
  int anchor = 0;
};

struct WindowSet {
  std::vector<PlanWindow> windows;
  NormStats stats;
  int h = 1, c = 1;
  int state_dim = 0, action_dim = 0;
  Index x_dim() const { return windows.empty() ? 0 : windows.front().x.size(); }
  Index cond_dim() const { return windows.empty() ? 0 : windows.front().cond.size(); }
};

// Action-horizon windows: for each anchor n, x = actions[n .. n+c) and cond =
// states[n-h+1 .. n], history padded by repeating the first frame. Each
// episode of length L yields L - c + 1 windows. Throws if c exceeds the
// shortest episode.
WindowSet window_dataset(const Dataset& ds, int h, int c);

// State-planning windows (maze): x = states[0 .. horizon), cond =
// [s_0 | goal]. Requires every episode to be at least `horizon` long.
WindowSet plan_state_windows(const Dataset& ds, int horizon);

struct ReverseDynamics {
  NetworkParams net;  // [norm s | norm s'] -> norm a
  NormStats stats;
};

ReverseDynamics train_reverse_dynamics(const Dataset& ds, int steps, int batch, double lr,
                                       Rng& rng);
Vec reverse_action(const ReverseDynamics& rd, const Vec& s, const Vec& s_next);

}  // namespace ractd
