// Return-to-go targets, the learned reward surrogate and the smoothed goal
// reward used when no surrogate is trained.
//
// The surrogate regresses z-scored discounted return-to-go from a single
// normalized action and the state history it was taken under. Training
// keeps the standardization constants so raw-scale returns can be reported.
#pragma once

#include <vector>

#include "ractd/checkpoint.hpp"
#include "ractd/dataenv.hpp"
#include "ractd/network.hpp"
#include "ractd/rng.hpp"
#include "ractd/tape.hpp"
#include "ractd/types.hpp"

namespace ractd {

// rtg[t] = r[t] + gamma * rtg[t+1], computed by backward recursion.
Vec returns_to_go(const Vec& rewards, double gamma);

struct RewardModel {
  NetworkParams net;  // [action | state history] -> 1, z-scored targets
  double target_mean = 0.0;
  double target_std = 1.0;
  double holdout_mse = 0.0;  // raw-unit MSE on the held-out split

  // z-scored prediction; the training target scale.
  double predict(const Vec& action, const Vec& cond) const;
  // De-standardized, in env return units.
  double predict_raw(const Vec& action, const Vec& cond) const;
};

struct RewardTrainConfig {
  std::vector<Index> hidden = {64, 64};
  int steps = 3000;
  int batch = 64;
  double lr = 1e-3;
  double gamma = 0.99;
};

struct TrainLogRow {
  int step = 0;
  double loss = 0.0;
  double wall_ms = 0.0;
};

// Trains on (anchor action, state history) pairs with the return-to-go at
// the window's anchor step as target. Every 8th window is held out; the
// model records raw-unit MSE on that split.
RewardModel train_reward(const WindowSet& ws, const Dataset& ds, const RewardTrainConfig& cfg,
                         Rng& rng, std::vector<TrainLogRow>* log = nullptr);

// z-scored prediction as a 1-dim tape node; src must come from
// register_params(rm.net, ...) on the same tape. `action` is the
// differentiable input the distillation reward term backpropagates into.
int reward_node(Tape& tape, int src, const RewardModel& rm, int action, int cond);

// Hard goal indicator on the closed ball, for evaluation.
double sparse_goal_reward(const EnvSpec& spec, const Vec& final_state);

// Smooth stand-in for the sparse goal reward: sigmoid((radius - d) / tau)
// where d is a pseudo-Huber distance from the plan's de-normalized final
// state to the goal. 1-dim node in (0, 1), differentiable through the plan.
int goal_reward_node(Tape& tape, const EnvSpec& spec, const NormStats& stats, int plan,
                     Index state_dim, double tau = 0.1);

Checkpoint reward_checkpoint(const RewardModel& rm, int step, const std::string& config_hash);
RewardModel reward_from_checkpoint(const Checkpoint& ck);

}  // namespace ractd
