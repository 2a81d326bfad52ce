#include "ractd/reward.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "ractd/optim.hpp"
#include "ractd/schedule.hpp"

namespace ractd {

Vec returns_to_go(const Vec& rewards, double gamma) {
  Vec rtg(rewards.size());
  double acc = 0.0;
  for (Index t = rewards.size() - 1; t >= 0; --t) {
    acc = rewards[t] + gamma * acc;
    rtg[t] = acc;
  }
  return rtg;
}

double RewardModel::predict(const Vec& action, const Vec& cond) const {
  return mlp_eval(net, action, cond)[0];
}

double RewardModel::predict_raw(const Vec& action, const Vec& cond) const {
  return predict(action, cond) * target_std + target_mean;
}

RewardModel train_reward(const WindowSet& ws, const Dataset& ds, const RewardTrainConfig& cfg,
                         Rng& rng, std::vector<TrainLogRow>* log) {
  if (ws.windows.empty()) throw std::invalid_argument("train_reward: no windows");
  const Index a_dim = ws.action_dim;

  std::vector<double> targets(ws.windows.size());
  std::vector<Vec> rtg_cache(ds.episodes.size());
  for (std::size_t e = 0; e < ds.episodes.size(); ++e)
    rtg_cache[e] = returns_to_go(ds.episodes[e].rewards, cfg.gamma);
  double mean = 0.0;
  for (std::size_t i = 0; i < ws.windows.size(); ++i) {
    const auto& w = ws.windows[i];
    targets[i] = rtg_cache[static_cast<std::size_t>(w.episode)][w.anchor];
    mean += targets[i];
  }
  mean /= static_cast<double>(targets.size());
  double var = 0.0;
  for (const double t : targets) var += (t - mean) * (t - mean);
  var /= static_cast<double>(targets.size());

  std::vector<std::size_t> train_idx, held_idx;
  for (std::size_t i = 0; i < ws.windows.size(); ++i)
    (i % 8 == 7 ? held_idx : train_idx).push_back(i);
  if (train_idx.empty()) train_idx = held_idx;

  RewardModel rm;
  rm.target_mean = mean;
  rm.target_std = std::max(std::sqrt(var), 1e-8);
  rm.net = make_mlp(a_dim, ws.cond_dim(), cfg.hidden, 1, Activation::Mish);
  rm.net.init_uniform(rng);
  AdamState opt = AdamState::make(rm.net.n_params(), cfg.lr);

  const auto t0 = std::chrono::steady_clock::now();
  for (int step = 0; step < cfg.steps; ++step) {
    Tape tape;
    const int src = tape.register_params(rm.net, true);
    std::vector<int> losses;
    losses.reserve(static_cast<std::size_t>(cfg.batch));
    for (int b = 0; b < cfg.batch; ++b) {
      const auto i = train_idx[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(train_idx.size()) - 1))];
      const auto& w = ws.windows[i];
      const int pred = reward_node(tape, src, rm, tape.constant(w.x.head(a_dim)),
                                   tape.constant(w.cond));
      const double z = (targets[i] - rm.target_mean) / rm.target_std;
      losses.push_back(tape.squared_dist(pred, tape.constant(Vec::Constant(1, z))));
    }
    const int loss = tape.reduce_mean(tape.concat(losses));
    tape.backward(loss);
    adam_step(opt, rm.net.flat, tape.param_grad(src));
    if (log && (step % 100 == 0 || step + 1 == cfg.steps)) {
      const double ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
      log->push_back({step, tape.scalar(loss), ms});
    }
  }

  double se = 0.0;
  for (const std::size_t i : held_idx) {
    const auto& w = ws.windows[i];
    const double err = rm.predict_raw(w.x.head(a_dim), w.cond) - targets[i];
    se += err * err;
  }
  rm.holdout_mse = held_idx.empty() ? 0.0 : se / static_cast<double>(held_idx.size());
  return rm;
}

int reward_node(Tape& tape, int src, const RewardModel& rm, int action, int cond) {
  return mlp_node(tape, src, rm.net, action, cond);
}

double sparse_goal_reward(const EnvSpec& spec, const Vec& final_state) {
  return in_zone(final_state, spec.goal, spec.goal_radius) ? 1.0 : 0.0;
}

int goal_reward_node(Tape& tape, const EnvSpec& spec, const NormStats& stats, int plan,
                     Index state_dim, double tau) {
  const Index len = tape.value(plan).size();
  if (len < state_dim) throw std::invalid_argument("goal_reward_node: plan too short");
  const int last = tape.slice(plan, len - state_dim, state_dim);

  // De-normalize per dimension so the distance is in env units and the goal
  // radius keeps its meaning.
  std::vector<int> dims;
  for (Index j = 0; j < state_dim; ++j)
    dims.push_back(tape.scale(stats.s_std[j], tape.slice(last, j, 1)));
  const int s_final = tape.add(tape.concat(dims), tape.constant(stats.s_mean));

  const int d = tape.pseudo_huber(s_final, tape.constant(spec.goal), 0.01);
  const int margin = tape.add(tape.constant(Vec::Constant(1, spec.goal_radius)),
                              tape.scale(-1.0, d));
  return tape.activation(Activation::Sigmoid, tape.scale(1.0 / tau, margin));
}

Checkpoint reward_checkpoint(const RewardModel& rm, int step, const std::string& config_hash) {
  Checkpoint ck;
  ck.role = "reward";
  ck.step = step;
  ck.config_hash = config_hash;
  ck.params = rm.net;
  ck.meta = {{"target_mean", rm.target_mean},
             {"target_std", rm.target_std},
             {"holdout_mse", rm.holdout_mse}};
  return ck;
}

RewardModel reward_from_checkpoint(const Checkpoint& ck) {
  if (ck.role != "reward")
    throw std::runtime_error("reward_from_checkpoint: role is '" + ck.role + "'");
  RewardModel rm;
  rm.net = ck.params;
  rm.target_mean = ck.meta.at("target_mean").get<double>();
  rm.target_std = ck.meta.at("target_std").get<double>();
  rm.holdout_mse = ck.meta.value("holdout_mse", 0.0);
  return rm;
}

}  // namespace ractd
