#include "ractd/dataenv.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ractd/optim.hpp"
#include "ractd/tape.hpp"

namespace ractd {

namespace {

nlohmann::json vec_to_json(const Vec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vec vec_from_json(const nlohmann::json& j) {
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Index>(i)] = j[i].get<double>();
  return v;
}

nlohmann::json mat_to_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat mat_from_json(const nlohmann::json& j) {
  if (j.empty()) return Mat(0, 0);
  Mat m(static_cast<Index>(j.size()), static_cast<Index>(j[0].size()));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = j[r][c].get<double>();
  return m;
}

Vec clamp_box(const Vec& v, const Vec& lo, const Vec& hi) {
  Vec out(v.size());
  for (Index i = 0; i < v.size(); ++i) out[i] = std::clamp(v[i], lo[i], hi[i]);
  return out;
}

bool point_in_wall(const EnvSpec& spec, double x, double y) {
  for (const auto& w : spec.walls)
    if (x >= w[0] && x <= w[2] && y >= w[1] && y <= w[3]) return true;
  return false;
}

// Samples the segment densely enough that a bounded step cannot tunnel
// through the thinnest wall used by the maze variants.
bool segment_blocked(const EnvSpec& spec, const Vec& from, const Vec& to) {
  if (spec.walls.empty()) return false;
  const int n = 8;
  for (int k = 1; k <= n; ++k) {
    const double t = static_cast<double>(k) / n;
    const Vec p = from + t * (to - from);
    if (point_in_wall(spec, p[0], p[1])) return true;
  }
  return false;
}

}  // namespace

bool in_zone(const Vec& pos, const Vec& center, double radius) {
  return (pos - center).norm() <= radius;
}

EnvSpec EnvSpec::bimodal_reach() {
  EnvSpec e;
  e.name = "bimodal-reach";
  e.horizon = 32;
  e.action_max = 0.5;
  e.start_lo = Vec::Constant(2, -0.25);
  e.start_hi = Vec::Constant(2, 0.25);
  e.bounds_lo = Vec::Constant(2, -4.0);
  e.bounds_hi = Vec::Constant(2, 4.0);
  e.zone_hi = Vec(2);
  e.zone_hi << 2.4, 1.8;
  e.zone_lo = Vec(2);
  e.zone_lo << 2.4, -1.8;
  e.zone_radius = 0.5;
  e.rate_hi = 10.0;
  e.rate_lo = 1.0;
  return e;
}

EnvSpec EnvSpec::pointmass_maze(const std::string& variant) {
  EnvSpec e;
  e.name = "pointmass-maze";
  e.variant = variant;
  e.action_max = 0.5;
  e.goal_radius = 0.35;
  e.bounds_lo = Vec::Constant(2, 0.0);
  e.goal = Vec(2);
  if (variant == "umaze") {
    e.horizon = 32;
    e.bounds_hi = Vec::Constant(2, 4.0);
    e.walls = {{1.6, 0.0, 2.4, 2.6}};
    e.start_lo = Vec(2);
    e.start_lo << 0.3, 0.3;
    e.start_hi = Vec(2);
    e.start_hi << 1.2, 3.7;
    e.goal << 3.4, 0.8;
  } else if (variant == "medium") {
    e.horizon = 64;
    e.bounds_hi = Vec::Constant(2, 6.0);
    e.walls = {{1.5, 0.0, 2.1, 4.2}, {3.6, 1.8, 4.2, 6.0}};
    e.start_lo = Vec(2);
    e.start_lo << 0.3, 0.3;
    e.start_hi = Vec(2);
    e.start_hi << 1.1, 5.7;
    e.goal << 5.2, 0.9;
  } else if (variant == "large") {
    e.horizon = 96;
    e.bounds_hi = Vec::Constant(2, 8.0);
    e.walls = {{1.6, 0.0, 2.2, 6.2}, {3.8, 1.8, 4.4, 8.0}, {6.0, 0.0, 6.6, 6.2}};
    e.start_lo = Vec(2);
    e.start_lo << 0.3, 0.3;
    e.start_hi = Vec(2);
    e.start_hi << 1.2, 7.7;
    e.goal << 7.2, 0.8;
  } else {
    throw std::invalid_argument("pointmass_maze: unknown variant '" + variant + "'");
  }
  return e;
}

EnvSpec EnvSpec::by_name(const std::string& name, const std::string& variant) {
  if (name == "bimodal-reach") return bimodal_reach();
  if (name == "pointmass-maze") return pointmass_maze(variant.empty() ? "umaze" : variant);
  throw std::invalid_argument("EnvSpec: unknown env '" + name + "'");
}

nlohmann::json EnvSpec::to_json() const {
  nlohmann::json walls_j = nlohmann::json::array();
  for (const auto& w : walls) walls_j.push_back({w[0], w[1], w[2], w[3]});
  return {
      {"name", name},
      {"variant", variant},
      {"horizon", horizon},
      {"action_max", action_max},
      {"process_noise", process_noise},
      {"start_lo", vec_to_json(start_lo)},
      {"start_hi", vec_to_json(start_hi)},
      {"bounds_lo", vec_to_json(bounds_lo)},
      {"bounds_hi", vec_to_json(bounds_hi)},
      {"zone_hi", vec_to_json(zone_hi)},
      {"zone_lo", vec_to_json(zone_lo)},
      {"zone_radius", zone_radius},
      {"rate_hi", rate_hi},
      {"rate_lo", rate_lo},
      {"walls", walls_j},
      {"goal", vec_to_json(goal)},
      {"goal_radius", goal_radius},
      {"terminate_on_goal", terminate_on_goal},
  };
}

EnvSpec EnvSpec::from_json(const nlohmann::json& j) {
  EnvSpec e;
  e.name = j.at("name").get<std::string>();
  e.variant = j.at("variant").get<std::string>();
  e.horizon = j.at("horizon").get<int>();
  e.action_max = j.at("action_max").get<double>();
  e.process_noise = j.at("process_noise").get<double>();
  e.start_lo = vec_from_json(j.at("start_lo"));
  e.start_hi = vec_from_json(j.at("start_hi"));
  e.bounds_lo = vec_from_json(j.at("bounds_lo"));
  e.bounds_hi = vec_from_json(j.at("bounds_hi"));
  e.zone_hi = vec_from_json(j.at("zone_hi"));
  e.zone_lo = vec_from_json(j.at("zone_lo"));
  e.zone_radius = j.at("zone_radius").get<double>();
  e.rate_hi = j.at("rate_hi").get<double>();
  e.rate_lo = j.at("rate_lo").get<double>();
  for (const auto& w : j.at("walls"))
    e.walls.push_back({w[0].get<double>(), w[1].get<double>(), w[2].get<double>(),
                       w[3].get<double>()});
  e.goal = vec_from_json(j.at("goal"));
  e.goal_radius = j.at("goal_radius").get<double>();
  e.terminate_on_goal = j.at("terminate_on_goal").get<bool>();
  return e;
}

StepResult env_step(const EnvSpec& spec, const Vec& s, const Vec& a, int step_index, Rng* rng) {
  if (s.size() != 2 || a.size() != 2) throw std::invalid_argument("env_step: dim mismatch");
  StepResult out;
  Vec act(2);
  for (int i = 0; i < 2; ++i) {
    act[i] = std::clamp(a[i], -spec.action_max, spec.action_max);
    if (act[i] != a[i]) out.clamped = true;
  }

  Vec target = s + act;
  if (spec.process_noise > 0.0) {
    if (!rng) throw std::invalid_argument("env_step: process noise needs an rng");
    target += spec.process_noise * rng->normal_vec(2);
  }
  target = clamp_box(target, spec.bounds_lo, spec.bounds_hi);

  Vec next = s;
  if (!segment_blocked(spec, s, target)) {
    next = target;
  } else {
    // Axis-decomposed fallback: slide along whichever axis stays free.
    Vec tx(2), ty(2);
    tx << target[0], s[1];
    ty << s[0], target[1];
    if (!segment_blocked(spec, s, tx)) {
      next = tx;
    } else if (!segment_blocked(spec, s, ty)) {
      next = ty;
    }
  }
  out.next = next;

  bool goal_hit = false;
  if (spec.name == "bimodal-reach") {
    if (in_zone(next, spec.zone_hi, spec.zone_radius)) {
      out.reward = spec.rate_hi;
    } else if (in_zone(next, spec.zone_lo, spec.zone_radius)) {
      out.reward = spec.rate_lo;
    }
  } else {
    goal_hit = in_zone(next, spec.goal, spec.goal_radius);
    out.reward = goal_hit ? 1.0 : 0.0;
  }

  out.done = (step_index + 1 >= spec.horizon) || (goal_hit && spec.terminate_on_goal);
  return out;
}

double episode_return(const EpisodeRecord& ep) { return ep.rewards.sum(); }

std::vector<Vec> maze_bfs_waypoints(const EnvSpec& spec, const Vec& from, const Vec& to) {
  const double cell = 0.2;
  const double margin = 0.2;
  const int nx = static_cast<int>(std::round((spec.bounds_hi[0] - spec.bounds_lo[0]) / cell));
  const int ny = static_cast<int>(std::round((spec.bounds_hi[1] - spec.bounds_lo[1]) / cell));

  auto center = [&](int ix, int iy) {
    Vec p(2);
    p << spec.bounds_lo[0] + (ix + 0.5) * cell, spec.bounds_lo[1] + (iy + 0.5) * cell;
    return p;
  };
  auto occupied = [&](int ix, int iy) {
    if (ix < 0 || iy < 0 || ix >= nx || iy >= ny) return true;
    const Vec p = center(ix, iy);
    for (const auto& w : spec.walls)
      if (p[0] >= w[0] - margin && p[0] <= w[2] + margin && p[1] >= w[1] - margin &&
          p[1] <= w[3] + margin)
        return true;
    return false;
  };
  auto to_cell = [&](const Vec& p, int& ix, int& iy) {
    ix = std::clamp(static_cast<int>((p[0] - spec.bounds_lo[0]) / cell), 0, nx - 1);
    iy = std::clamp(static_cast<int>((p[1] - spec.bounds_lo[1]) / cell), 0, ny - 1);
  };

  int sx, sy, gx, gy;
  to_cell(from, sx, sy);
  to_cell(to, gx, gy);
  // Nudge endpoints off inflated walls if they landed inside the margin.
  auto free_near = [&](int& ix, int& iy) {
    if (!occupied(ix, iy)) return;
    for (int r = 1; r < 6; ++r)
      for (int dx = -r; dx <= r; ++dx)
        for (int dy = -r; dy <= r; ++dy)
          if (!occupied(ix + dx, iy + dy)) {
            ix += dx;
            iy += dy;
            return;
          }
    throw std::runtime_error("maze_bfs_waypoints: endpoint buried in walls");
  };
  free_near(sx, sy);
  free_near(gx, gy);

  std::vector<int> parent(static_cast<std::size_t>(nx) * ny, -1);
  auto id = [&](int ix, int iy) { return iy * nx + ix; };
  std::deque<std::pair<int, int>> queue;
  queue.emplace_back(sx, sy);
  parent[id(sx, sy)] = id(sx, sy);
  const int dxs[4] = {1, -1, 0, 0};
  const int dys[4] = {0, 0, 1, -1};
  while (!queue.empty()) {
    auto [cx, cy] = queue.front();
    queue.pop_front();
    if (cx == gx && cy == gy) break;
    for (int k = 0; k < 4; ++k) {
      const int nx2 = cx + dxs[k], ny2 = cy + dys[k];
      if (occupied(nx2, ny2) || parent[id(nx2, ny2)] >= 0) continue;
      parent[id(nx2, ny2)] = id(cx, cy);
      queue.emplace_back(nx2, ny2);
    }
  }
  if (parent[id(gx, gy)] < 0)
    throw std::runtime_error("maze_bfs_waypoints: no path through the maze");

  std::vector<Vec> path;
  int cur = id(gx, gy);
  while (parent[cur] != cur) {
    path.push_back(center(cur % nx, cur / nx));
    cur = parent[cur];
  }
  std::reverse(path.begin(), path.end());
  path.push_back(to);
  return path;
}

Vec scripted_action(const EnvSpec& spec, const std::string& policy, const Vec& s, Rng& rng,
                    double noise_frac) {
  Vec a(2);
  if (policy == "random") {
    a << rng.uniform(-spec.action_max, spec.action_max),
        rng.uniform(-spec.action_max, spec.action_max);
    return a;
  }

  Vec target;
  if (spec.name == "bimodal-reach") {
    if (policy == "expert") {
      target = spec.zone_hi;
    } else if (policy == "medium") {
      target = spec.zone_lo;
    } else {
      throw std::invalid_argument("scripted_action: unknown policy '" + policy + "'");
    }
  } else if (policy == "path") {
    const auto waypoints = maze_bfs_waypoints(spec, s, spec.goal);
    target = waypoints.back();
    for (const auto& w : waypoints) {
      if ((w - s).norm() > 0.3) {
        target = w;
        break;
      }
    }
  } else {
    throw std::invalid_argument("scripted_action: unknown policy '" + policy + "'");
  }

  const Vec dir = target - s;
  for (int i = 0; i < 2; ++i) {
    a[i] = std::clamp(dir[i], -spec.action_max, spec.action_max);
    a[i] += rng.uniform(-noise_frac * spec.action_max, noise_frac * spec.action_max);
    a[i] = std::clamp(a[i], -spec.action_max, spec.action_max);
  }
  return a;
}

Dataset gen_offline_dataset(const EnvSpec& spec, const GenConfig& gen, Rng& rng) {
  if (gen.n_episodes <= 0) throw std::invalid_argument("gen_offline_dataset: no episodes");
  double frac_total = 0.0;
  for (const auto& [tag, frac] : gen.policy_mix) frac_total += frac;
  if (std::abs(frac_total - 1.0) > 1e-9)
    throw std::invalid_argument("gen_offline_dataset: policy fractions must sum to 1");

  // Exact counts per policy; remainder goes to the last tag.
  std::vector<std::string> assignment;
  for (const auto& [tag, frac] : gen.policy_mix) {
    const int count = static_cast<int>(std::floor(frac * gen.n_episodes + 0.5));
    for (int i = 0; i < count && static_cast<int>(assignment.size()) < gen.n_episodes; ++i)
      assignment.push_back(tag);
  }
  while (static_cast<int>(assignment.size()) < gen.n_episodes)
    assignment.push_back(gen.policy_mix.back().first);

  Dataset ds;
  ds.spec = spec;
  ds.episodes.reserve(gen.n_episodes);
  for (int e = 0; e < gen.n_episodes; ++e) {
    EpisodeRecord ep;
    ep.tag = assignment[e];
    Vec s(2);
    for (int i = 0; i < 2; ++i) s[i] = rng.uniform(spec.start_lo[i], spec.start_hi[i]);

    std::vector<Vec> states, actions;
    std::vector<double> rewards;
    for (int t = 0; t < spec.horizon; ++t) {
      const Vec a = scripted_action(spec, ep.tag, s, rng, gen.policy_noise);
      const StepResult r = env_step(spec, s, a, t, spec.process_noise > 0.0 ? &rng : nullptr);
      states.push_back(s);
      actions.push_back(a);
      rewards.push_back(r.reward);
      s = r.next;
      if (r.done) break;
    }
    const Index T = static_cast<Index>(states.size());
    ep.states.resize(T, 2);
    ep.actions.resize(T, 2);
    ep.rewards.resize(T);
    for (Index t = 0; t < T; ++t) {
      ep.states.row(t) = states[t].transpose();
      ep.actions.row(t) = actions[t].transpose();
      ep.rewards[t] = rewards[t];
    }
    ds.episodes.push_back(std::move(ep));
  }
  ds.stats = dataset_stats(ds);
  return ds;
}

nlohmann::json dataset_stats(const Dataset& ds) {
  const NormStats ns = compute_norm_stats(ds);
  double rmin = 0.0, rmax = 0.0, rsum = 0.0;
  for (std::size_t i = 0; i < ds.episodes.size(); ++i) {
    const double r = episode_return(ds.episodes[i]);
    if (i == 0) {
      rmin = rmax = r;
    } else {
      rmin = std::min(rmin, r);
      rmax = std::max(rmax, r);
    }
    rsum += r;
  }
  return {
      {"s_mean", vec_to_json(ns.s_mean)},
      {"s_std", vec_to_json(ns.s_std)},
      {"a_mean", vec_to_json(ns.a_mean)},
      {"a_std", vec_to_json(ns.a_std)},
      {"returns",
       {{"mean", ds.episodes.empty() ? 0.0 : rsum / static_cast<double>(ds.episodes.size())},
        {"min", rmin},
        {"max", rmax}}},
  };
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path.string());
  const nlohmann::json header = {
      {"kind", "ractd-dataset"},
      {"version", 1},
      {"env", ds.spec.to_json()},
      {"n_episodes", ds.episodes.size()},
      {"stats", ds.stats},
      {"config_hash", ds.config_hash},
  };
  out << header.dump() << "\n";
  for (const auto& ep : ds.episodes) {
    const nlohmann::json line = {
        {"t", ep.tag},
        {"s", mat_to_json(ep.states)},
        {"a", mat_to_json(ep.actions)},
        {"r", vec_to_json(ep.rewards)},
    };
    out << line.dump() << "\n";
  }
  if (!out) throw std::runtime_error("save_dataset: write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_dataset: empty file");
  const nlohmann::json header = nlohmann::json::parse(line);
  if (header.at("kind").get<std::string>() != "ractd-dataset")
    throw std::runtime_error("load_dataset: not a dataset file");

  Dataset ds;
  ds.spec = EnvSpec::from_json(header.at("env"));
  ds.stats = header.at("stats");
  ds.config_hash = header.at("config_hash").get<std::string>();
  const std::size_t n = header.at("n_episodes").get<std::size_t>();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    EpisodeRecord ep;
    ep.tag = j.at("t").get<std::string>();
    ep.states = mat_from_json(j.at("s"));
    ep.actions = mat_from_json(j.at("a"));
    ep.rewards = vec_from_json(j.at("r"));
    if (ep.states.rows() != ep.actions.rows() || ep.states.rows() != ep.rewards.size())
      throw std::runtime_error("load_dataset: misaligned episode");
    ds.episodes.push_back(std::move(ep));
  }
  if (ds.episodes.size() != n)
    throw std::runtime_error("load_dataset: episode count mismatch");
  return ds;
}

Vec NormStats::norm_state(const Vec& s) const {
  return ((s - s_mean).array() / s_std.array()).matrix();
}
Vec NormStats::denorm_state(const Vec& s) const {
  return (s.array() * s_std.array()).matrix() + s_mean;
}
Vec NormStats::norm_action(const Vec& a) const {
  return ((a - a_mean).array() / a_std.array()).matrix();
}
Vec NormStats::denorm_action(const Vec& a) const {
  return (a.array() * a_std.array()).matrix() + a_mean;
}

nlohmann::json NormStats::to_json() const {
  return {{"s_mean", vec_to_json(s_mean)},
          {"s_std", vec_to_json(s_std)},
          {"a_mean", vec_to_json(a_mean)},
          {"a_std", vec_to_json(a_std)}};
}

NormStats NormStats::from_json(const nlohmann::json& j) {
  NormStats n;
  n.s_mean = vec_from_json(j.at("s_mean"));
  n.s_std = vec_from_json(j.at("s_std"));
  n.a_mean = vec_from_json(j.at("a_mean"));
  n.a_std = vec_from_json(j.at("a_std"));
  return n;
}

NormStats compute_norm_stats(const Dataset& ds) {
  if (ds.episodes.empty()) throw std::invalid_argument("compute_norm_stats: empty dataset");
  const int sd = ds.spec.state_dim(), ad = ds.spec.action_dim();
  Vec s_sum = Vec::Zero(sd), s_sq = Vec::Zero(sd);
  Vec a_sum = Vec::Zero(ad), a_sq = Vec::Zero(ad);
  double n = 0.0;
  for (const auto& ep : ds.episodes) {
    for (Index t = 0; t < ep.states.rows(); ++t) {
      const Vec s = ep.states.row(t).transpose();
      const Vec a = ep.actions.row(t).transpose();
      s_sum += s;
      s_sq += s.cwiseProduct(s);
      a_sum += a;
      a_sq += a.cwiseProduct(a);
      n += 1.0;
    }
  }
  NormStats out;
  out.s_mean = s_sum / n;
  out.a_mean = a_sum / n;
  out.s_std = (s_sq / n - out.s_mean.cwiseProduct(out.s_mean)).cwiseMax(0.0).cwiseSqrt();
  out.a_std = (a_sq / n - out.a_mean.cwiseProduct(out.a_mean)).cwiseMax(0.0).cwiseSqrt();
  out.s_std = out.s_std.cwiseMax(1e-6);
  out.a_std = out.a_std.cwiseMax(1e-6);
  return out;
}

WindowSet window_dataset(const Dataset& ds, int h, int c) {
  if (h < 1 || c < 1) throw std::invalid_argument("window_dataset: h and c must be >= 1");
  Index min_len = ds.episodes.empty() ? 0 : ds.episodes.front().states.rows();
  for (const auto& ep : ds.episodes) min_len = std::min(min_len, ep.states.rows());
  if (ds.episodes.empty() || c > min_len)
    throw std::invalid_argument("window_dataset: action horizon " + std::to_string(c) +
                                " exceeds shortest episode length " + std::to_string(min_len));

  WindowSet ws;
  ws.h = h;
  ws.c = c;
  ws.state_dim = ds.spec.state_dim();
  ws.action_dim = ds.spec.action_dim();
  ws.stats = compute_norm_stats(ds);

  for (std::size_t e = 0; e < ds.episodes.size(); ++e) {
    const auto& ep = ds.episodes[e];
    const Index L = ep.states.rows();
    for (Index n = 0; n + c <= L; ++n) {
      PlanWindow w;
      w.episode = static_cast<int>(e);
      w.anchor = static_cast<int>(n);
      w.x.resize(static_cast<Index>(c) * ws.action_dim);
      for (int k = 0; k < c; ++k)
        w.x.segment(static_cast<Index>(k) * ws.action_dim, ws.action_dim) =
            ws.stats.norm_action(ep.actions.row(n + k).transpose());
      w.cond.resize(static_cast<Index>(h) * ws.state_dim);
      for (int k = 0; k < h; ++k) {
        // History frame n-h+1+k, clamped to the episode start (repeat-pad).
        const Index idx = std::max<Index>(0, n - h + 1 + k);
        w.cond.segment(static_cast<Index>(k) * ws.state_dim, ws.state_dim) =
            ws.stats.norm_state(ep.states.row(idx).transpose());
      }
      w.padded = (n - h + 1 < 0);
      ws.windows.push_back(std::move(w));
    }
  }
  return ws;
}

WindowSet plan_state_windows(const Dataset& ds, int horizon) {
  if (horizon < 2) throw std::invalid_argument("plan_state_windows: horizon must be >= 2");
  WindowSet ws;
  ws.h = 1;
  ws.c = horizon;
  ws.state_dim = ds.spec.state_dim();
  ws.action_dim = ds.spec.action_dim();
  ws.stats = compute_norm_stats(ds);

  for (std::size_t e = 0; e < ds.episodes.size(); ++e) {
    const auto& ep = ds.episodes[e];
    if (ep.states.rows() < horizon)
      throw std::invalid_argument("plan_state_windows: episode " + std::to_string(e) +
                                  " shorter than the planning horizon");
    PlanWindow w;
    w.episode = static_cast<int>(e);
    w.anchor = 0;
    w.x.resize(static_cast<Index>(horizon) * ws.state_dim);
    for (int k = 0; k < horizon; ++k)
      w.x.segment(static_cast<Index>(k) * ws.state_dim, ws.state_dim) =
          ws.stats.norm_state(ep.states.row(k).transpose());
    w.cond.resize(2 * ws.state_dim);
    w.cond.head(ws.state_dim) = ws.stats.norm_state(ep.states.row(0).transpose());
    w.cond.tail(ws.state_dim) = ws.stats.norm_state(ds.spec.goal);
    ws.windows.push_back(std::move(w));
  }
  return ws;
}

ReverseDynamics train_reverse_dynamics(const Dataset& ds, int steps, int batch, double lr,
                                       Rng& rng) {
  struct Transition {
    int episode;
    Index t;
  };
  std::vector<Transition> transitions;
  for (std::size_t e = 0; e < ds.episodes.size(); ++e)
    for (Index t = 0; t + 1 < ds.episodes[e].states.rows(); ++t)
      transitions.push_back({static_cast<int>(e), t});
  if (transitions.empty())
    throw std::invalid_argument("train_reverse_dynamics: no transitions");

  ReverseDynamics rd;
  rd.stats = compute_norm_stats(ds);
  rd.net = make_mlp(2 * ds.spec.state_dim(), 0, {64, 64}, ds.spec.action_dim(),
                    Activation::Mish);
  rd.net.init_uniform(rng);
  AdamState opt = AdamState::make(rd.net.n_params(), lr);

  for (int step = 0; step < steps; ++step) {
    Tape tape;
    const int src = tape.register_params(rd.net, true);
    std::vector<int> losses;
    for (int b = 0; b < batch; ++b) {
      const auto& tr = transitions[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(transitions.size()) - 1))];
      const auto& ep = ds.episodes[tr.episode];
      Vec in(2 * ds.spec.state_dim());
      in.head(2) = rd.stats.norm_state(ep.states.row(tr.t).transpose());
      in.tail(2) = rd.stats.norm_state(ep.states.row(tr.t + 1).transpose());
      const Vec a = rd.stats.norm_action(ep.actions.row(tr.t).transpose());
      const int pred = mlp_node(tape, src, rd.net, tape.constant(in), -1);
      losses.push_back(tape.squared_dist(pred, tape.constant(a)));
    }
    const int loss = tape.reduce_mean(tape.concat(losses));
    tape.backward(loss);
    adam_step(opt, rd.net.flat, tape.param_grad(src));
  }
  return rd;
}

Vec reverse_action(const ReverseDynamics& rd, const Vec& s, const Vec& s_next) {
  Vec in(2 * s.size());
  in.head(s.size()) = rd.stats.norm_state(s);
  in.tail(s.size()) = rd.stats.norm_state(s_next);
  return rd.stats.denorm_action(mlp_eval(rd.net, in, Vec()));
}

}  // namespace ractd
