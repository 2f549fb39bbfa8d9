#include "ddppo/envs/nav_env.hpp"

#include <cmath>
#include <thread>

#include "ddppo/common/error.hpp"

namespace ddppo::envs {

Cell heading_vector(Heading h) {
  switch (h) {
    case Heading::kNorth:
      return {0, -1};
    case Heading::kEast:
      return {1, 0};
    case Heading::kSouth:
      return {0, 1};
    case Heading::kWest:
      return {-1, 0};
  }
  return {0, -1};
}

Heading turn_left(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 3) % 4); }
Heading turn_right(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 1) % 4); }

std::string to_string(Task t) {
  switch (t) {
    case Task::kPointNav:
      return "pointnav";
    case Task::kFlee:
      return "flee";
    case Task::kExplore:
      return "explore";
  }
  return "pointnav";
}

Task task_from_string(const std::string& s) {
  if (s == "pointnav") return Task::kPointNav;
  if (s == "flee") return Task::kFlee;
  if (s == "explore") return Task::kExplore;
  throw ConfigError("unknown task '" + s + "' (expected pointnav, flee or explore)");
}

std::vector<double> Observation::to_vector() const {
  std::vector<double> v;
  v.reserve(3 + local_patch.size());
  v.push_back(goal_distance);
  v.push_back(goal_cos);
  v.push_back(goal_sin);
  v.insert(v.end(), local_patch.begin(), local_patch.end());
  return v;
}

std::chrono::nanoseconds DelayModel::sample(Rng& rng) const {
  double seconds = 0.0;
  switch (kind) {
    case Kind::kNone:
      break;
    case Kind::kHomogeneous:
      seconds = mean_s;
      break;
    case Kind::kHeterogeneous:
      if (!(lo_s > 0.0 && hi_s >= lo_s)) throw ConfigError("heterogeneous delay needs 0 < lo <= hi");
      seconds = std::exp(rng.uniform(std::log(lo_s), std::log(hi_s)));
      break;
  }
  return std::chrono::nanoseconds(static_cast<std::int64_t>(std::llround(seconds * 1e9)));
}

void to_json(nlohmann::json& j, const DelayModel& d) {
  switch (d.kind) {
    case DelayModel::Kind::kNone:
      j = {{"kind", "none"}};
      break;
    case DelayModel::Kind::kHomogeneous:
      j = {{"kind", "homogeneous"}, {"mean_s", d.mean_s}};
      break;
    case DelayModel::Kind::kHeterogeneous:
      j = {{"kind", "heterogeneous"}, {"lo_s", d.lo_s}, {"hi_s", d.hi_s}};
      break;
  }
}

void from_json(const nlohmann::json& j, DelayModel& d) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "none") {
    d = DelayModel::none();
  } else if (kind == "homogeneous") {
    d = DelayModel::homogeneous(j.at("mean_s").get<double>());
  } else if (kind == "heterogeneous") {
    d = DelayModel::heterogeneous(j.at("lo_s").get<double>(), j.at("hi_s").get<double>());
  } else {
    throw ConfigError("unknown delay kind '" + kind + "'");
  }
}

double compute_spl(bool success, double shortest_path_len, double agent_path_len) {
  if (!(shortest_path_len > 0.0)) throw InvalidEpisodeError("SPL: shortest path length must be > 0");
  if (!(agent_path_len >= 0.0)) throw InvalidEpisodeError("SPL: agent path length must be >= 0");
  if (!success) return 0.0;
  return shortest_path_len / std::max(shortest_path_len, agent_path_len);
}

namespace {

constexpr int kMaxAttempts = 10000;

Heading random_heading(Rng& rng) { return static_cast<Heading>(rng.uniform_index(4)); }

}  // namespace

Episode generate_episode(const GridWorld& map, Rng& rng, double min_geo, double max_geo) {
  const auto free = map.free_cells();
  if (free.size() < 2) {
    throw InfeasibleConstraintError("generate_episode: map has fewer than 2 free cells");
  }
  const double cs = map.cell_size();
  const int min_cells = std::max(1, static_cast<int>(std::ceil(min_geo / cs - 1e-9)));
  const int max_cells = static_cast<int>(std::floor(max_geo / cs + 1e-9));
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const Cell start = free[rng.uniform_index(free.size())];
    const Cell goal = free[rng.uniform_index(free.size())];
    const Heading heading = random_heading(rng);
    const int d = bfs_geodesic(map, start).at(goal);
    if (d >= min_cells && d <= max_cells) {
      Episode ep;
      ep.start = AgentState{start, heading, 0};
      ep.goal = goal;
      ep.shortest_path_len = d * cs;
      return ep;
    }
  }
  throw InfeasibleConstraintError("generate_episode: no start/goal pair with geodesic distance in [" +
                                  std::to_string(min_geo) + ", " + std::to_string(max_geo) +
                                  "] m after 10000 attempts");
}

Episode generate_open_episode(const GridWorld& map, Rng& rng) {
  const auto free = map.free_cells();
  if (free.size() < 2) {
    throw InfeasibleConstraintError("generate_open_episode: map has fewer than 2 free cells");
  }
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const Cell start = free[rng.uniform_index(free.size())];
    const Heading heading = random_heading(rng);
    const int reach = bfs_geodesic(map, start).max_distance();
    if (reach > 0) {
      Episode ep;
      ep.start = AgentState{start, heading, 0};
      ep.goal = start;
      ep.shortest_path_len = reach * map.cell_size();
      return ep;
    }
  }
  throw InfeasibleConstraintError("generate_open_episode: every sampled start is isolated");
}

NavEnv::NavEnv(std::shared_ptr<const GridWorld> map, EnvConfig config, std::string map_id,
               std::chrono::nanoseconds step_delay)
    : map_(std::move(map)), config_(config), map_id_(std::move(map_id)), step_delay_(step_delay) {
  if (!map_) throw ConfigError("NavEnv: null map");
  if (config_.patch_size < 1 || config_.patch_size % 2 == 0) {
    throw ConfigError("NavEnv: patch_size must be odd and positive");
  }
  if (config_.max_episode_steps < 1) throw ConfigError("NavEnv: max_episode_steps must be >= 1");
}

Observation NavEnv::reset(Rng& rng) {
  if (config_.task == Task::kPointNav) {
    return reset_to(generate_episode(*map_, rng, config_.min_geo, config_.max_geo));
  }
  return reset_to(generate_open_episode(*map_, rng));
}

Observation NavEnv::reset_to(const Episode& episode) {
  if (!map_->is_free(episode.start.cell)) throw InvalidCellError("episode start is not free");
  episode_ = episode;
  episode_.agent_path_len = 0.0;
  agent_ = episode.start;
  agent_.steps_taken = 0;
  begin();
  return observe();
}

void NavEnv::begin() {
  done_ = false;
  visited_.clear();
  switch (config_.task) {
    case Task::kPointNav:
      if (!map_->is_free(episode_.goal)) throw InvalidCellError("episode goal is not free");
      field_ = bfs_geodesic(*map_, episode_.goal);
      if (field_->at(agent_.cell) == DistanceField::kUnreachable) {
        throw InvalidEpisodeError("goal is unreachable from start");
      }
      break;
    case Task::kFlee:
      field_ = bfs_geodesic(*map_, agent_.cell);
      flee_max_cells_ = field_->max_distance();
      if (flee_max_cells_ <= 0) throw InfeasibleConstraintError("flee: start cell is isolated");
      flee_prev_ = 0.0;
      break;
    case Task::kExplore:
      field_.reset();
      visited_.insert(block_of(agent_.cell));
      break;
  }
}

int NavEnv::geodesic_to_goal() const {
  if (config_.task != Task::kPointNav || !field_) throw ProtocolError("no goal for this task");
  return field_->at(agent_.cell);
}

std::pair<int, int> NavEnv::block_of(Cell c) const {
  const int block = std::max(1, static_cast<int>(std::lround(config_.explore_block_m / map_->cell_size())));
  return {c.x / block, c.y / block};
}

Observation NavEnv::observe() const {
  Observation obs;
  const Cell fwd = heading_vector(agent_.heading);
  // Right-hand vector in a y-down frame.
  const Cell right{-fwd.y, fwd.x};
  if (config_.task == Task::kPointNav) {
    const double cs = map_->cell_size();
    const double vx = (episode_.goal.x - agent_.cell.x) * cs;
    const double vy = (episode_.goal.y - agent_.cell.y) * cs;
    const double ahead = vx * fwd.x + vy * fwd.y;
    const double left = -(vx * right.x + vy * right.y);
    obs.goal_distance = std::hypot(vx, vy);
    if (obs.goal_distance > 0.0) {
      obs.goal_cos = ahead / obs.goal_distance;
      obs.goal_sin = left / obs.goal_distance;
    }
  } else {
    obs.goal_distance = config_.dummy_goal[0];
    obs.goal_cos = config_.dummy_goal[1];
    obs.goal_sin = config_.dummy_goal[2];
  }
  const int k = config_.patch_size;
  const int half = k / 2;
  obs.local_patch.resize(static_cast<std::size_t>(k * k));
  for (int i = 0; i < k; ++i) {
    const int a = half - i;  // cells ahead
    for (int j = 0; j < k; ++j) {
      const int r = j - half;  // cells to the right
      const Cell c{agent_.cell.x + a * fwd.x + r * right.x, agent_.cell.y + a * fwd.y + r * right.y};
      obs.local_patch[static_cast<std::size_t>(i * k + j)] = map_->is_free(c) ? 0.0 : 1.0;
    }
  }
  return obs;
}

bool NavEnv::move(Action action) {
  switch (action) {
    case Action::kStop:
      return false;
    case Action::kTurnLeft:
      agent_.heading = turn_left(agent_.heading);
      return false;
    case Action::kTurnRight:
      agent_.heading = turn_right(agent_.heading);
      return false;
    case Action::kMoveForward: {
      const Cell d = heading_vector(agent_.heading);
      const Cell next{agent_.cell.x + d.x, agent_.cell.y + d.y};
      if (!map_->is_free(next)) return true;
      agent_.cell = next;
      episode_.agent_path_len += map_->cell_size();
      return false;
    }
  }
  return false;
}

StepResult NavEnv::step(int action) {
  if (action < 0 || action >= kNumActions) throw ProtocolError("invalid action " + std::to_string(action));
  return step(static_cast<Action>(action));
}

StepResult NavEnv::step(Action action) {
  if (done_) throw ProtocolError("step called on a finished episode; call reset first");
  if (step_delay_.count() > 0) std::this_thread::sleep_for(step_delay_);
  switch (config_.task) {
    case Task::kPointNav:
      return step_pointnav(action);
    case Task::kFlee:
      return step_flee(action);
    case Task::kExplore:
      return step_explore(action);
  }
  throw ProtocolError("unknown task");
}

StepResult NavEnv::step_pointnav(Action action) {
  StepResult res;
  const double cs = map_->cell_size();
  const int before = field_->at(agent_.cell);
  res.info.collided = move(action);
  const int after = field_->at(agent_.cell);
  ++agent_.steps_taken;
  res.reward = -static_cast<double>(after - before) * cs - config_.slack_penalty;
  if (action == Action::kStop) {
    done_ = true;
    res.info.success = after <= config_.success_radius_cells;
    res.info.spl = compute_spl(res.info.success, episode_.shortest_path_len, episode_.agent_path_len);
    res.reward += config_.success_reward_scale * res.info.spl;
  } else if (agent_.steps_taken >= config_.max_episode_steps) {
    done_ = true;
  }
  res.done = done_;
  res.obs = observe();
  return res;
}

StepResult NavEnv::step_flee(Action action) {
  StepResult res;
  res.info.collided = move(action);
  ++agent_.steps_taken;
  const double d = static_cast<double>(field_->at(agent_.cell)) / flee_max_cells_;
  res.reward = config_.flee_reward_scale * (d - flee_prev_);
  flee_prev_ = d;
  res.info.flee_distance = d;
  done_ = agent_.steps_taken >= config_.max_episode_steps;
  res.done = done_;
  res.obs = observe();
  return res;
}

StepResult NavEnv::step_explore(Action action) {
  StepResult res;
  res.info.collided = move(action);
  ++agent_.steps_taken;
  const auto before = visited_.size();
  visited_.insert(block_of(agent_.cell));
  res.reward = config_.explore_reward_scale * static_cast<double>(visited_.size() - before);
  res.info.visited_count = static_cast<int>(visited_.size());
  done_ = agent_.steps_taken >= config_.max_episode_steps;
  res.done = done_;
  res.obs = observe();
  return res;
}

Action shortest_path_action(const NavEnv& env) {
  const int here = env.geodesic_to_goal();
  if (here == 0) return Action::kStop;
  const Cell c = env.agent().cell;
  const GridWorld& map = env.map();
  const DistanceField field = bfs_geodesic(map, env.episode().goal);
  auto descends = [&](Heading h) {
    const Cell d = heading_vector(h);
    const Cell n{c.x + d.x, c.y + d.y};
    return map.is_free(n) && field.at(n) == here - 1;
  };
  const Heading h = env.agent().heading;
  if (descends(h)) return Action::kMoveForward;
  if (descends(turn_right(h))) return Action::kTurnRight;
  if (descends(turn_left(h))) return Action::kTurnLeft;
  // Only the cell behind descends.
  return Action::kTurnRight;
}

void to_json(nlohmann::json& j, const EpisodeRecord& r) {
  j = nlohmann::json{{"map_id", r.map_id},
                     {"start", {{"x", r.start.cell.x}, {"y", r.start.cell.y},
                                {"heading", static_cast<int>(r.start.heading)}}},
                     {"goal", {{"x", r.goal.x}, {"y", r.goal.y}}},
                     {"shortest_path_len", r.shortest_path_len},
                     {"path_len", r.path_len},
                     {"success", r.success},
                     {"spl", r.spl},
                     {"steps", r.steps}};
}

void from_json(const nlohmann::json& j, EpisodeRecord& r) {
  r.map_id = j.at("map_id").get<std::string>();
  const auto& s = j.at("start");
  r.start.cell = Cell{s.at("x").get<int>(), s.at("y").get<int>()};
  r.start.heading = static_cast<Heading>(s.value("heading", 0));
  r.goal = Cell{j.at("goal").at("x").get<int>(), j.at("goal").at("y").get<int>()};
  r.shortest_path_len = j.at("shortest_path_len").get<double>();
  r.path_len = j.at("path_len").get<double>();
  r.success = j.at("success").get<bool>();
  r.spl = j.at("spl").get<double>();
  r.steps = j.at("steps").get<int>();
}

}  // namespace ddppo::envs
