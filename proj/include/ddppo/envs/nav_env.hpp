#pragma once

#include <array>
#include <chrono>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ddppo/common/random.hpp"
#include "ddppo/envs/grid.hpp"
#include "json.hpp"

namespace ddppo::envs {

enum class Heading { kNorth = 0, kEast = 1, kSouth = 2, kWest = 3 };

Cell heading_vector(Heading h);
Heading turn_left(Heading h);
Heading turn_right(Heading h);

enum class Action { kStop = 0, kMoveForward = 1, kTurnLeft = 2, kTurnRight = 3 };
inline constexpr int kNumActions = 4;

enum class Task { kPointNav, kFlee, kExplore };

std::string to_string(Task t);
Task task_from_string(const std::string& s);

struct AgentState {
  Cell cell;
  Heading heading = Heading::kNorth;
  int steps_taken = 0;
};

struct Episode {
  AgentState start;
  Cell goal;
  double shortest_path_len = 0.0;  // meters
  double agent_path_len = 0.0;     // meters, grows by cell_size per successful forward move
};

// Agent-frame goal vector (d, cos theta, sin theta) plus a k x k occupancy
// window rotated so that the top row lies straight ahead of the agent.
struct Observation {
  double goal_distance = 0.0;
  double goal_cos = 1.0;
  double goal_sin = 0.0;
  std::vector<double> local_patch;

  std::vector<double> to_vector() const;
};

inline constexpr std::size_t observation_dim(int patch_size) {
  return 3 + static_cast<std::size_t>(patch_size) * static_cast<std::size_t>(patch_size);
}

// Per-step cost emulation. Heterogeneous envs draw a fixed duration
// log-uniformly from [lo, hi] when they are created.
struct DelayModel {
  enum class Kind { kNone, kHomogeneous, kHeterogeneous };
  Kind kind = Kind::kNone;
  double mean_s = 0.0;
  double lo_s = 0.0;
  double hi_s = 0.0;

  static DelayModel none() { return {}; }
  static DelayModel homogeneous(double seconds) { return {Kind::kHomogeneous, seconds, 0.0, 0.0}; }
  static DelayModel heterogeneous(double lo, double hi) {
    return {Kind::kHeterogeneous, 0.0, lo, hi};
  }

  std::chrono::nanoseconds sample(Rng& rng) const;
};

void to_json(nlohmann::json& j, const DelayModel& d);
void from_json(const nlohmann::json& j, DelayModel& d);

struct EnvConfig {
  Task task = Task::kPointNav;
  int max_episode_steps = 150;
  double min_geo = 0.5;   // meters, PointGoalNav episode sampling
  double max_geo = 10.0;  // meters
  int patch_size = 5;
  int success_radius_cells = 0;
  double slack_penalty = 0.01;
  double success_reward_scale = 2.5;
  double flee_reward_scale = 5.0;
  double explore_reward_scale = 0.25;
  double explore_block_m = 1.0;
  // Goal vector fed to the policy on tasks without a goal.
  std::array<double, 3> dummy_goal{1.0, 1.0, 0.0};
};

struct StepInfo {
  bool success = false;
  double spl = 0.0;
  double flee_distance = 0.0;  // D_t
  int visited_count = 0;
  bool collided = false;
};

struct StepResult {
  Observation obs;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

// Success weighted by path length: S * l / max(l, p).
// Throws InvalidEpisodeError when l <= 0 or p < 0.
double compute_spl(bool success, double shortest_path_len, double agent_path_len);

// Uniform start/goal pair among free cells with geodesic distance in
// [min_geo, max_geo] meters, by rejection sampling (10,000 attempts).
// Throws InfeasibleConstraintError when no pair is found.
Episode generate_episode(const GridWorld& map, Rng& rng, double min_geo, double max_geo);

// Start cell for Flee/Explore; rejects starts with no reachable neighbor.
Episode generate_open_episode(const GridWorld& map, Rng& rng);

class NavEnv {
 public:
  NavEnv(std::shared_ptr<const GridWorld> map, EnvConfig config, std::string map_id = "",
         std::chrono::nanoseconds step_delay = std::chrono::nanoseconds{0});

  // Samples a new episode for the configured task.
  Observation reset(Rng& rng);
  // Starts a specific episode (used by evaluation and tests).
  Observation reset_to(const Episode& episode);

  // Dispatches to the task's step function. Throws ProtocolError when the
  // episode is already over.
  StepResult step(Action action);
  StepResult step(int action);

  const GridWorld& map() const { return *map_; }
  const EnvConfig& config() const { return config_; }
  const std::string& map_id() const { return map_id_; }
  const AgentState& agent() const { return agent_; }
  const Episode& episode() const { return episode_; }
  bool done() const { return done_; }
  std::chrono::nanoseconds step_delay() const { return step_delay_; }

  // Geodesic distance to the goal in cells (PointGoalNav).
  int geodesic_to_goal() const;
  int flee_max_cells() const { return flee_max_cells_; }
  int visited_count() const { return static_cast<int>(visited_.size()); }
  std::pair<int, int> block_of(Cell c) const;

  Observation observe() const;

 private:
  StepResult step_pointnav(Action action);
  StepResult step_flee(Action action);
  StepResult step_explore(Action action);
  // Applies the motion model; returns true when a forward move collided.
  bool move(Action action);
  void begin();

  std::shared_ptr<const GridWorld> map_;
  EnvConfig config_;
  std::string map_id_;
  std::chrono::nanoseconds step_delay_;
  AgentState agent_;
  Episode episode_;
  bool done_ = true;
  std::optional<DistanceField> field_;  // rooted at goal (PointNav) or start (Flee)
  int flee_max_cells_ = 0;
  double flee_prev_ = 0.0;
  std::set<std::pair<int, int>> visited_;
};

// Action of a scripted agent that follows a BFS shortest path to the goal
// and stops on it (PointGoalNav only). Turns toward the nearest descending
// neighbor, preferring the current heading.
Action shortest_path_action(const NavEnv& env);

// One JSONL row of the episode log.
struct EpisodeRecord {
  std::string map_id;
  AgentState start;
  Cell goal;
  double shortest_path_len = 0.0;
  double path_len = 0.0;
  bool success = false;
  double spl = 0.0;
  int steps = 0;
};

void to_json(nlohmann::json& j, const EpisodeRecord& r);
void from_json(const nlohmann::json& j, EpisodeRecord& r);

}  // namespace ddppo::envs
