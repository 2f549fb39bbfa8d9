// Python bindings. Structured values cross the boundary as JSON text; the
// ddppo package converts them to and from dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "ddppo/common/error.hpp"
#include "ddppo/distrib/collective.hpp"
#include "ddppo/envs/grid.hpp"
#include "ddppo/envs/nav_env.hpp"
#include "ddppo/harness/bench.hpp"
#include "ddppo/harness/eval.hpp"
#include "ddppo/nn/checkpoint.hpp"
#include "ddppo/rollout/rollout.hpp"
#include "ddppo/trainer/config.hpp"
#include "ddppo/trainer/trainer.hpp"
#include "json.hpp"

namespace py = pybind11;
using namespace ddppo;
using nlohmann::json;

namespace {

trainer::TrainConfig parse_config(const std::string& text) {
  auto cfg = json::parse(text).get<trainer::TrainConfig>();
  cfg.validate();
  return cfg;
}

std::pair<std::vector<double>, std::vector<double>> gae(const std::vector<double>& rewards,
                                                        const std::vector<double>& values,
                                                        const std::vector<bool>& dones, double bootstrap,
                                                        double gamma, double tau) {
  if (rewards.size() != values.size() || rewards.size() != dones.size()) {
    throw ConfigError("rewards, values and dones must have equal length");
  }
  rollout::RolloutBuffer buf(1, rewards.size(), 1);
  const double obs = 0.0;
  for (std::size_t t = 0; t < rewards.size(); ++t) {
    buf.push(0, std::span<const double>(&obs, 1), 0, 0.0, values[t], rewards[t], dones[t]);
  }
  buf.set_bootstrap(0, bootstrap);
  auto out = rollout::compute_gae(buf, gamma, tau);
  return {std::move(out.advantages[0]), std::move(out.returns[0])};
}

std::string train(const std::string& config_text) {
  const auto cfg = parse_config(config_text);
  auto solo = distrib::CollectiveHandle::solo();
  trainer::Worker worker(cfg, solo, nullptr);
  json rows = json::array();
  for (const auto& s : worker.train()) rows.push_back(s);
  return rows.dump();
}

std::string evaluate(const std::string& config_text, const std::string& policy, const std::string& checkpoint,
                     const std::string& split, int episodes, int maps, int samples, bool greedy,
                     std::uint64_t seed) {
  const auto cfg = parse_config(config_text);
  harness::EvalOptions opt;
  opt.env = cfg.env;
  opt.maps = cfg.maps;
  opt.split = split == "train" ? envs::MapSplit::kTrain : envs::MapSplit::kHeldOut;
  opt.num_maps = maps;
  opt.num_episodes = episodes;
  opt.samples_per_episode = samples;
  opt.seed = seed;
  harness::Policy pol;
  if (policy == "oracle") {
    pol = harness::shortest_path_policy();
  } else if (policy == "stop") {
    pol = harness::stop_policy();
  } else if (policy == "network") {
    auto ck = nn::load_checkpoint(checkpoint, cfg.net_spec());
    pol = harness::network_policy(ck.spec, std::move(ck.params), greedy);
  } else {
    throw ConfigError("unknown policy '" + policy + "'");
  }
  const auto report = harness::evaluate(pol, opt);
  json rows = json::array();
  for (const auto& r : report.rows) rows.push_back(r);
  return json{{"success", report.success_rate()},
              {"spl", report.mean_spl()},
              {"flee_distance", report.mean_flee_distance()},
              {"visited_blocks", report.mean_visited_blocks()},
              {"rows", rows}}
      .dump();
}

std::string aggregate_bins(const std::string& rows_text, const std::vector<double>& edges) {
  harness::EvalReport report;
  for (const auto& r : json::parse(rows_text)) report.rows.push_back(r.get<harness::EvalRow>());
  return harness::bins_to_json(harness::aggregate_bins(report, edges)).dump();
}

py::tuple step_result(const envs::StepResult& r) {
  py::dict info;
  info["success"] = r.info.success;
  info["spl"] = r.info.spl;
  info["flee_distance"] = r.info.flee_distance;
  info["visited_count"] = r.info.visited_count;
  info["collided"] = r.info.collided;
  return py::make_tuple(r.obs.to_vector(), r.reward, r.done, info);
}

}  // namespace

PYBIND11_MODULE(_ddppo, m) {
  m.doc() = "DD-PPO core: environments, metrics, training and evaluation";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InvalidEpisodeError>(m, "InvalidEpisodeError", PyExc_ValueError);
  py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_RuntimeError);

  m.def("compute_spl", &envs::compute_spl, py::arg("success"), py::arg("shortest_path_len"),
        py::arg("agent_path_len"));
  m.def("compute_gae", &gae, py::arg("rewards"), py::arg("values"), py::arg("dones"), py::arg("bootstrap"),
        py::arg("gamma"), py::arg("tau"), "advantages and returns for one trajectory");

  m.def("default_config_json", [] { return json(trainer::TrainConfig{}).dump(); });
  m.def("normalize_config_json", [](const std::string& t) { return json(parse_config(t)).dump(); });
  m.def("train_json", &train, py::arg("config"), py::call_guard<py::gil_scoped_release>());
  m.def("evaluate_json", &evaluate, py::arg("config"), py::arg("policy"), py::arg("checkpoint"), py::arg("split"),
        py::arg("episodes"), py::arg("maps"), py::arg("samples"), py::arg("greedy"), py::arg("seed"),
        py::call_guard<py::gil_scoped_release>());
  m.def("aggregate_bins_json", &aggregate_bins, py::arg("rows"), py::arg("edges"));
  m.def("bootstrap_mean_ci",
        [](const std::vector<double>& v, int resamples, std::uint64_t seed) {
          const auto c = harness::bootstrap_mean_ci(v, resamples, seed);
          return py::make_tuple(c.mean, c.lo, c.hi);
        },
        py::arg("values"), py::arg("resamples") = 10000, py::arg("seed") = 1);

  py::class_<envs::GridWorld, std::shared_ptr<envs::GridWorld>>(m, "GridWorld")
      .def(py::init<int, int, double>(), py::arg("width"), py::arg("height"), py::arg("cell_size") = 0.25)
      .def_static("random",
                  [](int w, int h, double density, std::uint64_t seed) {
                    Rng rng(seed);
                    return std::make_shared<envs::GridWorld>(envs::generate_random_map(w, h, density, rng));
                  },
                  py::arg("width"), py::arg("height"), py::arg("obstacle_density"), py::arg("seed"))
      .def_static("from_text",
                  [](const std::string& text) {
                    std::istringstream in(text);
                    return std::make_shared<envs::GridWorld>(envs::GridWorld::parse(in));
                  })
      .def_property_readonly("width", &envs::GridWorld::width)
      .def_property_readonly("height", &envs::GridWorld::height)
      .def("is_free", [](const envs::GridWorld& g, int x, int y) { return g.is_free({x, y}); })
      .def("set_occupied", [](envs::GridWorld& g, int x, int y, bool occ) { g.set_occupied({x, y}, occ); })
      .def("to_text", &envs::GridWorld::to_text)
      .def("geodesic",
           [](const envs::GridWorld& g, int x, int y) {
             const auto f = envs::bfs_geodesic(g, {x, y});
             std::vector<std::vector<int>> rows(static_cast<std::size_t>(g.height()));
             for (int yy = 0; yy < g.height(); ++yy)
               for (int xx = 0; xx < g.width(); ++xx) rows[static_cast<std::size_t>(yy)].push_back(f.at({xx, yy}));
             return rows;
           },
           "cell distances from (x, y); -1 where unreachable");

  py::class_<envs::NavEnv>(m, "NavEnv")
      .def(py::init([](std::shared_ptr<envs::GridWorld> map, const std::string& task, int max_steps) {
             envs::EnvConfig cfg;
             cfg.task = envs::task_from_string(task);
             cfg.max_episode_steps = max_steps;
             return envs::NavEnv(std::move(map), cfg);
           }),
           py::arg("map"), py::arg("task") = "pointnav", py::arg("max_episode_steps") = 150)
      .def("reset", [](envs::NavEnv& e, std::uint64_t seed) {
             Rng rng(seed);
             return e.reset(rng).to_vector();
           },
           py::arg("seed"))
      .def("reset_to",
           [](envs::NavEnv& e, int sx, int sy, int heading, int gx, int gy) {
             envs::Episode ep;
             ep.start = envs::AgentState{{sx, sy}, static_cast<envs::Heading>(heading), 0};
             ep.goal = {gx, gy};
             const auto f = envs::bfs_geodesic(e.map(), ep.goal);
             const int d = f.at(ep.start.cell);
             if (d <= 0 && e.config().task == envs::Task::kPointNav) {
               throw InvalidEpisodeError("goal must be reachable and distinct from the start");
             }
             ep.shortest_path_len = std::max(d, 1) * e.map().cell_size();
             return e.reset_to(ep).to_vector();
           },
           py::arg("start_x"), py::arg("start_y"), py::arg("heading"), py::arg("goal_x"), py::arg("goal_y"))
      .def("step", [](envs::NavEnv& e, int a) { return step_result(e.step(a)); }, py::arg("action"))
      .def("shortest_path_action", [](const envs::NavEnv& e) { return static_cast<int>(envs::shortest_path_action(e)); })
      .def_property_readonly("done", &envs::NavEnv::done)
      .def_property_readonly("position", [](const envs::NavEnv& e) {
        return py::make_tuple(e.agent().cell.x, e.agent().cell.y, static_cast<int>(e.agent().heading));
      })
      .def_property_readonly("shortest_path_len", [](const envs::NavEnv& e) { return e.episode().shortest_path_len; })
      .def_property_readonly("agent_path_len", [](const envs::NavEnv& e) { return e.episode().agent_path_len; });
}
