#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "mppi/errors.hpp"
#include "mppi/harness.hpp"

namespace mppi {

namespace {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) {
        ok = true;
        break;
      }
    if (!ok) throw config_error(std::string("unknown key '") + key + "' in " + where);
  }
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::Baseline: return "baseline";
    case Algorithm::Clustered: return "clustered";
    case Algorithm::DcMppi: return "dc-mppi";
  }
  return "clustered";
}

Algorithm algorithm_from(const std::string& s) {
  if (s == "baseline") return Algorithm::Baseline;
  if (s == "clustered") return Algorithm::Clustered;
  if (s == "dc-mppi") return Algorithm::DcMppi;
  throw config_error("unknown algorithm '" + s + "'");
}

std::string sampling_name(SamplingMode m) {
  return m == SamplingMode::PerStep ? "per-step" : "constant-over-horizon";
}

SamplingMode sampling_from(const std::string& s) {
  if (s == "per-step") return SamplingMode::PerStep;
  if (s == "constant-over-horizon") return SamplingMode::ConstantOverHorizon;
  throw config_error("unknown sampling mode '" + s + "'");
}

std::string noise_name(NoiseKind k) {
  switch (k) {
    case NoiseKind::Noiseless: return "noiseless";
    case NoiseKind::Control: return "control";
    case NoiseKind::ControlAndProcess: return "control-and-process";
  }
  return "noiseless";
}

NoiseKind noise_from(const std::string& s) {
  if (s == "noiseless") return NoiseKind::Noiseless;
  if (s == "control") return NoiseKind::Control;
  if (s == "control-and-process") return NoiseKind::ControlAndProcess;
  throw config_error("unknown noise kind '" + s + "'");
}

std::string scenario_name(ScenarioType t) {
  switch (t) {
    case ScenarioType::Forest: return "forest";
    case ScenarioType::DynamicField: return "dynamic-field";
    case ScenarioType::HeadOn: return "head-on";
  }
  return "forest";
}

ScenarioType scenario_from(const std::string& s) {
  if (s == "forest") return ScenarioType::Forest;
  if (s == "dynamic-field") return ScenarioType::DynamicField;
  if (s == "head-on") return ScenarioType::HeadOn;
  throw config_error("unknown scenario type '" + s + "'");
}

json sigma_to_json(const Matrix& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Matrix sigma_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw config_error("sigma must be a non-empty matrix");
  const int n = static_cast<int>(j.size());
  Matrix m(n, n);
  for (int r = 0; r < n; ++r) {
    if (!j.at(r).is_array() || static_cast<int>(j.at(r).size()) != n)
      throw config_error("sigma must be square");
    for (int c = 0; c < n; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

}  // namespace

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["algorithm"] = algorithm_name(c.algorithm);
  j["seed"] = c.seed;
  j["runs"] = c.runs;
  j["threads"] = c.threads;
  j["step_limit"] = c.step_limit;
  j["mppi"] = {{"rollouts", c.rollout_count},
               {"horizon", c.horizon},
               {"lambda", c.lambda},
               {"sigma", sigma_to_json(c.sigma)},
               {"sampling", sampling_name(c.sampling)}};
  j["agent"] = {{"v", c.agent.v},
                {"r_min", c.agent.r_min},
                {"dt", c.agent.dt},
                {"goal_tolerance", c.goal_tolerance}};
  j["cost"] = {{"alpha", c.alpha}, {"beta", c.beta}, {"planning_margin", c.planning_margin}};
  j["dbscan"] = {{"eps_radius", c.dbscan.eps_radius}, {"min_pts", c.dbscan.min_pts}};
  j["noise"] = {{"kind", noise_name(c.noise.kind)},
                {"process_variance", c.noise.process_variance}};
  j["scenario"] = {{"type", scenario_name(c.scenario)},
                   {"bounds", {c.bounds.min_x, c.bounds.min_y, c.bounds.max_x, c.bounds.max_y}},
                   {"obstacle_count", c.obstacle_count},
                   {"size_range", {c.size_min, c.size_max}},
                   {"mover_count", c.mover_count},
                   {"forecast_samples", c.forecast_samples},
                   {"head_on",
                    {{"start_gap", c.head_on.start_gap},
                     {"speed_range", {c.head_on.speed_min, c.head_on.speed_max}},
                     {"lateral_jitter", c.head_on.lateral_jitter},
                     {"goal_distance", c.head_on.goal_distance}}}};
  return j.dump(2);
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw config_error(std::string("config parse error: ") + e.what());
  }
  try {
    ExperimentConfig c;
    check_keys(j, {"algorithm", "seed", "runs", "threads", "step_limit", "mppi", "agent", "cost",
                   "dbscan", "noise", "scenario"},
               "config");
    if (j.contains("algorithm")) c.algorithm = algorithm_from(j.at("algorithm").get<std::string>());
    read_if(j, "seed", c.seed);
    read_if(j, "runs", c.runs);
    read_if(j, "threads", c.threads);
    read_if(j, "step_limit", c.step_limit);

    if (j.contains("mppi")) {
      const json& m = j.at("mppi");
      check_keys(m, {"rollouts", "horizon", "lambda", "sigma", "sampling"}, "mppi");
      read_if(m, "rollouts", c.rollout_count);
      read_if(m, "horizon", c.horizon);
      read_if(m, "lambda", c.lambda);
      if (m.contains("sigma")) c.sigma = sigma_from_json(m.at("sigma"));
      if (m.contains("sampling")) c.sampling = sampling_from(m.at("sampling").get<std::string>());
    }
    if (j.contains("agent")) {
      const json& a = j.at("agent");
      check_keys(a, {"v", "r_min", "dt", "goal_tolerance"}, "agent");
      read_if(a, "v", c.agent.v);
      read_if(a, "r_min", c.agent.r_min);
      read_if(a, "dt", c.agent.dt);
      read_if(a, "goal_tolerance", c.goal_tolerance);
      if (!(c.agent.v > 0.0) || !(c.agent.r_min > 0.0) || !(c.agent.dt > 0.0))
        throw config_error("agent v, r_min and dt must be positive");
    }
    if (j.contains("cost")) {
      const json& k = j.at("cost");
      check_keys(k, {"alpha", "beta", "planning_margin"}, "cost");
      read_if(k, "alpha", c.alpha);
      read_if(k, "beta", c.beta);
      read_if(k, "planning_margin", c.planning_margin);
      if (!(c.alpha > 0.0) || !(c.beta > 0.0))
        throw config_error("alpha and beta must be positive");
      if (c.planning_margin < 0.0)
        throw config_error("planning_margin must be nonnegative");
    }
    if (j.contains("dbscan")) {
      const json& d = j.at("dbscan");
      check_keys(d, {"eps_radius", "min_pts"}, "dbscan");
      read_if(d, "eps_radius", c.dbscan.eps_radius);
      read_if(d, "min_pts", c.dbscan.min_pts);
    }
    if (j.contains("noise")) {
      const json& n = j.at("noise");
      check_keys(n, {"kind", "process_variance"}, "noise");
      if (n.contains("kind")) c.noise.kind = noise_from(n.at("kind").get<std::string>());
      read_if(n, "process_variance", c.noise.process_variance);
    }
    if (j.contains("scenario")) {
      const json& s = j.at("scenario");
      check_keys(s, {"type", "bounds", "obstacle_count", "size_range", "mover_count",
                     "forecast_samples", "head_on"},
                 "scenario");
      if (s.contains("type")) c.scenario = scenario_from(s.at("type").get<std::string>());
      if (s.contains("bounds")) {
        const auto& b = s.at("bounds");
        c.bounds = {b.at(0), b.at(1), b.at(2), b.at(3)};
      }
      read_if(s, "obstacle_count", c.obstacle_count);
      if (s.contains("size_range")) {
        c.size_min = s.at("size_range").at(0);
        c.size_max = s.at("size_range").at(1);
      }
      read_if(s, "mover_count", c.mover_count);
      read_if(s, "forecast_samples", c.forecast_samples);
      if (s.contains("head_on")) {
        const json& h = s.at("head_on");
        check_keys(h, {"start_gap", "speed_range", "lateral_jitter", "goal_distance"}, "head_on");
        read_if(h, "start_gap", c.head_on.start_gap);
        if (h.contains("speed_range")) {
          c.head_on.speed_min = h.at("speed_range").at(0);
          c.head_on.speed_max = h.at("speed_range").at(1);
        }
        read_if(h, "lateral_jitter", c.head_on.lateral_jitter);
        read_if(h, "goal_distance", c.head_on.goal_distance);
      }
    }
    return c;
  } catch (const json::exception& e) {
    throw config_error(std::string("config error: ") + e.what());
  }
}

namespace {

json episode_to_json(const EpisodeResult& e, bool with_timing) {
  json j;
  j["seed"] = e.seed;
  j["outcome"] = outcome_name(e.outcome);
  j["steps"] = e.steps;
  if (!e.note.empty()) j["note"] = e.note;
  if (!e.log_path.empty()) j["log"] = e.log_path;
  if (with_timing) j["mean_plan_ms"] = e.mean_plan_ms;
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

void write_batch_results(const AggregateStats& stats, const ExperimentConfig& config,
                         const std::string& out_dir) {
  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);

  json results;
  // Thread count is an execution knob, not part of the experiment; keeping it
  // out of the echo keeps results.json invariant across worker counts.
  json config_echo = json::parse(config_to_json(config));
  config_echo.erase("threads");
  results["config"] = config_echo;
  results["runs"] = stats.runs;
  results["collisions"] = stats.collisions;
  results["timeouts"] = stats.timeouts;
  results["successes"] = stats.successes;
  results["failure_pct"] = stats.failure_pct;
  json episodes = json::array();
  for (const EpisodeResult& e : stats.episodes) episodes.push_back(episode_to_json(e, false));
  results["episodes"] = episodes;
  write_text(dir / "results.json", results.dump(2) + "\n");

  json timings;
  timings["mean_plan_ms"] = stats.mean_plan_ms;
  json per_episode = json::array();
  for (const EpisodeResult& e : stats.episodes)
    per_episode.push_back({{"seed", e.seed}, {"mean_plan_ms", e.mean_plan_ms}});
  timings["episodes"] = per_episode;
  write_text(dir / "timings.json", timings.dump(2) + "\n");
}

namespace {

json forecast_to_json(const ObstacleForecast& fc) {
  json j;
  j["collision_radius"] = fc.collision_radius;
  j["theta"] = fc.theta;
  json trajectories = json::array();
  for (int p = 0; p < fc.trajectory_count; ++p) {
    json traj = json::array();
    for (int i = 0; i <= fc.horizon; ++i) {
      const auto s = fc.state(p, i);
      traj.push_back({s[0], s[1], s[2]});
    }
    trajectories.push_back(traj);
  }
  j["trajectories"] = trajectories;
  return j;
}

ObstacleForecast forecast_from_json(const json& j) {
  ObstacleForecast fc;
  fc.collision_radius = j.at("collision_radius").get<double>();
  fc.theta = j.at("theta").get<std::vector<double>>();
  const auto& trajectories = j.at("trajectories");
  fc.trajectory_count = static_cast<int>(trajectories.size());
  fc.horizon = fc.trajectory_count > 0 ? static_cast<int>(trajectories.at(0).size()) - 1 : 0;
  fc.state_dim = 3;
  fc.states.reserve(static_cast<std::size_t>(fc.trajectory_count) * (fc.horizon + 1) * 3);
  for (const auto& traj : trajectories)
    for (const auto& s : traj) {
      fc.states.push_back(s.at(0));
      fc.states.push_back(s.at(1));
      fc.states.push_back(s.at(2));
    }
  return fc;
}

}  // namespace

void write_episode_log(const EpisodeLog& log, const std::string& path) {
  json j;
  j["schema_version"] = 1;
  j["seed"] = log.seed;
  j["config"] = log.config_json.empty() ? json() : json::parse(log.config_json);
  if (!log.map_json.empty()) j["map"] = json::parse(log.map_json);
  if (!log.field_json.empty()) j["field"] = json::parse(log.field_json);
  j["start"] = log.start;
  j["goal"] = {log.goal_x, log.goal_y};
  j["outcome"] = outcome_name(log.outcome);
  if (!log.note.empty()) j["note"] = log.note;
  j["final_state_cost"] = log.final_state_cost;
  if (log.final_state.has_value()) j["final_state"] = *log.final_state;

  json steps = json::array();
  for (const StepRecord& r : log.records) {
    json s;
    s["step"] = r.step;
    s["x"] = r.x;
    s["y"] = r.y;
    s["theta"] = r.theta;
    s["reference_first"] = r.reference_first;
    s["planned_first"] = r.planned_first;
    s["applied"] = r.applied;
    s["state_cost"] = r.state_cost;
    s["cluster_count"] = r.cluster_count;
    s["chosen_cluster"] = r.chosen_cluster;
    s["max_cluster_fraction"] = r.max_cluster_fraction;
    s["candidate_costs"] = r.candidate_costs;
    s["reference_inputs"] = r.reference_inputs;
    s["planned_inputs"] = r.planned_inputs;
    s["plan_ms"] = r.plan_ms;
    steps.push_back(std::move(s));
  }
  j["steps"] = steps;

  json forecasts = json::array();
  for (const ObstacleForecast& fc : log.first_forecasts) forecasts.push_back(forecast_to_json(fc));
  j["first_forecasts"] = forecasts;

  write_text(path, j.dump(2) + "\n");
}

EpisodeLog read_episode_log(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open log " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("log parse error: " + std::string(e.what()));
  }
  EpisodeLog log;
  log.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("config") && !j.at("config").is_null()) log.config_json = j.at("config").dump();
  if (j.contains("map")) log.map_json = j.at("map").dump();
  if (j.contains("field")) log.field_json = j.at("field").dump();
  log.start = j.at("start").get<StateVec>();
  log.goal_x = j.at("goal").at(0);
  log.goal_y = j.at("goal").at(1);
  const std::string outcome = j.at("outcome").get<std::string>();
  log.outcome = outcome == "reached-goal" ? Outcome::ReachedGoal
              : outcome == "collided"     ? Outcome::Collided
                                          : Outcome::Timeout;
  if (j.contains("note")) log.note = j.at("note").get<std::string>();
  log.final_state_cost = j.value("final_state_cost", 0.0);
  if (j.contains("final_state")) log.final_state = j.at("final_state").get<StateVec>();
  for (const auto& s : j.at("steps")) {
    StepRecord r;
    r.step = s.at("step");
    r.x = s.at("x");
    r.y = s.at("y");
    r.theta = s.at("theta");
    r.reference_first = s.at("reference_first");
    r.planned_first = s.at("planned_first");
    r.applied = s.at("applied");
    r.state_cost = s.at("state_cost");
    r.cluster_count = s.at("cluster_count");
    r.chosen_cluster = s.at("chosen_cluster");
    r.max_cluster_fraction = s.at("max_cluster_fraction");
    r.candidate_costs = s.at("candidate_costs").get<std::vector<double>>();
    r.reference_inputs = s.at("reference_inputs").get<std::vector<double>>();
    r.planned_inputs = s.at("planned_inputs").get<std::vector<double>>();
    r.plan_ms = s.at("plan_ms");
    log.records.push_back(std::move(r));
  }
  for (const auto& f : j.at("first_forecasts")) log.first_forecasts.push_back(forecast_from_json(f));
  return log;
}

void export_trajectory_csv(const EpisodeLog& log, std::ostream& out) {
  out << "step,x,y,theta,u,cost\n";
  for (const StepRecord& r : log.records)
    out << r.step << ',' << r.x << ',' << r.y << ',' << r.theta << ',' << r.applied << ','
        << r.state_cost << '\n';
  if (log.final_state.has_value()) {
    const StateVec& x = *log.final_state;
    out << log.records.size() << ',' << x[0] << ',' << x[1] << ',' << x[2] << ",,"
        << log.final_state_cost << '\n';
  }
}

void export_clusters_json(const EpisodeLog& log, std::ostream& out) {
  json steps = json::array();
  for (const StepRecord& r : log.records)
    steps.push_back({{"step", r.step},
                     {"cluster_count", r.cluster_count},
                     {"chosen_cluster", r.chosen_cluster},
                     {"max_cluster_fraction", r.max_cluster_fraction},
                     {"candidate_costs", r.candidate_costs}});
  out << json({{"steps", steps}}).dump(2) << '\n';
}

void export_forecasts_json(const EpisodeLog& log, std::ostream& out) {
  json forecasts = json::array();
  for (const ObstacleForecast& fc : log.first_forecasts) forecasts.push_back(forecast_to_json(fc));
  out << json({{"first_forecasts", forecasts}}).dump(2) << '\n';
}

void export_value_slice_csv(std::span<const ValueSlicePoint> slice, std::ostream& out) {
  out << "deviation,cost,value\n";
  for (const ValueSlicePoint& p : slice)
    out << p.deviation << ',' << p.cost << ',' << p.value << '\n';
}

}  // namespace mppi
