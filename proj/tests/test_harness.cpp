#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "mppi/errors.hpp"
#include "mppi/harness.hpp"

using namespace mppi;

namespace {

ExperimentConfig fast_forest_config() {
  ExperimentConfig config;
  config.scenario = ScenarioType::Forest;
  config.rollout_count = 100;
  config.horizon = 25;
  config.bounds = {0, 0, 20, 20};
  config.obstacle_count = 6;
  return config;
}

}  // namespace

TEST_CASE("config defaults round-trip through JSON") {
  const ExperimentConfig original;
  const ExperimentConfig parsed = config_from_json(config_to_json(original));
  CHECK(config_to_json(parsed) == config_to_json(original));
  CHECK(parsed.rollout_count == 500);
  CHECK(parsed.horizon == 50);
  CHECK(parsed.lambda == 1.0);
  CHECK(parsed.alpha == 1000.0);
  CHECK(parsed.beta == 10.0);
  CHECK(parsed.forecast_samples == 25);
  CHECK(parsed.sigma(0, 0) == 0.1);
  CHECK(parsed.sampling == SamplingMode::ConstantOverHorizon);
  CHECK(parsed.dbscan.eps_radius == 0.12);
  CHECK(parsed.dbscan.min_pts == 2);
}

TEST_CASE("unknown config keys are rejected at every level") {
  CHECK_THROWS_AS(config_from_json(R"({"algorithmm": "baseline"})"), config_error);
  CHECK_THROWS_AS(config_from_json(R"({"mppi": {"rollout": 5}})"), config_error);
  CHECK_THROWS_AS(config_from_json(R"({"scenario": {"shape": "forest"}})"), config_error);
  CHECK_THROWS_AS(config_from_json(R"({"scenario": {"head_on": {"gap": 1}}})"), config_error);
  CHECK_THROWS_AS(config_from_json(R"({"algorithm": "brute-force"})"), config_error);
  CHECK_THROWS_AS(config_from_json("not json"), config_error);
  CHECK_NOTHROW(config_from_json(R"({"algorithm": "dc-mppi", "mppi": {"rollouts": 64}})"));
}

TEST_CASE("timeout steps follow the perimeter rule") {
  ExperimentConfig config;  // 50x50 bounds, v=1, dt=0.1
  CHECK(config.timeout_steps() == 6000);
  config.step_limit = 123;
  CHECK(config.timeout_steps() == 123);
}

TEST_CASE("a goal one meter ahead is reached in a few steps") {
  ExperimentConfig config;
  config.scenario = ScenarioType::HeadOn;
  config.algorithm = Algorithm::Baseline;
  config.rollout_count = 100;
  config.horizon = 20;
  config.head_on.goal_distance = 1.0;
  config.head_on.start_gap = 60.0;  // obstacle far out of the picture
  const EpisodeResult result = run_episode(config, 4);
  CHECK(result.outcome == Outcome::ReachedGoal);
  CHECK(result.steps <= 10);
}

TEST_CASE("an agent walled in with no escape passage times out") {
  // A closed ring of obstacles around the start, goal outside. The enclosure
  // leaves room to loiter (free radius ~4 m, turning circle 2 m) but no gap to
  // escape through, so the episode runs out its step budget without crashing.
  StaticMap map;
  map.bounds = {0, 0, 30, 30};
  constexpr double kTau = 6.283185307179586;
  for (int i = 0; i < 14; ++i) {
    const double angle = kTau * i / 14;
    map.circles.push_back({12.0 + 5.5 * std::cos(angle), 12.0 + 5.5 * std::sin(angle), 1.6});
  }
  map.finalize();

  CustomScenario scenario;
  scenario.map = map;
  scenario.start = {12.0, 12.0, 0.0};
  scenario.goal_x = 27.0;
  scenario.goal_y = 12.0;

  ExperimentConfig config;
  config.rollout_count = 100;
  config.horizon = 50;  // must see past the wall standoff distance
  config.step_limit = 250;
  const EpisodeResult result = run_episode(config, 5, scenario);
  CHECK(result.outcome == Outcome::Timeout);
  CHECK(result.steps == 250);
}

TEST_CASE("episodes are deterministic for a fixed config and seed") {
  ExperimentConfig config = fast_forest_config();
  config.noise.kind = NoiseKind::Control;
  EpisodeLog log_a, log_b;
  const EpisodeResult a = run_episode(config, 11, &log_a);
  const EpisodeResult b = run_episode(config, 11, &log_b);
  CHECK(a.outcome == b.outcome);
  CHECK(a.steps == b.steps);
  REQUIRE(log_a.records.size() == log_b.records.size());
  for (std::size_t i = 0; i < log_a.records.size(); ++i) {
    CHECK(log_a.records[i].x == log_b.records[i].x);
    CHECK(log_a.records[i].y == log_b.records[i].y);
    CHECK(log_a.records[i].applied == log_b.records[i].applied);
    CHECK(log_a.records[i].planned_inputs == log_b.records[i].planned_inputs);
  }
}

TEST_CASE("warm start shifts the previous solution and repeats the last input") {
  ExperimentConfig config = fast_forest_config();
  EpisodeLog log;
  run_episode(config, 3, &log);
  REQUIRE(log.records.size() >= 2);
  for (std::size_t t = 0; t + 1 < log.records.size(); ++t) {
    const auto& planned = log.records[t].planned_inputs;
    const auto& next_ref = log.records[t + 1].reference_inputs;
    REQUIRE(planned.size() == next_ref.size());
    for (std::size_t i = 0; i + 1 < planned.size(); ++i) CHECK(next_ref[i] == planned[i + 1]);
    CHECK(next_ref.back() == planned.back());
  }
}

TEST_CASE("the first reference is straight ahead") {
  ExperimentConfig config = fast_forest_config();
  EpisodeLog log;
  run_episode(config, 8, &log);
  REQUIRE_FALSE(log.records.empty());
  for (double u : log.records.front().reference_inputs) CHECK(u == 0.0);
}

TEST_CASE("a single-run batch equals the episode it contains") {
  ExperimentConfig config = fast_forest_config();
  config.runs = 1;
  config.seed = 21;
  const AggregateStats stats = run_batch(config);
  const EpisodeResult episode = run_episode(config, 21);
  REQUIRE(stats.episodes.size() == 1);
  CHECK(stats.episodes[0].outcome == episode.outcome);
  CHECK(stats.episodes[0].steps == episode.steps);
  CHECK(stats.runs == 1);
}

TEST_CASE("batch outcomes partition the runs") {
  ExperimentConfig config = fast_forest_config();
  config.runs = 12;
  config.noise.kind = NoiseKind::Control;
  config.step_limit = 400;
  const AggregateStats stats = run_batch(config);
  CHECK(stats.collisions + stats.timeouts + stats.successes == stats.runs);
  CHECK(stats.failure_pct ==
        doctest::Approx(100.0 * (stats.collisions + stats.timeouts) / stats.runs));
}

TEST_CASE("batch results are identical across thread counts") {
  ExperimentConfig config = fast_forest_config();
  config.runs = 6;
  config.noise.kind = NoiseKind::ControlAndProcess;
  config.step_limit = 300;
  config.threads = 1;
  const AggregateStats serial = run_batch(config);
  config.threads = 4;
  const AggregateStats parallel = run_batch(config);
  REQUIRE(serial.episodes.size() == parallel.episodes.size());
  for (std::size_t i = 0; i < serial.episodes.size(); ++i) {
    CHECK(serial.episodes[i].outcome == parallel.episodes[i].outcome);
    CHECK(serial.episodes[i].steps == parallel.episodes[i].steps);
  }
}

TEST_CASE("scenario and planner failures surface as annotated timeouts") {
  ExperimentConfig config = fast_forest_config();
  config.bounds = {0, 0, 3, 3};  // obstacles cannot fit, generation fails
  const EpisodeResult result = run_episode(config, 2);
  CHECK(result.outcome == Outcome::Timeout);
  CHECK(result.steps == 0);
  CHECK_FALSE(result.note.empty());
}

TEST_CASE("episode logs round-trip and export") {
  ExperimentConfig config = fast_forest_config();
  EpisodeLog log;
  const EpisodeResult result = run_episode(config, 13, &log);

  const std::string path = "test_episode_log.json";
  write_episode_log(log, path);
  const EpisodeLog loaded = read_episode_log(path);
  CHECK(loaded.records.size() == log.records.size());
  CHECK(loaded.outcome == log.outcome);
  CHECK(loaded.goal_x == log.goal_x);

  std::ostringstream csv;
  export_trajectory_csv(loaded, csv);
  const std::string text = csv.str();
  const long rows = std::count(text.begin(), text.end(), '\n');
  CHECK(rows == result.steps + 1 + 1);  // header + steps+1 states

  std::ostringstream clusters;
  export_clusters_json(loaded, clusters);
  CHECK(clusters.str().find("cluster_count") != std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("an empty log exports a headers-only CSV") {
  EpisodeLog empty;
  std::ostringstream csv;
  export_trajectory_csv(empty, csv);
  CHECK(csv.str() == "step,x,y,theta,u,cost\n");
}

TEST_CASE("the head-on value slice shows a contiguous high-cost band at center") {
  ExperimentConfig config;
  config.scenario = ScenarioType::HeadOn;
  config.algorithm = Algorithm::DcMppi;
  config.seed = 1;
  config.head_on.start_gap = 4.0;  // crossing falls inside the horizon, so
                                   // the predicted occupancy shows up at t=0
  const auto slice = value_slice(config, -0.6, 0.6, 81);
  REQUIRE(slice.size() == 81);

  double min_cost = 1e300, max_cost = -1e300;
  for (const auto& p : slice) {
    min_cost = std::min(min_cost, p.cost);
    max_cost = std::max(max_cost, p.cost);
  }
  CHECK(max_cost > min_cost + config.beta);  // the crossing raises a real ridge

  // The longest contiguous run above the half-height threshold is the band
  // raised by the predicted crossing; it must be wide and sit over the
  // straight-ahead deviations.
  const double threshold = min_cost + 0.5 * (max_cost - min_cost);
  int best_start = -1, best_len = 0, run_start = -1;
  for (int i = 0; i <= 81; ++i) {
    if (i < 81 && slice[i].cost >= threshold) {
      if (run_start < 0) run_start = i;
    } else if (run_start >= 0) {
      if (i - run_start > best_len) {
        best_len = i - run_start;
        best_start = run_start;
      }
      run_start = -1;
    }
  }
  REQUIRE(best_len >= 5);
  CHECK(slice[best_start].deviation < 0.25);
  CHECK(slice[best_start + best_len - 1].deviation > -0.25);

  std::ostringstream csv;
  export_value_slice_csv(slice, csv);
  CHECK(csv.str().rfind("deviation,cost,value\n", 0) == 0);
}

TEST_CASE("batch result files are byte-identical across thread counts") {
  ExperimentConfig config = fast_forest_config();
  config.runs = 4;
  config.step_limit = 250;
  config.threads = 1;
  const AggregateStats serial = run_batch(config);
  write_batch_results(serial, config, "test_out_serial");
  config.threads = 4;
  const AggregateStats parallel = run_batch(config);
  write_batch_results(parallel, config, "test_out_parallel");

  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string a = slurp("test_out_serial/results.json");
  const std::string b = slurp("test_out_parallel/results.json");
  CHECK(a == b);
  CHECK_FALSE(a.empty());
  // timings.json may differ; it carries the measured wall clock.
  std::filesystem::remove_all("test_out_serial");
  std::filesystem::remove_all("test_out_parallel");
}
