#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mppi/clustering.hpp"
#include "mppi/environment.hpp"
#include "mppi/obstacles.hpp"

namespace mppi {

enum class Algorithm { Baseline, Clustered, DcMppi };
enum class ScenarioType { Forest, DynamicField, HeadOn };

// One obstacle aimed to cross the straight-line reference right where the
// agent will be after driving start_gap meters (a jittered collision course).
struct HeadOnParams {
  double start_gap = 25.0;       // m the agent travels before the crossing
  double speed_min = 0.8;        // true obstacle speed range, m/s
  double speed_max = 1.4;
  double lateral_jitter = 0.5;   // m, aim-point offset off the reference line
  double goal_distance = 40.0;   // m from agent start to goal
};

// Full experiment description. Defaults follow the desk-scale setup:
// K=500 rollouts, lambda=1, alpha=1000, scalar input covariance 0.1 on the
// heading-rate channel, perturbations constant over the horizon, P=25 obstacle
// samples, beta=10.
struct ExperimentConfig {
  Algorithm algorithm = Algorithm::Clustered;
  std::uint64_t seed = 1;
  int runs = 1;
  int threads = 0;  // 0 = hardware concurrency

  int rollout_count = 500;  // K
  int horizon = 50;         // N
  double lambda = 1.0;
  Matrix sigma = Matrix::scalar(0.1);
  SamplingMode sampling = SamplingMode::ConstantOverHorizon;

  DubinsModel agent;  // v=1, r_min=1, dt=0.1
  double goal_tolerance = 0.5;

  double alpha = 1000.0;
  double beta = 10.0;
  int forecast_samples = 25;  // P
  // Clearance buffer added to obstacles in the planner's view only, static
  // and moving alike; episode collision checks keep the true geometry.
  double planning_margin = 0.25;

  DbscanParams dbscan;  // fine-grained defaults, see clustering.hpp
  NoiseProfile noise;

  ScenarioType scenario = ScenarioType::Forest;
  Bounds bounds{0.0, 0.0, 50.0, 50.0};
  int obstacle_count = 30;
  double size_min = 0.5, size_max = 2.5;
  Bounds field_bounds{0.0, 0.0, 75.0, 50.0};
  int mover_count = 100;
  HeadOnParams head_on;

  int step_limit = 0;  // 0 = 3 * (workspace perimeter / v) / dt

  int timeout_steps() const;
};

// Strict JSON round-trip: unknown keys are rejected with config_error.
ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& config);

enum class Outcome { ReachedGoal, Collided, Timeout };
std::string outcome_name(Outcome o);

struct EpisodeResult {
  Outcome outcome = Outcome::Timeout;
  int steps = 0;
  double mean_plan_ms = 0.0;  // measured; excluded from determinism contracts
  std::uint64_t seed = 0;
  std::string note;
  std::string log_path;  // where the trajectory log went, when one was kept
};

struct StepRecord {
  int step = 0;
  double x = 0.0, y = 0.0, theta = 0.0;  // state before applying the input
  double reference_first = 0.0;          // warm-start reference input at step 0
  double planned_first = 0.0;            // first input of the new solution
  double applied = 0.0;                  // input applied on the true plant
  double state_cost = 0.0;               // nominal running cost at this state
  int cluster_count = 0;
  int chosen_cluster = kOutlierLabel;
  double max_cluster_fraction = 0.0;
  std::vector<double> candidate_costs;
  std::vector<double> reference_inputs;  // full warm-start reference
  std::vector<double> planned_inputs;    // full new solution
  double plan_ms = 0.0;
};

// Everything needed to replay and plot one episode.
struct EpisodeLog {
  std::uint64_t seed = 0;
  std::string config_json;
  std::string map_json;    // forest scenarios
  std::string field_json;  // dynamic scenarios
  StateVec start;
  double goal_x = 0.0, goal_y = 0.0;
  Outcome outcome = Outcome::Timeout;
  std::string note;
  std::vector<StepRecord> records;
  std::optional<StateVec> final_state;
  double final_state_cost = 0.0;
  std::vector<ObstacleForecast> first_forecasts;  // dc-mppi, step 0
};

EpisodeResult run_episode(const ExperimentConfig& config, std::uint64_t seed,
                          EpisodeLog* log = nullptr);

// Caller-supplied scenario for constructed cases and replays; bypasses the
// procedural generators but keeps the closed-loop protocol.
struct CustomScenario {
  std::optional<StaticMap> map;
  std::vector<DynamicField::Mover> movers;
  StateVec start;  // (x, y, theta)
  double goal_x = 0.0, goal_y = 0.0;
};

EpisodeResult run_episode(const ExperimentConfig& config, std::uint64_t seed,
                          const CustomScenario& scenario, EpisodeLog* log = nullptr);

struct AggregateStats {
  int runs = 0;
  int collisions = 0;
  int timeouts = 0;
  int successes = 0;
  double failure_pct = 0.0;  // collisions + timeouts, as % of runs
  double mean_plan_ms = 0.0;
  std::vector<EpisodeResult> episodes;
};

// Episodes run over seeds config.seed + 0 .. + runs-1, in parallel; the
// aggregation order is by seed, so the statistics are thread-count invariant.
AggregateStats run_batch(const ExperimentConfig& config);

// results.json holds everything deterministic; timing lands in timings.json.
void write_batch_results(const AggregateStats& stats, const ExperimentConfig& config,
                         const std::string& out_dir);

void write_episode_log(const EpisodeLog& log, const std::string& path);
EpisodeLog read_episode_log(const std::string& path);

// step,x,y,theta,u,cost rows; one row per visited state (steps + 1), headers
// only for an empty log.
void export_trajectory_csv(const EpisodeLog& log, std::ostream& out);
void export_clusters_json(const EpisodeLog& log, std::ostream& out);
void export_forecasts_json(const EpisodeLog& log, std::ostream& out);

struct ValueSlicePoint {
  double deviation = 0.0;  // constant input offset from the reference
  double cost = 0.0;       // noiseless rollout cost of that offset
  double value = 0.0;      // exp(-(cost - min cost)/lambda)
};

// Sweeps a constant control deviation over [dev_min, dev_max] at the initial
// state of the configured scenario, evaluating each deviation with the same
// cost the configured algorithm would plan with.
std::vector<ValueSlicePoint> value_slice(const ExperimentConfig& config, double dev_min,
                                         double dev_max, int point_count);
void export_value_slice_csv(std::span<const ValueSlicePoint> slice, std::ostream& out);

}  // namespace mppi
