#include "mppi/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

#include "mppi/errors.hpp"
#include "mppi/rng.hpp"

namespace mppi {

namespace {

constexpr std::uint64_t kPlanTag = 0x706C616EULL;
constexpr std::uint64_t kPlantTag = 0x706C6E74ULL;
constexpr std::uint64_t kStartTag = 0x73746172ULL;
constexpr std::uint64_t kHeadOnTag = 0x68656164ULL;

// The head-on obstacle's true turn rate is jittered uniformly in this range.
constexpr double kHeadOnOmegaJitter = 0.01;

inline double uniform_variance(double lo, double hi) {
  return (hi - lo) * (hi - lo) / 12.0;
}

std::uint64_t plan_seed_for(std::uint64_t episode_seed, int step) {
  return mix_seed(episode_seed, kPlanTag, static_cast<std::uint64_t>(step));
}

}  // namespace

int ExperimentConfig::timeout_steps() const {
  if (step_limit > 0) return step_limit;
  const Bounds& b = scenario == ScenarioType::Forest ? bounds : field_bounds;
  // Triple the time to drive around the workspace, in steps.
  return static_cast<int>(std::ceil(3.0 * (b.perimeter() / agent.v) / agent.dt));
}

std::string outcome_name(Outcome o) {
  switch (o) {
    case Outcome::ReachedGoal: return "reached-goal";
    case Outcome::Collided: return "collided";
    case Outcome::Timeout: return "timeout";
  }
  return "timeout";
}

namespace detail {

struct ScenarioInstance {
  StateVec start;
  double goal_x = 0.0, goal_y = 0.0;
  StaticMap map;          // forest only; the plant's collision geometry
  StaticMap planner_map;  // same obstacles inflated by the planning margin
  bool has_map = false;
  std::vector<DynamicField::Mover> movers;  // true motion, unknown to planner

  void make_planner_view(double margin) {
    if (!has_map) return;
    planner_map = map;
    planner_map.inflation = map.inflation + margin;
    planner_map.finalize();
  }
};

ScenarioInstance build_scenario(const ExperimentConfig& config, std::uint64_t seed) {
  ScenarioInstance scen;
  switch (config.scenario) {
    case ScenarioType::Forest: {
      scen.map = generate_forest(seed, config.bounds, config.obstacle_count, config.size_min,
                                 config.size_max);
      scen.has_map = true;
      RngStream rng(mix_seed(seed, kStartTag));
      const StateVec a = sample_free_pose(scen.map, rng);
      const StateVec g = sample_free_pose(scen.map, rng);
      scen.goal_x = g[0];
      scen.goal_y = g[1];
      scen.start = {a[0], a[1], std::atan2(g[1] - a[1], g[0] - a[0])};
      break;
    }
    case ScenarioType::DynamicField: {
      const DynamicField field = sample_dynamic_field(seed, config.mover_count);
      scen.movers = field.movers;
      RngStream rng(mix_seed(seed, kStartTag));
      auto clear_of_movers = [&](double x, double y) {
        for (const auto& m : scen.movers) {
          const double dx = x - m.x, dy = y - m.y;
          const double margin = m.radius + 1.0;
          if (dx * dx + dy * dy < margin * margin) return false;
        }
        return true;
      };
      double sx = 0, sy = 0, gx = 0, gy = 0;
      bool ok = false;
      for (int i = 0; i < 10000 && !ok; ++i) {
        sx = rng.next_range(field.bounds.min_x, field.bounds.max_x);
        sy = rng.next_range(field.bounds.min_y, field.bounds.max_y);
        ok = clear_of_movers(sx, sy);
      }
      if (!ok) throw config_error("dynamic scenario: no collision-free start");
      ok = false;
      for (int i = 0; i < 10000 && !ok; ++i) {
        gx = rng.next_range(field.bounds.min_x, field.bounds.max_x);
        gy = rng.next_range(field.bounds.min_y, field.bounds.max_y);
        ok = clear_of_movers(gx, gy);
      }
      if (!ok) throw config_error("dynamic scenario: no collision-free goal");
      scen.goal_x = gx;
      scen.goal_y = gy;
      scen.start = {sx, sy, std::atan2(gy - sy, gx - sx)};
      break;
    }
    case ScenarioType::HeadOn: {
      // One obstacle on a collision course with the straight-line reference:
      // it crosses the line obliquely and would meet the agent where the
      // agent will be after driving start_gap meters.
      RngStream rng(mix_seed(seed, kHeadOnTag));
      const HeadOnParams& h = config.head_on;
      const double sx = 10.0, sy = 25.0;
      scen.start = {sx, sy, 0.0};
      scen.goal_x = sx + h.goal_distance;
      scen.goal_y = sy;

      const double hit_time = h.start_gap / config.agent.v;
      const double aim_x = sx + h.start_gap;
      const double aim_y = sy + rng.next_range(-h.lateral_jitter, h.lateral_jitter);
      const double side = rng.next_uniform() < 0.5 ? -1.0 : 1.0;
      const double crossing = side * rng.next_range(0.25, 0.6);
      const double heading = 3.14159265358979324 + crossing;

      DynamicField::Mover m;
      m.v = rng.next_range(h.speed_min, h.speed_max);
      m.x = aim_x - m.v * hit_time * std::cos(heading);
      m.y = aim_y - m.v * hit_time * std::sin(heading);
      m.theta = heading;
      m.omega = rng.next_range(-kHeadOnOmegaJitter, kHeadOnOmegaJitter);
      m.radius = 1.0;
      scen.movers.push_back(m);
      break;
    }
  }
  scen.make_planner_view(config.planning_margin);
  return scen;
}

// The planner does not know individual mover velocities, only the sampling
// distribution the scenario drew them from, moment-matched to a Gaussian per
// input channel. The persistent-velocity forecast fan built from it is what
// buys both evasion margin and timing coverage.
std::vector<ObstacleModel> belief_models(const std::vector<DynamicField::Mover>& movers,
                                         const ExperimentConfig& config) {
  double speed_mean = 1.0, speed_var = uniform_variance(0.5, 1.5);
  const double omega_mean = 0.0;
  double omega_var = uniform_variance(-0.5, 0.5);
  if (config.scenario == ScenarioType::HeadOn) {
    speed_mean = 0.5 * (config.head_on.speed_min + config.head_on.speed_max);
    speed_var = uniform_variance(config.head_on.speed_min, config.head_on.speed_max);
    omega_var = uniform_variance(-kHeadOnOmegaJitter, kHeadOnOmegaJitter);
  }

  const StepFn g = make_velocity_arc_step(config.agent.dt);
  std::vector<double> diag = {std::max(speed_var, 1e-9), std::max(omega_var, 1e-9)};
  const Matrix sigma_o = Matrix::diagonal(diag);
  std::vector<ObstacleModel> models;
  models.reserve(movers.size());
  for (const auto& m : movers) {
    ObstacleModel model;
    model.step = g;
    model.initial = {m.x, m.y, m.theta};
    model.input_dim = 2;
    model.ref_inputs.resize(static_cast<std::size_t>(config.horizon) * 2);
    for (int i = 0; i < config.horizon; ++i) {
      model.ref_inputs[2 * i] = speed_mean;
      model.ref_inputs[2 * i + 1] = omega_mean;
    }
    model.input_sigma = sigma_o;
    model.collision_radius = m.radius + config.planning_margin;
    models.push_back(std::move(model));
  }
  return models;
}

struct PlanOutcome {
  std::vector<double> inputs;
  int cluster_count = 0;
  int chosen_cluster = kOutlierLabel;
  double max_cluster_fraction = 0.0;
  std::vector<double> candidate_costs;
  std::vector<ObstacleForecast> forecasts;
};

// The cost a frozen-world planner sees in a dynamic scenario: every mover held
// at its current pose for the whole horizon.
CostSpec snapshot_cost(const ScenarioInstance& scen, const ExperimentConfig& config) {
  AugmentedCostSpec spec;
  spec.base = make_goal_cost(nullptr, scen.goal_x, scen.goal_y, config.alpha);
  spec.beta = config.beta;
  for (const auto& m : scen.movers) {
    const double pose[3] = {m.x, m.y, m.theta};
    spec.forecasts.push_back(stationary_forecast(std::span<const double>(pose, 3), m.radius + config.planning_margin,
                                                 config.horizon));
  }
  return make_augmented_cost(spec, config.horizon);
}

PlanOutcome plan_step(const ExperimentConfig& config, const ControlPlan& plan,
                      std::span<const double> x, const ScenarioInstance& scen,
                      std::uint64_t plan_seed, bool want_forecasts) {
  const StepFn dynamics = make_dubins_step(config.agent);
  PlanOutcome out;

  if (config.algorithm == Algorithm::DcMppi && !scen.movers.empty()) {
    const std::vector<ObstacleModel> models = belief_models(scen.movers, config);
    const CostSpec base = make_goal_cost(scen.has_map ? &scen.planner_map : nullptr,
                                         scen.goal_x, scen.goal_y, config.alpha);
    DcResult dc = dc_mppi(plan, x, models, config.forecast_samples, config.rollout_count,
                          config.dbscan, base, config.beta, dynamics, config.sampling, plan_seed);
    out.inputs = std::move(dc.inputs);
    out.cluster_count = dc.diag.clusters.cluster_count;
    out.chosen_cluster = dc.diag.chosen_cluster;
    out.max_cluster_fraction = dc.diag.max_cluster_fraction;
    for (const auto& c : dc.diag.candidates) out.candidate_costs.push_back(c.evaluated_cost);
    if (want_forecasts) out.forecasts = std::move(dc.forecasts);
    return out;
  }

  CostSpec cost;
  if (scen.has_map) {
    cost = make_goal_cost(&scen.planner_map, scen.goal_x, scen.goal_y, config.alpha);
  } else if (!scen.movers.empty()) {
    cost = snapshot_cost(scen, config);
  } else {
    cost = make_goal_cost(nullptr, scen.goal_x, scen.goal_y, config.alpha);
  }

  const PerturbationSet eps = sample_perturbations(config.rollout_count, plan.horizon, plan.sigma,
                                                   config.sampling, plan_seed);
  const std::vector<Rollout> rollouts = batch_rollout(dynamics, x, plan, eps, cost);

  if (config.algorithm == Algorithm::Baseline) {
    out.inputs = baseline_update(plan, rollouts);
    return out;
  }
  ClusteredResult clustered = clustered_mppi(plan, rollouts, config.dbscan, cost, dynamics, x);
  out.inputs = std::move(clustered.inputs);
  out.cluster_count = clustered.diag.clusters.cluster_count;
  out.chosen_cluster = clustered.diag.chosen_cluster;
  out.max_cluster_fraction = clustered.diag.max_cluster_fraction;
  for (const auto& c : clustered.diag.candidates) out.candidate_costs.push_back(c.evaluated_cost);
  return out;
}

// Receding-horizon shift: drop the applied input, repeat the last one.
std::vector<double> shift_plan(std::span<const double> inputs, int input_dim) {
  std::vector<double> shifted(inputs.begin(), inputs.end());
  const std::size_t m = static_cast<std::size_t>(input_dim);
  if (shifted.size() > m) {
    std::copy(inputs.begin() + m, inputs.end(), shifted.begin());
    std::copy(inputs.end() - m, inputs.end(), shifted.end() - m);
  }
  return shifted;
}

double nominal_state_cost(std::span<const double> x, const ScenarioInstance& scen,
                          const ExperimentConfig& config) {
  return goal_distance_cost(x, scen.goal_x, scen.goal_y, config.alpha,
                            scen.has_map ? &scen.map : nullptr);
}

EpisodeResult run_loop(const ExperimentConfig& config, std::uint64_t seed, ScenarioInstance scen,
                       EpisodeLog* log) {
  ControlPlan plan = make_plan(config.horizon, config.sigma.rows(), config.sigma, config.lambda);

  EpisodeResult result;
  result.seed = seed;

  try {
    if (log != nullptr) {
      if (scen.has_map) log->map_json = map_to_json(scen.map);
      if (!scen.movers.empty()) {
        DynamicField field;
        field.seed = seed;
        field.movers = scen.movers;
        log->field_json = field_to_json(field);
      }
      log->start = scen.start;
      log->goal_x = scen.goal_x;
      log->goal_y = scen.goal_y;
    }

    const Cholesky sigma_factor(config.sigma);
    StateVec x = scen.start;
    const int limit = config.timeout_steps();
    double total_ms = 0.0;
    Outcome outcome = Outcome::Timeout;

    for (int step = 0; step < limit; ++step) {
      const std::vector<double> reference = plan.inputs;
      const auto t0 = std::chrono::steady_clock::now();
      detail::PlanOutcome planned = plan_step(config, plan, x, scen,
                                                      plan_seed_for(seed, step),
                                                      log != nullptr && step == 0);
      const double ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      total_ms += ms;

      // True plant: first input plus whatever the noise profile injects.
      RngStream plant(mix_seed(seed, kPlantTag, static_cast<std::uint64_t>(step)));
      double applied = planned.inputs[0];
      if (config.noise.kind != NoiseKind::Noiseless) {
        std::vector<double> z(plan.input_dim), noise(plan.input_dim);
        for (double& v : z) v = plant.next_normal();
        sigma_factor.apply_factor(z, noise);
        applied += noise[0];
      }

      if (log != nullptr) {
        StepRecord rec;
        rec.step = step;
        rec.x = x[0];
        rec.y = x[1];
        rec.theta = x[2];
        rec.reference_first = reference[0];
        rec.planned_first = planned.inputs[0];
        rec.applied = applied;
        rec.state_cost = nominal_state_cost(x, scen, config);
        rec.cluster_count = planned.cluster_count;
        rec.chosen_cluster = planned.chosen_cluster;
        rec.max_cluster_fraction = planned.max_cluster_fraction;
        rec.candidate_costs = planned.candidate_costs;
        rec.reference_inputs = reference;
        rec.planned_inputs = planned.inputs;
        rec.plan_ms = ms;
        log->records.push_back(std::move(rec));
        if (step == 0 && !planned.forecasts.empty())
          log->first_forecasts = std::move(planned.forecasts);
      }

      StateVec x_next(3);
      dubins_step(x, applied, config.agent, x_next);
      if (config.noise.kind == NoiseKind::ControlAndProcess) {
        for (std::size_t d = 0; d < x_next.size() && d < config.noise.process_variance.size(); ++d) {
          const double var = config.noise.process_variance[d];
          if (var > 0.0) x_next[d] += std::sqrt(var) * plant.next_normal();
        }
      }
      for (auto& m : scen.movers) {
        double pose[3] = {m.x, m.y, m.theta};
        double next[3];
        arc_step(pose, m.v, m.omega, config.agent.dt, next);
        m.x = next[0];
        m.y = next[1];
        m.theta = next[2];
      }

      x = x_next;
      result.steps = step + 1;

      bool collided = scen.has_map && static_collision(x, scen.map);
      if (!collided) {
        for (const auto& m : scen.movers) {
          const double dx = x[0] - m.x, dy = x[1] - m.y;
          if (dx * dx + dy * dy <= m.radius * m.radius) {
            collided = true;
            break;
          }
        }
      }
      if (collided) {
        outcome = Outcome::Collided;
        break;
      }
      const double gx = x[0] - scen.goal_x, gy = x[1] - scen.goal_y;
      if (std::sqrt(gx * gx + gy * gy) <= config.goal_tolerance) {
        outcome = Outcome::ReachedGoal;
        break;
      }

      plan.inputs = shift_plan(planned.inputs, plan.input_dim);
    }

    result.outcome = outcome;
    result.mean_plan_ms = result.steps > 0 ? total_ms / result.steps : 0.0;
    if (log != nullptr) {
      log->outcome = outcome;
      log->final_state = x;
      log->final_state_cost = nominal_state_cost(x, scen, config);
    }
  } catch (const std::exception& e) {
    // A planner or scenario failure never crashes the episode; it is reported
    // as a timeout with the error attached.
    result.outcome = Outcome::Timeout;
    result.note = e.what();
    if (log != nullptr) {
      log->outcome = result.outcome;
      log->note = result.note;
    }
  }
  return result;
}

}  // namespace detail

EpisodeResult run_episode(const ExperimentConfig& config, std::uint64_t seed, EpisodeLog* log) {
  // Validates horizon, sigma (SPD), lambda; throws config_error on bad setup.
  make_plan(config.horizon, config.sigma.rows(), config.sigma, config.lambda);
  if (config.rollout_count < 1) throw config_error("rollout count must be >= 1");

  if (log != nullptr) {
    log->seed = seed;
    log->config_json = config_to_json(config);
  }
  try {
    detail::ScenarioInstance scen = detail::build_scenario(config, seed);
    return detail::run_loop(config, seed, std::move(scen), log);
  } catch (const std::exception& e) {
    EpisodeResult result;
    result.seed = seed;
    result.outcome = Outcome::Timeout;
    result.note = e.what();
    if (log != nullptr) {
      log->outcome = result.outcome;
      log->note = result.note;
    }
    return result;
  }
}

EpisodeResult run_episode(const ExperimentConfig& config, std::uint64_t seed,
                          const CustomScenario& scenario, EpisodeLog* log) {
  make_plan(config.horizon, config.sigma.rows(), config.sigma, config.lambda);
  if (config.rollout_count < 1) throw config_error("rollout count must be >= 1");
  if (scenario.start.size() != 3) throw config_error("custom scenario start must be (x, y, theta)");

  if (log != nullptr) {
    log->seed = seed;
    log->config_json = config_to_json(config);
  }
  detail::ScenarioInstance scen;
  if (scenario.map.has_value()) {
    scen.map = *scenario.map;
    scen.has_map = true;
  }
  scen.movers = scenario.movers;
  scen.start = scenario.start;
  scen.goal_x = scenario.goal_x;
  scen.goal_y = scenario.goal_y;
  scen.make_planner_view(config.planning_margin);
  return detail::run_loop(config, seed, std::move(scen), log);
}

AggregateStats run_batch(const ExperimentConfig& config) {
  if (config.runs < 1) throw config_error("run count must be >= 1");
  // Fail fast on configs that could never plan.
  make_plan(config.horizon, config.sigma.rows(), config.sigma, config.lambda);

  AggregateStats stats;
  stats.runs = config.runs;
  stats.episodes.resize(config.runs);

  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  const int n_threads = std::clamp(config.threads > 0 ? config.threads : static_cast<int>(hw), 1,
                                   config.runs);

  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= config.runs) break;
      const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(i);
      try {
        stats.episodes[i] = run_episode(config, seed);
      } catch (const std::exception& e) {
        EpisodeResult failed;
        failed.outcome = Outcome::Timeout;
        failed.seed = seed;
        failed.note = e.what();
        stats.episodes[i] = std::move(failed);
      }
    }
  };
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  double total_ms = 0.0;
  long long total_steps = 0;
  for (const EpisodeResult& e : stats.episodes) {
    switch (e.outcome) {
      case Outcome::ReachedGoal: ++stats.successes; break;
      case Outcome::Collided: ++stats.collisions; break;
      case Outcome::Timeout: ++stats.timeouts; break;
    }
    total_ms += e.mean_plan_ms * e.steps;
    total_steps += e.steps;
  }
  stats.failure_pct = 100.0 * (stats.collisions + stats.timeouts) / stats.runs;
  stats.mean_plan_ms = total_steps > 0 ? total_ms / static_cast<double>(total_steps) : 0.0;
  return stats;
}

std::vector<ValueSlicePoint> value_slice(const ExperimentConfig& config, double dev_min,
                                         double dev_max, int point_count) {
  if (point_count < 2) throw config_error("value-slice needs at least 2 points");
  const detail::ScenarioInstance scen = detail::build_scenario(config, config.seed);
  const ControlPlan plan =
      make_plan(config.horizon, config.sigma.rows(), config.sigma, config.lambda);
  const StepFn dynamics = make_dubins_step(config.agent);

  // Evaluate deviations against the same cost the algorithm plans with at the
  // first control step.
  CostSpec cost;
  if (config.algorithm == Algorithm::DcMppi && !scen.movers.empty()) {
    const std::vector<ObstacleModel> models = detail::belief_models(scen.movers, config);
    AugmentedCostSpec spec;
    spec.base = make_goal_cost(scen.has_map ? &scen.planner_map : nullptr, scen.goal_x,
                               scen.goal_y, config.alpha);
    spec.beta = config.beta;
    spec.forecasts = simulate_obstacles(models, config.forecast_samples, config.horizon,
                                        dc_forecast_seed(plan_seed_for(config.seed, 0)));
    cost = make_augmented_cost(spec, config.horizon);
  } else if (scen.has_map) {
    cost = make_goal_cost(&scen.planner_map, scen.goal_x, scen.goal_y, config.alpha);
  } else if (!scen.movers.empty()) {
    cost = detail::snapshot_cost(scen, config);
  } else {
    cost = make_goal_cost(nullptr, scen.goal_x, scen.goal_y, config.alpha);
  }

  std::vector<ValueSlicePoint> slice(point_count);
  const std::vector<double> zero_eps(plan.inputs.size(), 0.0);
  double min_cost = std::numeric_limits<double>::infinity();
  for (int i = 0; i < point_count; ++i) {
    const double d = dev_min + (dev_max - dev_min) * i / (point_count - 1);
    ControlPlan offset = plan;
    for (int t = 0; t < plan.horizon; ++t) offset.input(t)[0] += d;
    const Rollout r = rollout(dynamics, scen.start, offset, zero_eps, cost);
    slice[i].deviation = d;
    slice[i].cost = r.cost;
    min_cost = std::min(min_cost, r.cost);
  }
  for (auto& p : slice)
    p.value = std::isfinite(p.cost) ? std::exp(-(p.cost - min_cost) / config.lambda) : 0.0;
  return slice;
}

}  // namespace mppi
