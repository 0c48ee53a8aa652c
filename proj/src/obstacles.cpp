#include "mppi/obstacles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "mppi/errors.hpp"
#include "mppi/rng.hpp"

namespace mppi {

std::vector<ObstacleForecast> simulate_obstacles(std::span<const ObstacleModel> models,
                                                 int samples_per_obstacle, int horizon,
                                                 std::uint64_t seed, ForecastWeighting weighting,
                                                 ForecastStats* stats, ForecastSampling sampling) {
  if (samples_per_obstacle < 1) throw config_error("simulate_obstacles: P must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  long long step_calls = 0;

  std::vector<ObstacleForecast> forecasts;
  forecasts.reserve(models.size());
  for (std::size_t l = 0; l < models.size(); ++l) {
    const ObstacleModel& model = models[l];
    const int m = model.input_dim;
    const int n = static_cast<int>(model.initial.size());
    const Cholesky factor(model.input_sigma);  // throws config_error unless SPD

    ObstacleForecast fc;
    fc.trajectory_count = samples_per_obstacle;
    fc.horizon = horizon;
    fc.state_dim = n;
    fc.collision_radius = model.collision_radius;
    fc.states.assign(static_cast<std::size_t>(samples_per_obstacle) * (horizon + 1) * n, 0.0);
    fc.theta.assign(samples_per_obstacle, 0.0);

    // Constant-velocity fans are sampled with a Latin hypercube over the
    // strata of each input channel: the P rays then cover the belief's tails
    // deterministically instead of leaving them to draw luck.
    std::vector<std::vector<int>> strata;
    if (sampling == ForecastSampling::ConstantVelocity) {
      strata.assign(m, std::vector<int>(samples_per_obstacle));
      for (int d = 0; d < m; ++d) {
        for (int p = 0; p < samples_per_obstacle; ++p) strata[d][p] = p;
        RngStream shuffler(mix_seed(seed, static_cast<std::uint64_t>(l), 0x73687566ULL,
                                    static_cast<std::uint64_t>(d)));
        for (int p = samples_per_obstacle - 1; p > 0; --p) {
          const int j = static_cast<int>(shuffler.next_u64() % (p + 1));
          std::swap(strata[d][p], strata[d][j]);
        }
      }
    }

    std::vector<double> z(m), noise(m), u(m);
    std::vector<double> log_like(samples_per_obstacle, 0.0);
    for (int p = 0; p < samples_per_obstacle; ++p) {
      RngStream stream(mix_seed(seed, static_cast<std::uint64_t>(l), static_cast<std::uint64_t>(p)));
      const std::size_t base = static_cast<std::size_t>(p) * (horizon + 1) * n;
      std::copy(model.initial.begin(), model.initial.end(), fc.states.begin() + base);
      if (sampling == ForecastSampling::ConstantVelocity) {
        for (int d = 0; d < m; ++d)
          z[d] = inverse_normal_cdf((strata[d][p] + stream.next_uniform()) /
                                    samples_per_obstacle);
        factor.apply_factor(z, noise);
        if (weighting == ForecastWeighting::Likelihood)
          for (int d = 0; d < m; ++d) log_like[p] -= 0.5 * z[d] * z[d];
      }
      for (int i = 0; i < horizon; ++i) {
        if (sampling == ForecastSampling::PerStep) {
          for (int d = 0; d < m; ++d) z[d] = stream.next_normal();
          factor.apply_factor(z, noise);
          if (weighting == ForecastWeighting::Likelihood)
            for (int d = 0; d < m; ++d) log_like[p] -= 0.5 * z[d] * z[d];
        }
        for (int d = 0; d < m; ++d)
          u[d] = model.ref_inputs[static_cast<std::size_t>(i) * m + d] + noise[d];
        const std::span<const double> o_i{fc.states.data() + base + static_cast<std::size_t>(i) * n,
                                          static_cast<std::size_t>(n)};
        std::span<double> o_next{fc.states.data() + base + static_cast<std::size_t>(i + 1) * n,
                                 static_cast<std::size_t>(n)};
        model.step(o_i, u, o_next);
        ++step_calls;
      }
    }

    if (weighting == ForecastWeighting::Uniform) {
      const double w = 1.0 / samples_per_obstacle;
      std::fill(fc.theta.begin(), fc.theta.end(), w);
    } else {
      const double peak = *std::max_element(log_like.begin(), log_like.end());
      double total = 0.0;
      for (int p = 0; p < samples_per_obstacle; ++p) {
        fc.theta[p] = std::exp(log_like[p] - peak);
        total += fc.theta[p];
      }
      for (double& t : fc.theta) t /= total;
    }
    forecasts.push_back(std::move(fc));
  }

  if (stats != nullptr) {
    stats->obstacle_step_calls = step_calls;
    stats->elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }
  return forecasts;
}

ObstacleForecast stationary_forecast(std::span<const double> pose, double collision_radius,
                                     int horizon) {
  ObstacleForecast fc;
  fc.trajectory_count = 1;
  fc.horizon = horizon;
  fc.state_dim = static_cast<int>(pose.size());
  fc.collision_radius = collision_radius;
  fc.theta = {1.0};
  fc.states.resize(static_cast<std::size_t>(horizon + 1) * pose.size());
  for (int i = 0; i <= horizon; ++i)
    std::copy(pose.begin(), pose.end(),
              fc.states.begin() + static_cast<std::size_t>(i) * pose.size());
  return fc;
}

bool collision_indicator(std::span<const double> agent_state, int step,
                         const ObstacleForecast& forecast, int trajectory) {
  const std::span<const double> o = forecast.state(trajectory, step);
  const double dx = agent_state[0] - o[0];
  const double dy = agent_state[1] - o[1];
  return dx * dx + dy * dy <= forecast.collision_radius * forecast.collision_radius;
}

namespace {

inline std::int64_t cell_key(std::int64_t cx, std::int64_t cy) {
  return (cx << 32) ^ (cy & 0xFFFFFFFFLL);
}

}  // namespace

const std::vector<IndicatorGrid::Entry>* IndicatorGrid::StepGrid::find(std::int64_t key) const {
  auto it = std::lower_bound(cells.begin(), cells.end(), key,
                             [](const auto& a, std::int64_t k) { return a.first < k; });
  if (it == cells.end() || it->first != key) return nullptr;
  return &it->second;
}

IndicatorGrid::IndicatorGrid(std::span<const ObstacleForecast> forecasts, int horizon) {
  double max_radius = 0.0;
  for (const auto& fc : forecasts) max_radius = std::max(max_radius, fc.collision_radius);
  if (forecasts.empty() || max_radius <= 0.0) return;

  steps_.resize(horizon + 1);
  for (auto& grid : steps_) grid.cell = max_radius;

  for (int i = 0; i <= horizon; ++i) {
    StepGrid& grid = steps_[i];
    std::vector<std::pair<std::int64_t, Entry>> flat;
    for (const auto& fc : forecasts) {
      const int upto = std::min(i, fc.horizon);  // clamp in case horizons differ
      for (int p = 0; p < fc.trajectory_count; ++p) {
        const std::span<const double> o = fc.state(p, upto);
        const std::int64_t cx = static_cast<std::int64_t>(std::floor(o[0] / grid.cell));
        const std::int64_t cy = static_cast<std::int64_t>(std::floor(o[1] / grid.cell));
        flat.push_back({cell_key(cx, cy), {o[0], o[1], fc.theta[p], fc.collision_radius}});
      }
    }
    std::stable_sort(flat.begin(), flat.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [key, entry] : flat) {
      if (grid.cells.empty() || grid.cells.back().first != key) grid.cells.push_back({key, {}});
      grid.cells.back().second.push_back(entry);
    }
  }
}

double IndicatorGrid::weighted_hits(double x, double y, int step) const {
  if (steps_.empty()) return 0.0;
  const StepGrid& grid = steps_[std::min<std::size_t>(step, steps_.size() - 1)];
  const std::int64_t cx = static_cast<std::int64_t>(std::floor(x / grid.cell));
  const std::int64_t cy = static_cast<std::int64_t>(std::floor(y / grid.cell));
  double total = 0.0;
  for (std::int64_t dx = -1; dx <= 1; ++dx)
    for (std::int64_t dy = -1; dy <= 1; ++dy) {
      const auto* entries = grid.find(cell_key(cx + dx, cy + dy));
      if (entries == nullptr) continue;
      for (const Entry& e : *entries) {
        const double ex = x - e.x;
        const double ey = y - e.y;
        if (ex * ex + ey * ey <= e.radius * e.radius) total += e.theta_weight;
      }
    }
  return total;
}

double augmented_running_cost(std::span<const double> x, int step, const AugmentedCostSpec& spec) {
  double hits = 0.0;
  for (const ObstacleForecast& fc : spec.forecasts)
    for (int p = 0; p < fc.trajectory_count; ++p)
      if (collision_indicator(x, step, fc, p)) hits += fc.theta[p];
  return spec.base.running(x, step) + spec.beta * hits;
}

double augmented_terminal_cost(std::span<const double> x, const AugmentedCostSpec& spec) {
  double hits = 0.0;
  for (const ObstacleForecast& fc : spec.forecasts) {
    const int last = fc.horizon;
    for (int p = 0; p < fc.trajectory_count; ++p)
      if (collision_indicator(x, last, fc, p)) hits += fc.theta[p];
  }
  return spec.base.terminal(x) + spec.beta * hits;
}

CostSpec make_augmented_cost(const AugmentedCostSpec& spec, int horizon) {
  if (!(spec.beta > 0.0)) throw config_error("augmented cost: beta must be positive");
  if (spec.forecasts.empty()) return spec.base;  // bitwise identical to the base cost

  auto grid = std::make_shared<IndicatorGrid>(spec.forecasts, horizon);
  const double beta = spec.beta;
  CostSpec out;
  out.alpha = spec.base.alpha;
  out.running = [base = spec.base.running, grid, beta](std::span<const double> x, int step) {
    return base(x, step) + beta * grid->weighted_hits(x[0], x[1], step);
  };
  out.terminal = [base = spec.base.terminal, grid, beta, horizon](std::span<const double> x) {
    return base(x) + beta * grid->weighted_hits(x[0], x[1], horizon);
  };
  return out;
}

std::uint64_t dc_forecast_seed(std::uint64_t seed) { return mix_seed(seed, 0x6F627374ULL); }

DcResult dc_mppi(const ControlPlan& plan, std::span<const double> x0,
                 std::span<const ObstacleModel> models, int samples_per_obstacle,
                 int rollout_count, const DbscanParams& params, const CostSpec& base_cost,
                 double beta, const StepFn& agent_dynamics, SamplingMode mode,
                 std::uint64_t seed) {
  DcResult result;
  result.forecasts = simulate_obstacles(models, samples_per_obstacle, plan.horizon,
                                        dc_forecast_seed(seed), ForecastWeighting::Uniform,
                                        &result.forecast_stats);

  AugmentedCostSpec augmented;
  augmented.base = base_cost;
  augmented.forecasts = result.forecasts;
  augmented.beta = beta;
  const CostSpec cost = make_augmented_cost(augmented, plan.horizon);

  const PerturbationSet eps =
      sample_perturbations(rollout_count, plan.horizon, plan.sigma, mode, seed);
  const std::vector<Rollout> rollouts = batch_rollout(agent_dynamics, x0, plan, eps, cost);

  ClusteredResult clustered = clustered_mppi(plan, rollouts, params, cost, agent_dynamics, x0);
  result.inputs = std::move(clustered.inputs);
  result.diag = std::move(clustered.diag);
  return result;
}

}  // namespace mppi
