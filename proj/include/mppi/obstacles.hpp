#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "mppi/clustering.hpp"
#include "mppi/dynamics.hpp"

namespace mppi {

// One moving obstacle as the planner believes it: a step function, its current
// state, a reference input sequence (horizon x input_dim), and the per-step
// Gaussian input noise it is expected to deviate with.
struct ObstacleModel {
  StepFn step;
  StateVec initial;                // (x, y, theta)
  std::vector<double> ref_inputs;  // horizon * input_dim
  int input_dim = 0;
  Matrix input_sigma;              // SPD
  double collision_radius = 1.0;   // m
};

// P sampled trajectories for one obstacle with per-trajectory probabilities.
struct ObstacleForecast {
  int trajectory_count = 0;  // P
  int horizon = 0;           // N
  int state_dim = 0;
  std::vector<double> states;  // P * (N+1) * state_dim
  std::vector<double> theta;   // P, nonnegative, sums to 1
  double collision_radius = 1.0;

  std::span<const double> state(int p, int i) const {
    const std::size_t stride = static_cast<std::size_t>(horizon + 1) * state_dim;
    return {states.data() + static_cast<std::size_t>(p) * stride +
                static_cast<std::size_t>(i) * state_dim,
            static_cast<std::size_t>(state_dim)};
  }
};

enum class ForecastWeighting {
  Uniform,    // theta_p = 1/P: the self-normalized weight when forecasts are
              // drawn from the believed distribution itself
  Likelihood  // theta proportional to the Gaussian density of the sampled
              // input-noise sequence (for externally supplied beliefs)
};

enum class ForecastSampling {
  PerStep,          // fresh input noise draw every step (diffusing fan)
  ConstantVelocity  // one draw per trajectory held over the horizon; matches
                    // obstacles that move with a fixed unknown velocity and
                    // produces the ray-fan forecasts the planner needs for
                    // committed evasion
};

struct ForecastStats {
  long long obstacle_step_calls = 0;  // g invocations, = L * P * N
  double elapsed_ms = 0.0;            // wall clock of forecast generation
};

// Propagates every obstacle P times under reference input plus Gaussian input
// noise from the model's covariance. Deterministic in seed; trajectory (l, p)
// has its own stream.
std::vector<ObstacleForecast> simulate_obstacles(std::span<const ObstacleModel> models,
                                                 int samples_per_obstacle, int horizon,
                                                 std::uint64_t seed,
                                                 ForecastWeighting weighting = ForecastWeighting::Uniform,
                                                 ForecastStats* stats = nullptr,
                                                 ForecastSampling sampling = ForecastSampling::ConstantVelocity);

// A forecast whose P=1 trajectory holds `pose` for the whole horizon. This is
// what a planner that assumes a static world sees.
ObstacleForecast stationary_forecast(std::span<const double> pose, double collision_radius,
                                     int horizon);

// 1 iff the agent position is within collision_radius of trajectory p's state
// at the same step index (boundary inclusive, no interpolation between steps).
bool collision_indicator(std::span<const double> agent_state, int step,
                         const ObstacleForecast& forecast, int trajectory);

// Per-step spatial hash over every forecast position so a rollout state pays
// O(nearby) per query instead of scanning all L*P trajectories. This is what
// keeps the obstacle cost additive in P rather than multiplying per rollout.
class IndicatorGrid {
 public:
  IndicatorGrid() = default;
  IndicatorGrid(std::span<const ObstacleForecast> forecasts, int horizon);

  // sum_l sum_p theta_p * 1[within radius at `step`]
  double weighted_hits(double x, double y, int step) const;

  bool empty() const { return steps_.empty(); }

 private:
  struct Entry {
    double x, y, theta_weight, radius;
  };
  struct StepGrid {
    double cell = 1.0;
    std::vector<std::pair<std::int64_t, std::vector<Entry>>> cells;  // sorted by key
    const std::vector<Entry>* find(std::int64_t key) const;
  };
  std::vector<StepGrid> steps_;
};

struct AugmentedCostSpec {
  CostSpec base;
  std::vector<ObstacleForecast> forecasts;
  double beta = 10.0;  // > 0
};

// Direct evaluation of the augmented running/terminal costs (reference form,
// O(L*P) per call; used by tests and small problems).
double augmented_running_cost(std::span<const double> x, int step, const AugmentedCostSpec& spec);
double augmented_terminal_cost(std::span<const double> x, const AugmentedCostSpec& spec);

// Grid-backed closures equivalent to the direct forms. The grid is built once
// and shared read-only across all rollouts.
CostSpec make_augmented_cost(const AugmentedCostSpec& spec, int horizon);

struct DcResult {
  std::vector<double> inputs;
  ClusteredDiagnostics diag;
  ForecastStats forecast_stats;
  std::vector<ObstacleForecast> forecasts;
};

// Stream dc_mppi draws its forecasts from, exposed so callers can reproduce
// the exact forecast set for a given planning seed.
std::uint64_t dc_forecast_seed(std::uint64_t seed);

// DC-MPPI: sample obstacle forecasts once, bind them into the cost, then run
// the clustered controller with it. Forecast cost is amortized across all K
// rollouts. Agent perturbations are drawn with `seed` itself; forecasts use a
// stream derived from it, so with zero obstacles the result coincides with the
// clustered controller fed sample_perturbations(K, N, sigma, mode, seed).
DcResult dc_mppi(const ControlPlan& plan, std::span<const double> x0,
                 std::span<const ObstacleModel> models, int samples_per_obstacle,
                 int rollout_count, const DbscanParams& params, const CostSpec& base_cost,
                 double beta, const StepFn& agent_dynamics, SamplingMode mode,
                 std::uint64_t seed);

}  // namespace mppi
