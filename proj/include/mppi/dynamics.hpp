#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mppi/core.hpp"

namespace mppi {

using StateVec = std::vector<double>;

// Discrete step function: x_{i+1} = f(x_i, u_i). Writes into `next`, which has
// the same dimension as `x`.
using StepFn =
    std::function<void(std::span<const double> x, std::span<const double> u, std::span<double> next)>;

// Constant-speed planar vehicle with bounded turning rate. State (x, y, theta),
// input omega (rad/s). theta is stored unwrapped.
struct DubinsModel {
  double v = 1.0;      // m/s, > 0
  double r_min = 1.0;  // m, > 0
  double dt = 0.1;     // s, > 0

  double max_turn_rate() const { return v / r_min; }
};

// Exact constant-twist arc: advance (x, y, theta) by speed v and turn rate
// omega over dt.
void arc_step(std::span<const double> x, double v, double omega, double dt,
              std::span<double> next);

// Exact constant-rate arc over dt. Commanded rates beyond v/r_min are clamped
// so any weighted-average plan stays admissible.
void dubins_step(std::span<const double> x, double omega, const DubinsModel& model,
                 std::span<double> next);
StateVec dubins_step(const StateVec& x, double omega, const DubinsModel& model);
StepFn make_dubins_step(const DubinsModel& model);

// Planar vehicle with commanded (v, omega) input, exact arc per step. Used for
// obstacle forecasting where the speed itself is uncertain.
StepFn make_velocity_arc_step(double dt);

enum class NoiseKind { Noiseless, Control, ControlAndProcess };

// What the true plant applies during closed-loop execution. Planner-side
// simulations always assume control-channel noise only, whatever the kind.
struct NoiseProfile {
  NoiseKind kind = NoiseKind::Noiseless;
  // Per-state process-noise variances, applied each step in plant executions
  // under ControlAndProcess. Units are squared state units per step.
  std::vector<double> process_variance = {0.005, 0.005, 0.002};
};

struct CostSpec {
  std::function<double(std::span<const double> x, int step)> running;
  std::function<double(std::span<const double> x)> terminal;
  double alpha = 0.0;  // static-collision weight, carried for cost builders
};

// One simulated trajectory: states is (N+1) x state_dim, eps is the N x m
// perturbation row it was produced with. A rollout whose dynamics or cost
// produce a non-finite value is marked failed with infinite cost.
struct Rollout {
  int state_dim = 0;
  std::vector<double> states;
  std::vector<double> eps;
  double cost = 0.0;
  bool failed = false;

  std::span<const double> state(int i) const {
    return {states.data() + static_cast<std::size_t>(i) * state_dim,
            static_cast<std::size_t>(state_dim)};
  }
};

enum class RolloutMode {
  Planner,  // internal model: control-channel noise only, no process draws
  Plant     // true execution: applies the noise profile's process noise
};

// Simulates plan + eps_row from x0 and accumulates
//   S = sum_i [ running(x_i, i) + lambda u_i^T Sigma^{-1} eps_i ] + terminal(x_N).
Rollout rollout(const StepFn& dynamics, std::span<const double> x0, const ControlPlan& plan,
                std::span<const double> eps_row, const CostSpec& cost,
                const NoiseProfile& profile = {}, std::uint64_t seed = 0,
                RolloutMode mode = RolloutMode::Planner);

// Elementwise rollout over every perturbation row; result order matches the
// sample index. Per-rollout failures are recorded, never thrown.
std::vector<Rollout> batch_rollout(const StepFn& dynamics, std::span<const double> x0,
                                   const ControlPlan& plan, const PerturbationSet& perturbations,
                                   const CostSpec& cost);

}  // namespace mppi
