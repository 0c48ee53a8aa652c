#include "mppi/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mppi/errors.hpp"
#include "mppi/rng.hpp"

namespace mppi {

void arc_step(std::span<const double> x, double v, double omega, double dt,
              std::span<double> next) {
  const double theta = x[2];
  // Below this the arc formulas cancel catastrophically; the straight-line
  // chord is within ~1e-9 of the true arc.
  if (std::abs(omega) * dt < 1e-6) {
    next[0] = x[0] + v * dt * std::cos(theta);
    next[1] = x[1] + v * dt * std::sin(theta);
    next[2] = theta + omega * dt;
  } else {
    const double r = v / omega;
    const double theta_next = theta + omega * dt;
    next[0] = x[0] + r * (std::sin(theta_next) - std::sin(theta));
    next[1] = x[1] - r * (std::cos(theta_next) - std::cos(theta));
    next[2] = theta_next;
  }
}

void dubins_step(std::span<const double> x, double omega, const DubinsModel& model,
                 std::span<double> next) {
  const double cap = model.max_turn_rate();
  arc_step(x, model.v, std::clamp(omega, -cap, cap), model.dt, next);
}

StateVec dubins_step(const StateVec& x, double omega, const DubinsModel& model) {
  StateVec next(3);
  dubins_step(x, omega, model, next);
  return next;
}

StepFn make_dubins_step(const DubinsModel& model) {
  return [model](std::span<const double> x, std::span<const double> u, std::span<double> next) {
    dubins_step(x, u[0], model, next);
  };
}

StepFn make_velocity_arc_step(double dt) {
  return [dt](std::span<const double> x, std::span<const double> u, std::span<double> next) {
    arc_step(x, u[0], u[1], dt, next);
  };
}

namespace {

Rollout rollout_impl(const StepFn& dynamics, std::span<const double> x0, const ControlPlan& plan,
                     std::span<const double> eps_row, const CostSpec& cost,
                     const Cholesky& sigma_factor, const NoiseProfile& profile,
                     std::uint64_t seed, RolloutMode mode) {
  const int n = static_cast<int>(x0.size());
  const int horizon = plan.horizon;
  const int m = plan.input_dim;

  Rollout r;
  r.state_dim = n;
  r.states.assign(static_cast<std::size_t>(horizon + 1) * n, 0.0);
  r.eps.assign(eps_row.begin(), eps_row.end());
  std::copy(x0.begin(), x0.end(), r.states.begin());

  const bool plant_process =
      mode == RolloutMode::Plant && profile.kind == NoiseKind::ControlAndProcess;
  RngStream process_stream(mix_seed(seed, 0x70726F63ULL));  // only used when plant_process

  std::vector<double> u(m);
  double total = 0.0;
  for (int i = 0; i < horizon; ++i) {
    const std::span<const double> x_i = r.state(i);
    const std::span<const double> u_ref = plan.input(i);
    const std::span<const double> eps_i =
        eps_row.subspan(static_cast<std::size_t>(i) * m, static_cast<std::size_t>(m));

    total += cost.running(x_i, i);
    total += running_cost_penalty(u_ref, eps_i, sigma_factor, plan.lambda);

    for (int d = 0; d < m; ++d) u[d] = u_ref[d] + eps_i[d];
    std::span<double> x_next{r.states.data() + static_cast<std::size_t>(i + 1) * n,
                             static_cast<std::size_t>(n)};
    dynamics(x_i, u, x_next);
    if (plant_process) {
      for (int d = 0; d < n && d < static_cast<int>(profile.process_variance.size()); ++d) {
        const double var = profile.process_variance[d];
        if (var > 0.0) x_next[d] += std::sqrt(var) * process_stream.next_normal();
      }
    }

    bool bad = !std::isfinite(total);
    for (int d = 0; d < n && !bad; ++d) bad = !std::isfinite(x_next[d]);
    if (bad) {
      r.failed = true;
      r.cost = std::numeric_limits<double>::infinity();
      return r;
    }
  }

  total += cost.terminal(r.state(horizon));
  if (!std::isfinite(total)) {
    r.failed = true;
    r.cost = std::numeric_limits<double>::infinity();
  } else {
    r.cost = total;
  }
  return r;
}

}  // namespace

Rollout rollout(const StepFn& dynamics, std::span<const double> x0, const ControlPlan& plan,
                std::span<const double> eps_row, const CostSpec& cost,
                const NoiseProfile& profile, std::uint64_t seed, RolloutMode mode) {
  if (eps_row.size() != static_cast<std::size_t>(plan.horizon) * plan.input_dim)
    throw std::invalid_argument("rollout: perturbation row does not match plan shape");
  return rollout_impl(dynamics, x0, plan, eps_row, cost, Cholesky(plan.sigma), profile, seed,
                      mode);
}

std::vector<Rollout> batch_rollout(const StepFn& dynamics, std::span<const double> x0,
                                   const ControlPlan& plan, const PerturbationSet& perturbations,
                                   const CostSpec& cost) {
  if (perturbations.horizon != plan.horizon || perturbations.input_dim != plan.input_dim)
    throw std::invalid_argument("batch_rollout: plan/perturbation shape mismatch");
  const Cholesky factor(plan.sigma);
  const NoiseProfile planner_profile;
  std::vector<Rollout> rollouts(perturbations.count);
  for (int k = 0; k < perturbations.count; ++k) {
    rollouts[k] = rollout_impl(dynamics, x0, plan, perturbations.row(k), cost, factor,
                               planner_profile, 0, RolloutMode::Planner);
  }
  return rollouts;
}

}  // namespace mppi
