#include <cmath>

#include <doctest.h>

#include "mppi/environment.hpp"
#include "mppi/obstacles.hpp"
#include "mppi/rng.hpp"

using namespace mppi;

namespace {

// Planner-style view of one mover: generic velocity-input step, reference at
// the belief mean, covariance from the believed velocity ranges.
ObstacleModel belief_of(const DynamicField::Mover& mover, int horizon, double dt,
                        double speed_mean, double speed_var, double omega_var) {
  ObstacleModel model;
  model.step = make_velocity_arc_step(dt);
  model.initial = {mover.x, mover.y, mover.theta};
  model.input_dim = 2;
  model.ref_inputs.assign(static_cast<std::size_t>(horizon) * 2, 0.0);
  for (int i = 0; i < horizon; ++i) model.ref_inputs[2 * i] = speed_mean;
  std::vector<double> diag = {speed_var, omega_var};
  model.input_sigma = Matrix::diagonal(diag);
  model.collision_radius = mover.radius;
  return model;
}

}  // namespace

TEST_CASE("a predicted crossing bends the chosen control more than a frozen snapshot") {
  // Obstacle dead ahead driving at the agent. Planning against its frozen
  // current pose reacts only to the disc itself; planning against sampled
  // forecasts sees the whole oncoming corridor and commits to a stronger
  // evasion.
  const DubinsModel agent{1.0, 1.0, 0.1};
  const int horizon = 50;
  ControlPlan plan = make_plan(horizon, 1, Matrix::scalar(0.1), 1.0);
  const StateVec x0 = {0.0, 0.0, 0.0};
  const CostSpec base = make_goal_cost(nullptr, 30.0, 0.0, 1000.0);
  const DbscanParams params;

  DynamicField::Mover mover;
  mover.x = 6.0;
  mover.y = 0.0;
  mover.theta = 3.14159265358979324;
  mover.v = 1.2;
  mover.radius = 1.0;

  double dc_first = 0.0, snapshot_first = 0.0;
  int dc_stronger = 0;
  const int trials = 5;
  for (std::uint64_t seed = 1; seed <= trials; ++seed) {
    const std::vector<ObstacleModel> models = {
        belief_of(mover, horizon, agent.dt, 1.1, 0.03, 8.3e-4)};
    const DcResult dc = dc_mppi(plan, x0, models, 25, 500, params, base, 10.0,
                                make_dubins_step(agent), SamplingMode::ConstantOverHorizon,
                                mix_seed(777, seed));

    AugmentedCostSpec snap;
    snap.base = base;
    snap.beta = 10.0;
    const double pose[3] = {mover.x, mover.y, mover.theta};
    snap.forecasts.push_back(stationary_forecast({pose, 3}, mover.radius, horizon));
    const CostSpec snap_cost = make_augmented_cost(snap, horizon);
    const PerturbationSet eps = sample_perturbations(
        500, horizon, plan.sigma, SamplingMode::ConstantOverHorizon, mix_seed(777, seed));
    const auto rollouts = batch_rollout(make_dubins_step(agent), x0, plan, eps, snap_cost);
    const ClusteredResult clustered =
        clustered_mppi(plan, rollouts, params, snap_cost, make_dubins_step(agent), x0);

    dc_first = dc.inputs[0];
    snapshot_first = clustered.inputs[0];
    if (std::abs(dc_first) > std::abs(snapshot_first)) ++dc_stronger;
  }
  INFO("last pair: dc ", dc_first, " snapshot ", snapshot_first);
  CHECK(dc_stronger == trials);
}
