#include "mppi/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mppi/errors.hpp"
#include "mppi/rng.hpp"

namespace mppi {

ControlPlan make_plan(int horizon, int input_dim, const Matrix& sigma, double lambda) {
  if (horizon < 1) throw config_error("plan horizon must be >= 1");
  if (input_dim < 1) throw config_error("input dimension must be >= 1");
  if (sigma.rows() != input_dim || sigma.cols() != input_dim)
    throw config_error("sigma dimension does not match input dimension");
  Cholesky check(sigma);  // throws config_error unless SPD
  if (!(lambda > 0.0)) throw config_error("lambda must be positive");
  ControlPlan plan;
  plan.horizon = horizon;
  plan.input_dim = input_dim;
  plan.inputs.assign(static_cast<std::size_t>(horizon) * input_dim, 0.0);
  plan.sigma = sigma;
  plan.lambda = lambda;
  return plan;
}

PerturbationSet sample_perturbations(int count, int horizon, const Matrix& sigma,
                                     SamplingMode mode, std::uint64_t seed) {
  if (count < 1) throw config_error("sample count must be >= 1");
  if (horizon < 1) throw config_error("horizon must be >= 1");
  const Cholesky factor(sigma);
  const int m = factor.dim();

  PerturbationSet set;
  set.count = count;
  set.horizon = horizon;
  set.input_dim = m;
  set.mode = mode;
  set.seed = seed;
  set.eps.resize(static_cast<std::size_t>(count) * horizon * m);

  std::vector<double> z(m), e(m);
  for (int k = 0; k < count; ++k) {
    RngStream stream(mix_seed(seed, static_cast<std::uint64_t>(k)));
    double* row = set.eps.data() + static_cast<std::size_t>(k) * horizon * m;
    if (mode == SamplingMode::ConstantOverHorizon) {
      for (int d = 0; d < m; ++d) z[d] = stream.next_normal();
      factor.apply_factor(z, e);
      for (int i = 0; i < horizon; ++i)
        for (int d = 0; d < m; ++d) row[static_cast<std::size_t>(i) * m + d] = e[d];
    } else {
      for (int i = 0; i < horizon; ++i) {
        for (int d = 0; d < m; ++d) z[d] = stream.next_normal();
        factor.apply_factor(z, {row + static_cast<std::size_t>(i) * m,
                                static_cast<std::size_t>(m)});
      }
    }
  }
  return set;
}

WeightVector compute_weights(std::span<const double> costs, double lambda) {
  if (costs.empty()) throw std::invalid_argument("compute_weights: empty cost list");
  if (!(lambda > 0.0)) throw config_error("lambda must be positive");

  double rho = std::numeric_limits<double>::infinity();
  for (double c : costs) {
    if (std::isnan(c)) throw data_error("compute_weights: NaN cost");
    rho = std::min(rho, c);
  }
  if (!std::isfinite(rho))
    throw data_error("compute_weights: no finite cost in batch");

  WeightVector weights;
  weights.w.resize(costs.size());
  double eta = 0.0;
  for (std::size_t k = 0; k < costs.size(); ++k) {
    // exp(-(inf - rho)/lambda) underflows to exactly 0 for failed rollouts.
    weights.w[k] = std::exp(-(costs[k] - rho) / lambda);
    eta += weights.w[k];
  }
  for (double& w : weights.w) w /= eta;
  return weights;
}

std::vector<double> update_control(const ControlPlan& plan, const PerturbationSet& perturbations,
                                   const WeightVector& weights) {
  if (static_cast<int>(weights.w.size()) != perturbations.count)
    throw std::invalid_argument("update_control: weight/perturbation count mismatch");
  if (perturbations.horizon != plan.horizon || perturbations.input_dim != plan.input_dim)
    throw std::invalid_argument("update_control: plan/perturbation shape mismatch");

  std::vector<double> out = plan.inputs;
  const std::size_t n = out.size();
  for (int k = 0; k < perturbations.count; ++k) {
    const double w = weights.w[k];
    if (w == 0.0) continue;
    const std::span<const double> row = perturbations.row(k);
    for (std::size_t j = 0; j < n; ++j) out[j] += w * row[j];
  }
  return out;
}

double running_cost_penalty(std::span<const double> u_i, std::span<const double> eps_i,
                            const Cholesky& sigma_factor, double lambda) {
  return lambda * sigma_factor.quadratic_inverse(u_i, eps_i);
}

double running_cost_penalty(std::span<const double> u_i, std::span<const double> eps_i,
                            const Matrix& sigma, double lambda) {
  return running_cost_penalty(u_i, eps_i, Cholesky(sigma), lambda);
}

}  // namespace mppi
