#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mppi/linalg.hpp"

namespace mppi {

enum class SamplingMode {
  PerStep,             // fresh draw every time step
  ConstantOverHorizon  // one draw per rollout, repeated over the horizon
};

// Reference input sequence with its exploration covariance and cost
// sensitivity. inputs is horizon x input_dim, row-major.
struct ControlPlan {
  int horizon = 0;    // N
  int input_dim = 0;  // m
  std::vector<double> inputs;
  Matrix sigma;  // m x m, SPD
  double lambda = 1.0;

  std::span<double> input(int i) {
    return {inputs.data() + static_cast<std::size_t>(i) * input_dim,
            static_cast<std::size_t>(input_dim)};
  }
  std::span<const double> input(int i) const {
    return {inputs.data() + static_cast<std::size_t>(i) * input_dim,
            static_cast<std::size_t>(input_dim)};
  }
};

// Zero-initialized plan; validates sigma (SPD), lambda > 0, horizon >= 1.
ControlPlan make_plan(int horizon, int input_dim, const Matrix& sigma, double lambda);

// K x N x m tensor of zero-mean Gaussian input perturbations. Each rollout k
// draws from its own stream keyed by (seed, k), so the tensor is identical
// regardless of evaluation order or parallelism.
struct PerturbationSet {
  int count = 0;       // K
  int horizon = 0;     // N
  int input_dim = 0;   // m
  SamplingMode mode = SamplingMode::PerStep;
  std::uint64_t seed = 0;
  std::vector<double> eps;  // count * horizon * input_dim

  std::span<const double> row(int k) const {
    const std::size_t n = static_cast<std::size_t>(horizon) * input_dim;
    return {eps.data() + static_cast<std::size_t>(k) * n, n};
  }
  std::span<const double> at(int k, int i) const {
    return row(k).subspan(static_cast<std::size_t>(i) * input_dim,
                          static_cast<std::size_t>(input_dim));
  }
};

struct WeightVector {
  std::vector<double> w;  // nonnegative, sums to 1
};

PerturbationSet sample_perturbations(int count, int horizon, const Matrix& sigma,
                                     SamplingMode mode, std::uint64_t seed);

// w_k = exp(-(S_k - rho)/lambda) / sum_j exp(-(S_j - rho)/lambda) with
// rho = min cost. The shift cancels in the normalization and keeps the
// exponents in range for arbitrarily large cost spreads.
WeightVector compute_weights(std::span<const double> costs, double lambda);

// u*_i = u_i + sum_k w_k eps_i^(k), elementwise per time step.
std::vector<double> update_control(const ControlPlan& plan, const PerturbationSet& perturbations,
                                   const WeightVector& weights);

// lambda * u^T Sigma^{-1} eps, accumulated into the rollout cost each step.
// Up to a control-independent constant this is the log density ratio between
// sampling around the reference and sampling around zero, scaled by lambda,
// which is exactly the importance-sampling correction the weighted average
// needs.
double running_cost_penalty(std::span<const double> u_i, std::span<const double> eps_i,
                            const Cholesky& sigma_factor, double lambda);
double running_cost_penalty(std::span<const double> u_i, std::span<const double> eps_i,
                            const Matrix& sigma, double lambda);

}  // namespace mppi
