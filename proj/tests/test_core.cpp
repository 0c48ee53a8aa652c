#include <algorithm>
#include <cmath>
#include <limits>

#include <doctest.h>

#include "mppi/core.hpp"
#include "mppi/errors.hpp"
#include "mppi/rng.hpp"

using namespace mppi;

namespace {

PerturbationSet manual_set(int horizon, int input_dim, std::vector<std::vector<double>> rows) {
  PerturbationSet set;
  set.count = static_cast<int>(rows.size());
  set.horizon = horizon;
  set.input_dim = input_dim;
  for (const auto& r : rows) set.eps.insert(set.eps.end(), r.begin(), r.end());
  return set;
}

}  // namespace

TEST_CASE("sample_perturbations rejects degenerate covariance") {
  Matrix zero(1, 1);
  CHECK_THROWS_AS(sample_perturbations(4, 3, zero, SamplingMode::PerStep, 1), config_error);
  Matrix negative = Matrix::scalar(-0.5);
  CHECK_THROWS_AS(sample_perturbations(4, 3, negative, SamplingMode::PerStep, 1), config_error);
}

TEST_CASE("sample_perturbations is a deterministic function of the seed") {
  const Matrix sigma = Matrix::scalar(0.1);
  const auto a = sample_perturbations(16, 5, sigma, SamplingMode::PerStep, 42);
  const auto b = sample_perturbations(16, 5, sigma, SamplingMode::PerStep, 42);
  CHECK(a.eps == b.eps);
  const auto c = sample_perturbations(16, 5, sigma, SamplingMode::PerStep, 43);
  CHECK(a.eps != c.eps);

  // Streams are keyed per rollout, so a smaller batch is a prefix of a larger
  // one. This is what makes evaluation order and parallelism irrelevant.
  const auto small = sample_perturbations(4, 5, sigma, SamplingMode::PerStep, 42);
  CHECK(std::equal(small.eps.begin(), small.eps.end(), a.eps.begin()));
}

TEST_CASE("constant-over-horizon rows repeat one draw") {
  const Matrix sigma = Matrix::scalar(0.3);
  const auto set = sample_perturbations(8, 6, sigma, SamplingMode::ConstantOverHorizon, 7);
  for (int k = 0; k < set.count; ++k)
    for (int i = 1; i < set.horizon; ++i) CHECK(set.at(k, i)[0] == set.at(k, 0)[0]);
}

TEST_CASE("sampled moments match the requested covariance") {
  const int count = 100000;
  const auto set = sample_perturbations(count, 1, Matrix::scalar(0.1), SamplingMode::PerStep, 123);
  double mean = 0.0;
  for (double e : set.eps) mean += e;
  mean /= count;
  double var = 0.0;
  for (double e : set.eps) var += (e - mean) * (e - mean);
  var /= count;
  CHECK(std::abs(mean) < 3.0 * std::sqrt(0.1 / count));
  CHECK(var == doctest::Approx(0.1).epsilon(0.05));
}

TEST_CASE("correlated sampling follows the covariance factor") {
  Matrix sigma(2, 2);
  sigma(0, 0) = 0.5;
  sigma(0, 1) = sigma(1, 0) = 0.3;
  sigma(1, 1) = 0.4;
  const int count = 50000;
  const auto set = sample_perturbations(count, 1, sigma, SamplingMode::PerStep, 5);
  double cxx = 0, cxy = 0, cyy = 0;
  for (int k = 0; k < count; ++k) {
    const auto e = set.at(k, 0);
    cxx += e[0] * e[0];
    cxy += e[0] * e[1];
    cyy += e[1] * e[1];
  }
  CHECK(cxx / count == doctest::Approx(0.5).epsilon(0.05));
  CHECK(cxy / count == doctest::Approx(0.3).epsilon(0.08));
  CHECK(cyy / count == doctest::Approx(0.4).epsilon(0.05));
}

TEST_CASE("equal costs give uniform weights") {
  const std::vector<double> costs(10, 7.3);
  for (double lambda : {0.01, 1.0, 50.0}) {
    const auto w = compute_weights(costs, lambda);
    for (double v : w.w) CHECK(v == doctest::Approx(0.1).epsilon(1e-12));
  }
}

TEST_CASE("two-cost weights match the hand-evaluated softmax") {
  // exp(0) and exp(-ln 2) = 1/2 normalize to 2/3 and 1/3.
  const std::vector<double> costs = {0.0, std::log(2.0)};
  const auto w = compute_weights(costs, 1.0);
  CHECK(w.w[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(w.w[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("huge cost spreads stay stable") {
  const std::vector<double> costs = {0.0, 1e6};
  const auto w = compute_weights(costs, 1.0);
  CHECK(w.w[0] == 1.0);
  CHECK(w.w[1] == 0.0);
  CHECK(std::isfinite(w.w[0]));
}

TEST_CASE("weight error paths") {
  CHECK_THROWS_AS(compute_weights({}, 1.0), std::invalid_argument);
  const std::vector<double> with_nan = {1.0, std::nan("")};
  CHECK_THROWS_AS(compute_weights(with_nan, 1.0), data_error);
  const std::vector<double> all_inf(3, std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(compute_weights(all_inf, 1.0), data_error);
}

TEST_CASE("weights normalize and stay nonnegative") {
  RngStream rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> costs(20);
    for (double& c : costs) c = rng.next_range(-50.0, 50.0);
    const auto w = compute_weights(costs, 0.7);
    double sum = 0.0;
    for (double v : w.w) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("shift invariance is literal when the shifted sums are exact") {
  // Costs on a dyadic grid plus integer shifts make S + c exact in binary
  // floating point, so the rho-subtracted evaluation sees identical operands
  // and the weight vectors match bit for bit.
  RngStream rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> costs(12);
    for (double& c : costs)
      c = std::floor(rng.next_range(0.0, 1.0) * (1 << 30)) / static_cast<double>(1 << 30);
    for (double shift : {1.0, -7.0, 1024.0}) {
      std::vector<double> shifted = costs;
      for (double& c : shifted) c += shift;
      const auto a = compute_weights(costs, 0.9);
      const auto b = compute_weights(shifted, 0.9);
      CHECK(a.w == b.w);
    }
  }
}

TEST_CASE("lambda limits: uniform as lambda grows, one-hot as it vanishes") {
  RngStream rng(11);
  std::vector<double> costs(25);
  for (double& c : costs) c = rng.next_range(0.0, 1.0);  // spread ~1
  const std::size_t argmin =
      std::min_element(costs.begin(), costs.end()) - costs.begin();

  const auto wide = compute_weights(costs, 1e9);
  for (double v : wide.w) CHECK(std::abs(v - 1.0 / costs.size()) < 1e-6);

  const auto sharp = compute_weights(costs, 1e-9);
  CHECK(std::abs(sharp.w[argmin] - 1.0) < 1e-6);
}

TEST_CASE("one-hot weights recover a single perturbation row") {
  ControlPlan plan = make_plan(2, 1, Matrix::scalar(0.2), 1.0);
  plan.inputs = {0.4, -0.4};
  const auto set = manual_set(2, 1, {{1.0, 2.0}, {-3.0, 5.0}, {0.5, 0.5}});
  WeightVector w{{0.0, 1.0, 0.0}};
  const auto out = update_control(plan, set, w);
  CHECK(out[0] == doctest::Approx(0.4 - 3.0));
  CHECK(out[1] == doctest::Approx(-0.4 + 5.0));
}

TEST_CASE("symmetric perturbations with uniform weights cancel") {
  ControlPlan plan = make_plan(3, 1, Matrix::scalar(0.2), 1.0);
  plan.inputs = {0.1, 0.2, 0.3};
  const auto set = manual_set(3, 1, {{1.0, -2.0, 0.7}, {-1.0, 2.0, -0.7}});
  WeightVector w{{0.5, 0.5}};
  const auto out = update_control(plan, set, w);
  CHECK(out[0] == doctest::Approx(0.1));
  CHECK(out[1] == doctest::Approx(0.2));
  CHECK(out[2] == doctest::Approx(0.3));
}

TEST_CASE("three-rollout update matches the hand-summed average") {
  ControlPlan plan = make_plan(2, 1, Matrix::scalar(0.2), 1.0);
  plan.inputs = {0.1, 0.2};
  const auto set = manual_set(2, 1, {{0.5, -1.0}, {2.0, 0.25}, {-0.5, 1.0}});
  WeightVector w{{0.5, 0.25, 0.25}};
  const auto out = update_control(plan, set, w);
  // 0.1 + 0.5*0.5 + 0.25*2.0 + 0.25*(-0.5) and 0.2 + 0.5*(-1) + 0.25*0.25 + 0.25*1
  CHECK(out[0] == doctest::Approx(0.725).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(0.0125).epsilon(1e-12));
}

TEST_CASE("update_control rejects mismatched weights") {
  ControlPlan plan = make_plan(2, 1, Matrix::scalar(0.2), 1.0);
  const auto set = manual_set(2, 1, {{0.5, -1.0}, {2.0, 0.25}});
  WeightVector w{{1.0}};
  CHECK_THROWS_AS(update_control(plan, set, w), std::invalid_argument);
}

TEST_CASE("updated inputs stay inside the per-component hull") {
  RngStream rng(3);
  ControlPlan plan = make_plan(4, 2, Matrix::identity(2), 1.0);
  for (auto& v : plan.inputs) v = rng.next_range(-1.0, 1.0);
  const int count = 12;
  PerturbationSet set;
  set.count = count;
  set.horizon = 4;
  set.input_dim = 2;
  set.eps.resize(count * 8);
  for (double& e : set.eps) e = rng.next_range(-2.0, 2.0);
  std::vector<double> costs(count);
  for (double& c : costs) c = rng.next_range(0.0, 10.0);
  const auto w = compute_weights(costs, 1.0);
  const auto out = update_control(plan, set, w);
  for (std::size_t j = 0; j < out.size(); ++j) {
    double lo = 1e300, hi = -1e300;
    for (int k = 0; k < count; ++k) {
      const double v = plan.inputs[j] + set.row(k)[j];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(out[j] >= lo - 1e-12);
    CHECK(out[j] <= hi + 1e-12);
  }
}

TEST_CASE("running cost penalty hand values") {
  const Cholesky factor(Matrix::scalar(0.1));
  const double zero[1] = {0.0};
  const double u[1] = {1.0};
  const double e[1] = {2.0};
  CHECK(running_cost_penalty(zero, e, factor, 1.0) == 0.0);
  CHECK(running_cost_penalty(u, zero, factor, 1.0) == 0.0);
  // 1 * (1/0.1) * 2 = 20
  CHECK(running_cost_penalty(u, e, factor, 1.0) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(running_cost_penalty(u, e, Matrix::scalar(0.1), 1.0) ==
        doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("make_plan validates its invariants") {
  CHECK_THROWS_AS(make_plan(0, 1, Matrix::scalar(1.0), 1.0), config_error);
  CHECK_THROWS_AS(make_plan(5, 1, Matrix::scalar(1.0), 0.0), config_error);
  CHECK_THROWS_AS(make_plan(5, 1, Matrix::scalar(1.0), -2.0), config_error);
  Matrix asym(2, 2);
  asym(0, 0) = 1.0;
  asym(1, 1) = 1.0;
  asym(0, 1) = 0.5;
  asym(1, 0) = -0.5;
  CHECK_THROWS_AS(make_plan(5, 2, asym, 1.0), config_error);
}
