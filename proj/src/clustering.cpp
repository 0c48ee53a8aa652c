#include "mppi/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "mppi/errors.hpp"

namespace mppi {

namespace {

constexpr int kUnvisited = -2;

// Standardized squared distance with early exit once the radius is exceeded.
inline bool within_radius(const double* a, const double* b, int dim,
                          const double* center, const double* inv_scale, double r2) {
  double acc = 0.0;
  if (inv_scale == nullptr) {
    for (int d = 0; d < dim; ++d) {
      const double diff = a[d] - b[d];
      acc += diff * diff;
      if (acc > r2) return false;
    }
  } else {
    for (int d = 0; d < dim; ++d) {
      const double diff = (a[d] - center[d]) * inv_scale[d] - (b[d] - center[d]) * inv_scale[d];
      acc += diff * diff;
      if (acc > r2) return false;
    }
  }
  return true;
}

}  // namespace

ClusterSet dbscan(std::span<const double> points, int count, int dim, const DbscanParams& params) {
  if (count < 1) throw std::invalid_argument("dbscan: need at least one point");
  if (!(params.eps_radius > 0.0)) throw config_error("dbscan: eps_radius must be positive");
  if (params.min_pts < 1) throw config_error("dbscan: min_pts must be >= 1");
  if (!params.center.empty() && (static_cast<int>(params.center.size()) != dim ||
                                 static_cast<int>(params.inv_scale.size()) != dim))
    throw config_error("dbscan: scaling factors do not match point dimension");

  const double r2 = params.eps_radius * params.eps_radius;
  const double* center = params.center.empty() ? nullptr : params.center.data();
  const double* inv_scale = params.inv_scale.empty() ? nullptr : params.inv_scale.data();
  auto point = [&](int i) { return points.data() + static_cast<std::size_t>(i) * dim; };

  std::vector<int> neighbors;
  auto query = [&](int i, std::vector<int>& out) {
    out.clear();
    const double* p = point(i);
    for (int j = 0; j < count; ++j)
      if (within_radius(p, point(j), dim, center, inv_scale, r2)) out.push_back(j);
  };

  ClusterSet result;
  result.labels.assign(count, kUnvisited);
  int next_label = 0;

  std::queue<int> frontier;
  std::vector<int> seed_neighbors;
  for (int i = 0; i < count; ++i) {
    if (result.labels[i] != kUnvisited) continue;
    query(i, seed_neighbors);
    if (static_cast<int>(seed_neighbors.size()) < params.min_pts) {
      result.labels[i] = kOutlierLabel;
      continue;
    }
    const int label = next_label++;
    result.labels[i] = label;
    for (int j : seed_neighbors)
      if (j != i && result.labels[j] != label) frontier.push(j);

    while (!frontier.empty()) {
      const int j = frontier.front();
      frontier.pop();
      if (result.labels[j] == kOutlierLabel) result.labels[j] = label;  // border point
      if (result.labels[j] != kUnvisited) continue;
      result.labels[j] = label;
      query(j, neighbors);
      if (static_cast<int>(neighbors.size()) >= params.min_pts) {
        for (int q : neighbors)
          if (result.labels[q] == kUnvisited || result.labels[q] == kOutlierLabel)
            frontier.push(q);
      }
    }
  }
  result.cluster_count = next_label;
  return result;
}

std::vector<double> make_rollout_points(std::span<const Rollout> rollouts) {
  if (rollouts.empty()) return {};
  const std::size_t eps_len = rollouts.front().eps.size();
  std::vector<double> points;
  points.reserve(rollouts.size() * (eps_len + 1));
  for (const Rollout& r : rollouts) {
    points.insert(points.end(), r.eps.begin(), r.eps.end());
    points.push_back(r.cost);
  }
  return points;
}

void fit_standardization(std::span<const double> points, int count, int dim,
                         DbscanParams& params) {
  params.center.assign(dim, 0.0);
  params.inv_scale.assign(dim, 0.0);
  for (int i = 0; i < count; ++i)
    for (int d = 0; d < dim; ++d)
      params.center[d] += points[static_cast<std::size_t>(i) * dim + d];
  for (double& c : params.center) c /= count;
  std::vector<double> var(dim, 0.0);
  for (int i = 0; i < count; ++i)
    for (int d = 0; d < dim; ++d) {
      const double diff = points[static_cast<std::size_t>(i) * dim + d] - params.center[d];
      var[d] += diff * diff;
    }
  for (int d = 0; d < dim; ++d) {
    const double sd = std::sqrt(var[d] / count);
    params.inv_scale[d] = sd > 1e-12 ? 1.0 / sd : 0.0;
  }
}

WeightVector cluster_weights(std::span<const double> costs, double lambda) {
  if (costs.empty()) throw std::invalid_argument("cluster_weights: empty cluster");
  return compute_weights(costs, lambda);
}

namespace {

std::vector<double> update_over_subset(const ControlPlan& plan, std::span<const Rollout> rollouts,
                                       std::span<const int> members, const WeightVector& weights) {
  std::vector<double> out = plan.inputs;
  for (std::size_t j = 0; j < members.size(); ++j) {
    const double w = weights.w[j];
    if (w == 0.0) continue;
    const std::vector<double>& eps = rollouts[members[j]].eps;
    for (std::size_t t = 0; t < out.size(); ++t) out[t] += w * eps[t];
  }
  return out;
}

double evaluate_plan(const StepFn& dynamics, std::span<const double> x0, const ControlPlan& plan,
                     std::span<const double> inputs, const CostSpec& cost) {
  ControlPlan candidate = plan;
  candidate.inputs.assign(inputs.begin(), inputs.end());
  const std::vector<double> zero_eps(inputs.size(), 0.0);
  // Zero perturbation also zeroes the u^T Sigma^{-1} eps penalty, so this is
  // the plain state cost of the candidate plan on the nominal model.
  return rollout(dynamics, x0, candidate, zero_eps, cost).cost;
}

}  // namespace

std::vector<double> baseline_update(const ControlPlan& plan, std::span<const Rollout> rollouts) {
  std::vector<double> costs(rollouts.size());
  for (std::size_t k = 0; k < rollouts.size(); ++k) costs[k] = rollouts[k].cost;
  const WeightVector weights = compute_weights(costs, plan.lambda);
  std::vector<double> out = plan.inputs;
  for (std::size_t k = 0; k < rollouts.size(); ++k) {
    const double w = weights.w[k];
    if (w == 0.0) continue;
    const std::vector<double>& eps = rollouts[k].eps;
    for (std::size_t t = 0; t < out.size(); ++t) out[t] += w * eps[t];
  }
  return out;
}

ClusteredResult clustered_mppi(const ControlPlan& plan, std::span<const Rollout> rollouts,
                               const DbscanParams& params, const CostSpec& nominal_cost,
                               const StepFn& dynamics, std::span<const double> x0) {
  if (rollouts.empty()) throw std::invalid_argument("clustered_mppi: no rollouts");

  ClusteredResult result;

  // Failed rollouts have no finite coordinates; cluster the rest.
  std::vector<int> valid;
  valid.reserve(rollouts.size());
  for (std::size_t k = 0; k < rollouts.size(); ++k) {
    if (rollouts[k].failed)
      ++result.diag.failed_rollouts;
    else
      valid.push_back(static_cast<int>(k));
  }
  if (valid.empty()) throw data_error("clustered_mppi: every rollout failed");

  const int dim = static_cast<int>(rollouts[valid[0]].eps.size()) + 1;
  std::vector<double> points;
  points.reserve(valid.size() * dim);
  for (int k : valid) {
    points.insert(points.end(), rollouts[k].eps.begin(), rollouts[k].eps.end());
    points.push_back(rollouts[k].cost);
  }

  DbscanParams scaled = params;
  if (scaled.center.empty()) fit_standardization(points, static_cast<int>(valid.size()), dim, scaled);
  const ClusterSet clusters = dbscan(points, static_cast<int>(valid.size()), dim, scaled);

  // Labels reported against the original rollout indexing; failed rollouts are
  // outliers by definition.
  result.diag.clusters.labels.assign(rollouts.size(), kOutlierLabel);
  for (std::size_t j = 0; j < valid.size(); ++j)
    result.diag.clusters.labels[valid[j]] = clusters.labels[j];
  result.diag.clusters.cluster_count = clusters.cluster_count;

  if (clusters.cluster_count == 0) {
    result.diag.outlier_fallback = true;
    result.inputs = baseline_update(plan, rollouts);
    return result;
  }

  std::vector<std::vector<int>> members(clusters.cluster_count);
  for (std::size_t j = 0; j < valid.size(); ++j)
    if (clusters.labels[j] != kOutlierLabel) members[clusters.labels[j]].push_back(valid[j]);

  std::size_t largest = 0;
  for (const auto& m : members) largest = std::max(largest, m.size());
  result.diag.max_cluster_fraction = static_cast<double>(largest) / static_cast<double>(valid.size());

  result.diag.candidates.reserve(clusters.cluster_count);
  int best = -1;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int c = 0; c < clusters.cluster_count; ++c) {
    std::vector<double> costs(members[c].size());
    for (std::size_t j = 0; j < members[c].size(); ++j) costs[j] = rollouts[members[c][j]].cost;
    const WeightVector weights = cluster_weights(costs, plan.lambda);

    ClusterCandidate candidate;
    candidate.cluster_id = c;
    candidate.member_count = static_cast<int>(members[c].size());
    candidate.inputs = update_over_subset(plan, rollouts, members[c], weights);
    candidate.evaluated_cost = evaluate_plan(dynamics, x0, plan, candidate.inputs, nominal_cost);
    if (candidate.evaluated_cost < best_cost) {
      best_cost = candidate.evaluated_cost;
      best = c;
    }
    result.diag.candidates.push_back(std::move(candidate));
  }
  if (best < 0) best = 0;  // all candidates evaluated to +inf; keep lowest id

  result.diag.chosen_cluster = best;
  result.inputs = result.diag.candidates[best].inputs;
  return result;
}

}  // namespace mppi
