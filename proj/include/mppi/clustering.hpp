#pragma once

#include <span>
#include <vector>

#include "mppi/dynamics.hpp"

namespace mppi {

inline constexpr int kOutlierLabel = -1;

// DBSCAN configuration. Points are standardized per dimension before distance
// computation: coordinate d maps to (x_d - center[d]) * inv_scale[d]. Empty
// vectors mean identity. eps_radius is therefore in standardized units.
//
// The defaults deliberately keep clusters fine-grained (well under 20% of a
// batch): candidate plans then come from narrow perturbation bands, which is
// what lets the selection step commit to one side of a cost valley instead of
// averaging across it.
struct DbscanParams {
  double eps_radius = 0.12;
  int min_pts = 2;
  std::vector<double> center;
  std::vector<double> inv_scale;
};

// Cluster labels per point: id in [0, cluster_count) or kOutlierLabel. Ids are
// assigned in first-touch order, so labeling is deterministic.
struct ClusterSet {
  std::vector<int> labels;
  int cluster_count = 0;
};

// Classical DBSCAN over `count` points of dimension `dim`, stored row-major in
// `points`. Core points have >= min_pts neighbors (self included) within
// eps_radius; clusters are their density-reachable closures; border points are
// claimed by the first cluster that reaches them; the rest are outliers.
ClusterSet dbscan(std::span<const double> points, int count, int dim, const DbscanParams& params);

// One point per rollout: the flattened perturbation row followed by the cost.
// Failed rollouts must be filtered out by the caller (their coordinates are
// not finite).
std::vector<double> make_rollout_points(std::span<const Rollout> rollouts);

// Fills params.center / params.inv_scale with per-dimension z-score factors
// over the batch. Dimensions with (near-)zero spread are mapped to 0.
void fit_standardization(std::span<const double> points, int count, int dim, DbscanParams& params);

// Importance-sampling weights restricted to one cluster. Restricting the
// sampling density to the cluster region rescales every member weight by the
// same constant, which cancels in the normalization, so this is exactly the
// baseline weight formula applied to the cluster's costs alone. No new cost
// evaluations are needed.
WeightVector cluster_weights(std::span<const double> costs, double lambda);

struct ClusterCandidate {
  int cluster_id = 0;
  int member_count = 0;
  std::vector<double> inputs;  // N x m candidate plan
  double evaluated_cost = 0.0;  // noiseless rollout through the nominal cost
};

struct ClusteredDiagnostics {
  ClusterSet clusters;
  std::vector<ClusterCandidate> candidates;
  int chosen_cluster = kOutlierLabel;
  bool outlier_fallback = false;
  int failed_rollouts = 0;
  double max_cluster_fraction = 0.0;  // reported, not asserted (tuning aid)
};

struct ClusteredResult {
  std::vector<double> inputs;
  ClusteredDiagnostics diag;
};

// Baseline update over a finished batch: softmax weights over all rollout
// costs, then the weighted perturbation average.
std::vector<double> baseline_update(const ControlPlan& plan, std::span<const Rollout> rollouts);

// Clusters the rollouts' (perturbation, cost) points, runs the baseline update
// inside each cluster, evaluates every candidate plan with a noiseless rollout
// through nominal_cost, and returns the cheapest. Ties break toward the lowest
// cluster id. If every point is an outlier, falls back to the baseline update
// over the whole batch.
ClusteredResult clustered_mppi(const ControlPlan& plan, std::span<const Rollout> rollouts,
                               const DbscanParams& params, const CostSpec& nominal_cost,
                               const StepFn& dynamics, std::span<const double> x0);

}  // namespace mppi
