#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mppi/dynamics.hpp"
#include "mppi/rng.hpp"

namespace mppi {

struct Bounds {
  double min_x = 0.0, min_y = 0.0, max_x = 50.0, max_y = 50.0;

  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
  double perimeter() const { return 2.0 * (width() + height()); }
  bool contains(double x, double y) const {
    return x >= min_x && x <= max_x && y >= min_y && y <= max_y;
  }
};

struct Circle {
  double x = 0.0, y = 0.0, r = 1.0;
};

// Convex polygon, vertices counter-clockwise on a common circumcircle.
struct Polygon {
  std::vector<double> xy;  // x0,y0,x1,y1,...
  double bb_min_x = 0.0, bb_min_y = 0.0, bb_max_x = 0.0, bb_max_y = 0.0;

  int vertex_count() const { return static_cast<int>(xy.size() / 2); }
  void recompute_bbox();
};

// Static workspace: leaving the bounds counts as collision, as does touching
// any obstacle (boundaries inclusive). Obstacles are inflated by `inflation`
// at query time (agent radius; 0 for a point agent).
struct StaticMap {
  Bounds bounds;
  std::uint64_t seed = 0;
  double inflation = 0.0;
  std::vector<Circle> circles;
  std::vector<Polygon> polygons;

  // coarse cell index rebuilt by finalize(); cell size tracks obstacle size
  double index_cell = 5.0;
  std::vector<std::vector<int>> index_cells;  // circle ids then polygon ids + offset
  int index_nx = 0, index_ny = 0;
  void finalize();
};

// Random forest of circles and convex polygons (5-8 vertices), sizes drawn
// from [min_size, max_size], fully contained in the bounds. Deterministic in
// seed.
StaticMap generate_forest(std::uint64_t seed, const Bounds& bounds, int obstacle_count,
                          double min_size, double max_size);

bool static_collision(std::span<const double> x, const StaticMap& map);

// Euclidean distance to the goal plus alpha when the state is in collision.
// Used for both the running and the terminal cost. map may be null (no static
// obstacles, no bounds check).
double goal_distance_cost(std::span<const double> x, double goal_x, double goal_y, double alpha,
                          const StaticMap* map);
CostSpec make_goal_cost(const StaticMap* map, double goal_x, double goal_y, double alpha);

// Rejection-samples a collision-free (x, y, theta) pose; throws config_error
// after max_tries attempts (workspace too crowded).
StateVec sample_free_pose(const StaticMap& map, RngStream& rng, int max_tries = 10000);

// A moving obstacle of the dynamic experiment with its true sampled motion.
struct DynamicField {
  struct Mover {
    double x = 0.0, y = 0.0, theta = 0.0;
    double v = 1.0, omega = 0.0;
    double radius = 1.0;
  };
  Bounds bounds{0.0, 0.0, 75.0, 50.0};
  std::uint64_t seed = 0;
  std::vector<Mover> movers;
};

// Positions uniform over the field bounds, headings uniform over [0, 2pi),
// v uniform in [0.5, 1.5] m/s, omega uniform in [-0.5, 0.5] rad/s, 1 m
// collision radius each. Deterministic in seed.
DynamicField sample_dynamic_field(std::uint64_t seed, int count);

// Versioned JSON round-trips for replay.
std::string map_to_json(const StaticMap& map);
StaticMap map_from_json(const std::string& text);
std::string field_to_json(const DynamicField& field);
DynamicField field_from_json(const std::string& text);

}  // namespace mppi
