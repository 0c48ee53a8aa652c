#include "mppi/environment.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "mppi/errors.hpp"

namespace mppi {

namespace {

constexpr double kTau = 6.283185307179586;

bool point_in_circle(double x, double y, const Circle& c, double inflation) {
  const double dx = x - c.x;
  const double dy = y - c.y;
  const double r = c.r + inflation;
  return dx * dx + dy * dy <= r * r;
}

// Boundary inclusive: a point on an edge has every cross product >= 0 (CCW).
bool point_in_polygon(double x, double y, const Polygon& poly) {
  const int n = poly.vertex_count();
  for (int i = 0; i < n; ++i) {
    const double ax = poly.xy[2 * i], ay = poly.xy[2 * i + 1];
    const double bx = poly.xy[2 * ((i + 1) % n)], by = poly.xy[2 * ((i + 1) % n) + 1];
    if ((bx - ax) * (y - ay) - (by - ay) * (x - ax) < -1e-12) return false;
  }
  return true;
}

double dist_to_segment_sq(double x, double y, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double wx = x - ax, wy = y - ay;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? (wx * vx + wy * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = x - (ax + t * vx), dy = y - (ay + t * vy);
  return dx * dx + dy * dy;
}

bool point_in_polygon_inflated(double x, double y, const Polygon& poly, double inflation) {
  if (x < poly.bb_min_x - inflation || x > poly.bb_max_x + inflation ||
      y < poly.bb_min_y - inflation || y > poly.bb_max_y + inflation)
    return false;
  if (point_in_polygon(x, y, poly)) return true;
  if (inflation <= 0.0) return false;
  const int n = poly.vertex_count();
  for (int i = 0; i < n; ++i) {
    const double ax = poly.xy[2 * i], ay = poly.xy[2 * i + 1];
    const double bx = poly.xy[2 * ((i + 1) % n)], by = poly.xy[2 * ((i + 1) % n) + 1];
    if (dist_to_segment_sq(x, y, ax, ay, bx, by) <= inflation * inflation) return true;
  }
  return false;
}

}  // namespace

void Polygon::recompute_bbox() {
  bb_min_x = bb_min_y = 1e300;
  bb_max_x = bb_max_y = -1e300;
  for (int i = 0; i < vertex_count(); ++i) {
    bb_min_x = std::min(bb_min_x, xy[2 * i]);
    bb_max_x = std::max(bb_max_x, xy[2 * i]);
    bb_min_y = std::min(bb_min_y, xy[2 * i + 1]);
    bb_max_y = std::max(bb_max_y, xy[2 * i + 1]);
  }
}

void StaticMap::finalize() {
  double max_extent = 1.0;
  for (const Circle& c : circles) max_extent = std::max(max_extent, c.r);
  for (const Polygon& p : polygons)
    max_extent = std::max({max_extent, p.bb_max_x - p.bb_min_x, p.bb_max_y - p.bb_min_y});
  index_cell = std::max(1.0, max_extent);
  index_nx = std::max(1, static_cast<int>(std::ceil(bounds.width() / index_cell)));
  index_ny = std::max(1, static_cast<int>(std::ceil(bounds.height() / index_cell)));
  index_cells.assign(static_cast<std::size_t>(index_nx) * index_ny, {});

  auto insert_box = [&](double lo_x, double lo_y, double hi_x, double hi_y, int id) {
    const double pad = inflation + 1e-9;
    const int cx0 = std::clamp(
        static_cast<int>(std::floor((lo_x - pad - bounds.min_x) / index_cell)), 0, index_nx - 1);
    const int cx1 = std::clamp(
        static_cast<int>(std::floor((hi_x + pad - bounds.min_x) / index_cell)), 0, index_nx - 1);
    const int cy0 = std::clamp(
        static_cast<int>(std::floor((lo_y - pad - bounds.min_y) / index_cell)), 0, index_ny - 1);
    const int cy1 = std::clamp(
        static_cast<int>(std::floor((hi_y + pad - bounds.min_y) / index_cell)), 0, index_ny - 1);
    for (int cy = cy0; cy <= cy1; ++cy)
      for (int cx = cx0; cx <= cx1; ++cx)
        index_cells[static_cast<std::size_t>(cy) * index_nx + cx].push_back(id);
  };
  for (std::size_t i = 0; i < circles.size(); ++i)
    insert_box(circles[i].x - circles[i].r, circles[i].y - circles[i].r,
               circles[i].x + circles[i].r, circles[i].y + circles[i].r, static_cast<int>(i));
  for (std::size_t i = 0; i < polygons.size(); ++i)
    insert_box(polygons[i].bb_min_x, polygons[i].bb_min_y, polygons[i].bb_max_x,
               polygons[i].bb_max_y, static_cast<int>(circles.size() + i));
}

StaticMap generate_forest(std::uint64_t seed, const Bounds& bounds, int obstacle_count,
                          double min_size, double max_size) {
  if (obstacle_count < 0) throw config_error("generate_forest: obstacle_count must be >= 0");
  if (!(min_size > 0.0) || max_size < min_size)
    throw config_error("generate_forest: bad size range");
  if (2.0 * max_size >= std::min(bounds.width(), bounds.height()))
    throw config_error("generate_forest: obstacles do not fit in the bounds");

  StaticMap map;
  map.bounds = bounds;
  map.seed = seed;
  RngStream rng(mix_seed(seed, 0x666F72ULL));

  for (int i = 0; i < obstacle_count; ++i) {
    const double size = rng.next_range(min_size, max_size);
    const double cx = rng.next_range(bounds.min_x + size, bounds.max_x - size);
    const double cy = rng.next_range(bounds.min_y + size, bounds.max_y - size);
    if (rng.next_uniform() < 0.5) {
      map.circles.push_back({cx, cy, size});
    } else {
      const int verts = 5 + static_cast<int>(rng.next_u64() % 4);  // 5..8
      // Vertices on the circumcircle are always in convex position. Spread the
      // angles with a jittered uniform layout so no sliver faces appear.
      Polygon poly;
      poly.xy.reserve(2 * verts);
      const double phase = rng.next_range(0.0, kTau);
      for (int v = 0; v < verts; ++v) {
        const double angle = phase + (v + 0.6 * rng.next_uniform()) * kTau / verts;
        poly.xy.push_back(cx + size * std::cos(angle));
        poly.xy.push_back(cy + size * std::sin(angle));
      }
      poly.recompute_bbox();
      map.polygons.push_back(std::move(poly));
    }
  }
  map.finalize();
  return map;
}

bool static_collision(std::span<const double> x, const StaticMap& map) {
  const double px = x[0], py = x[1];
  if (!map.bounds.contains(px, py)) return true;  // out of bounds counts as collision
  if (map.index_cells.empty()) {
    for (const Circle& c : map.circles)
      if (point_in_circle(px, py, c, map.inflation)) return true;
    for (const Polygon& p : map.polygons)
      if (point_in_polygon_inflated(px, py, p, map.inflation)) return true;
    return false;
  }
  const int cx = std::clamp(static_cast<int>(std::floor((px - map.bounds.min_x) / map.index_cell)),
                            0, map.index_nx - 1);
  const int cy = std::clamp(static_cast<int>(std::floor((py - map.bounds.min_y) / map.index_cell)),
                            0, map.index_ny - 1);
  const int circle_count = static_cast<int>(map.circles.size());
  for (int id : map.index_cells[static_cast<std::size_t>(cy) * map.index_nx + cx]) {
    if (id < circle_count) {
      if (point_in_circle(px, py, map.circles[id], map.inflation)) return true;
    } else if (point_in_polygon_inflated(px, py, map.polygons[id - circle_count], map.inflation)) {
      return true;
    }
  }
  return false;
}

double goal_distance_cost(std::span<const double> x, double goal_x, double goal_y, double alpha,
                          const StaticMap* map) {
  const double dx = x[0] - goal_x;
  const double dy = x[1] - goal_y;
  double cost = std::sqrt(dx * dx + dy * dy);
  if (map != nullptr && static_collision(x, *map)) cost += alpha;
  return cost;
}

CostSpec make_goal_cost(const StaticMap* map, double goal_x, double goal_y, double alpha) {
  CostSpec spec;
  spec.alpha = alpha;
  spec.running = [=](std::span<const double> x, int) {
    return goal_distance_cost(x, goal_x, goal_y, alpha, map);
  };
  spec.terminal = [=](std::span<const double> x) {
    return goal_distance_cost(x, goal_x, goal_y, alpha, map);
  };
  return spec;
}

StateVec sample_free_pose(const StaticMap& map, RngStream& rng, int max_tries) {
  for (int i = 0; i < max_tries; ++i) {
    StateVec pose = {rng.next_range(map.bounds.min_x, map.bounds.max_x),
                     rng.next_range(map.bounds.min_y, map.bounds.max_y),
                     rng.next_range(0.0, kTau)};
    if (!static_collision(pose, map)) return pose;
  }
  throw config_error("sample_free_pose: workspace too crowded");
}

DynamicField sample_dynamic_field(std::uint64_t seed, int count) {
  if (count < 0) throw config_error("sample_dynamic_field: count must be >= 0");
  DynamicField field;
  field.seed = seed;
  RngStream rng(mix_seed(seed, 0x64796EULL));
  field.movers.reserve(count);
  for (int i = 0; i < count; ++i) {
    DynamicField::Mover m;
    m.x = rng.next_range(field.bounds.min_x, field.bounds.max_x);
    m.y = rng.next_range(field.bounds.min_y, field.bounds.max_y);
    m.theta = rng.next_range(0.0, kTau);
    m.v = rng.next_range(0.5, 1.5);
    m.omega = rng.next_range(-0.5, 0.5);
    m.radius = 1.0;
    field.movers.push_back(m);
  }
  return field;
}

namespace {
constexpr int kMapSchemaVersion = 1;
}

std::string map_to_json(const StaticMap& map) {
  nlohmann::json j;
  j["schema_version"] = kMapSchemaVersion;
  j["seed"] = map.seed;
  j["inflation"] = map.inflation;
  j["bounds"] = {map.bounds.min_x, map.bounds.min_y, map.bounds.max_x, map.bounds.max_y};
  nlohmann::json obstacles = nlohmann::json::array();
  for (const Circle& c : map.circles)
    obstacles.push_back({{"type", "circle"}, {"x", c.x}, {"y", c.y}, {"r", c.r}});
  for (const Polygon& p : map.polygons)
    obstacles.push_back({{"type", "polygon"}, {"xy", p.xy}});
  j["obstacles"] = obstacles;
  return j.dump(2);
}

StaticMap map_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  if (j.at("schema_version").get<int>() != kMapSchemaVersion)
    throw config_error("map_from_json: unsupported schema version");
  StaticMap map;
  map.seed = j.at("seed").get<std::uint64_t>();
  map.inflation = j.at("inflation").get<double>();
  const auto& b = j.at("bounds");
  map.bounds = {b.at(0), b.at(1), b.at(2), b.at(3)};
  for (const auto& o : j.at("obstacles")) {
    const std::string type = o.at("type").get<std::string>();
    if (type == "circle") {
      map.circles.push_back({o.at("x"), o.at("y"), o.at("r")});
    } else if (type == "polygon") {
      Polygon p;
      p.xy = o.at("xy").get<std::vector<double>>();
      p.recompute_bbox();
      map.polygons.push_back(std::move(p));
    } else {
      throw config_error("map_from_json: unknown obstacle type " + type);
    }
  }
  map.finalize();
  return map;
}

std::string field_to_json(const DynamicField& field) {
  nlohmann::json j;
  j["schema_version"] = kMapSchemaVersion;
  j["seed"] = field.seed;
  j["bounds"] = {field.bounds.min_x, field.bounds.min_y, field.bounds.max_x, field.bounds.max_y};
  nlohmann::json movers = nlohmann::json::array();
  for (const auto& m : field.movers)
    movers.push_back({{"x", m.x},
                      {"y", m.y},
                      {"theta", m.theta},
                      {"v", m.v},
                      {"omega", m.omega},
                      {"radius", m.radius}});
  j["movers"] = movers;
  return j.dump(2);
}

DynamicField field_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  if (j.at("schema_version").get<int>() != kMapSchemaVersion)
    throw config_error("field_from_json: unsupported schema version");
  DynamicField field;
  field.seed = j.at("seed").get<std::uint64_t>();
  const auto& b = j.at("bounds");
  field.bounds = {b.at(0), b.at(1), b.at(2), b.at(3)};
  for (const auto& m : j.at("movers"))
    field.movers.push_back({m.at("x"), m.at("y"), m.at("theta"), m.at("v"), m.at("omega"),
                            m.at("radius")});
  return field;
}

}  // namespace mppi
