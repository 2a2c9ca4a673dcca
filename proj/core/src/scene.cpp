#include "bevplan/scene.hpp"

#include <algorithm>
#include <cmath>

#include "bevplan/expert.hpp"

namespace bevplan {

const char* to_string(NavCommand c) {
  switch (c) {
    case NavCommand::kLeft: return "left";
    case NavCommand::kStraight: return "straight";
    case NavCommand::kRight: return "right";
  }
  return "?";
}

const char* to_string(SceneFamily f) {
  switch (f) {
    case SceneFamily::kStraight: return "straight";
    case SceneFamily::kCurve: return "curve";
    case SceneFamily::kTee: return "t-intersection";
    case SceneFamily::kLeadVehicle: return "lead-vehicle";
    case SceneFamily::kCrossingPedestrian: return "crossing-pedestrian";
  }
  return "?";
}

bool GridFrame::world_to_cell(Vec2 p, int& row, int& col) {
  const double half = kGridSize * kCellSize / 2.0;  // 16 m
  row = static_cast<int>(std::floor(p.x / kCellSize));
  col = static_cast<int>(std::floor((half - p.y) / kCellSize));
  return row >= 0 && row < kGridSize && col >= 0 && col < kGridSize;
}

Vec2 GridFrame::cell_center(int row, int col) {
  const double half = kGridSize * kCellSize / 2.0;
  return {(row + 0.5) * kCellSize, half - (col + 0.5) * kCellSize};
}

Vec2 GridFrame::world_to_feature_coords(Vec2 p) {
  const double half = kFeatGridSize * kFeatCellSize / 2.0;
  return {p.x / kFeatCellSize - 0.5, (half - p.y) / kFeatCellSize - 0.5};
}

bool RasterPlane::test_world(Vec2 p) const {
  int r = 0, c = 0;
  if (!GridFrame::world_to_cell(p, r, c)) return false;
  return at(r, c) != 0;
}

int RasterPlane::count() const {
  int n = 0;
  for (uint8_t v : cells) n += v != 0;
  return n;
}

bool SceneSample::operator==(const SceneSample& other) const {
  if (!(raster == other.raster) || agents.size() != other.agents.size() ||
      centerlines.size() != other.centerlines.size())
    return false;
  for (size_t i = 0; i < agents.size(); ++i) {
    const auto& a = agents[i];
    const auto& b = other.agents[i];
    if (a.pos.x != b.pos.x || a.pos.y != b.pos.y || a.heading != b.heading ||
        a.speed != b.speed || a.length != b.length || a.width != b.width || a.cls != b.cls)
      return false;
  }
  auto poly_eq = [](const Polyline& a, const Polyline& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
      if (a[i].x != b[i].x || a[i].y != b[i].y) return false;
    return true;
  };
  if (!poly_eq(route, other.route)) return false;
  for (size_t i = 0; i < centerlines.size(); ++i)
    if (!poly_eq(centerlines[i], other.centerlines[i])) return false;
  return ego.speed == other.ego.speed && ego.accel == other.ego.accel &&
         ego.command == other.ego.command && expert == other.expert &&
         expert_blocked == other.expert_blocked && family == other.family && seed == other.seed;
}

namespace {

void append_arc(Polyline& out, Vec2 center, double radius, double a0, double a1, double step) {
  const double span = a1 - a0;
  const int n = std::max(2, static_cast<int>(std::ceil(std::abs(span) * radius / step)));
  for (int i = 1; i <= n; ++i) {
    const double a = a0 + span * (static_cast<double>(i) / n);
    out.push_back(center + Vec2{std::cos(a), std::sin(a)} * radius);
  }
}

Polyline straight_line(Vec2 a, Vec2 b, double step = 1.0) {
  Polyline out;
  const double len = (b - a).norm();
  const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
  for (int i = 0; i <= n; ++i) out.push_back(a + (b - a) * (static_cast<double>(i) / n));
  return out;
}

void mark_corridor(RasterPlane& plane, const Corridor& corridor) {
  if (corridor.center.size() < 2) return;
  const double half = corridor.width / 2.0;
  for (int r = 0; r < kGridSize; ++r)
    for (int c = 0; c < kGridSize; ++c) {
      if (plane.at(r, c)) continue;
      if (point_polyline_distance(GridFrame::cell_center(r, c), corridor.center) <= half)
        plane.set(r, c, 1);
    }
}

void mark_footprint(RasterPlane& plane, const OrientedBox& box) {
  const auto corners = box.corners();
  double xmin = corners[0].x, xmax = corners[0].x, ymin = corners[0].y, ymax = corners[0].y;
  for (const Vec2& p : corners) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  for (int r = 0; r < kGridSize; ++r)
    for (int c = 0; c < kGridSize; ++c) {
      const Vec2 center = GridFrame::cell_center(r, c);
      if (center.x < xmin - kCellSize || center.x > xmax + kCellSize ||
          center.y < ymin - kCellSize || center.y > ymax + kCellSize)
        continue;
      if (box_contains(box, center)) plane.set(r, c, 1);
    }
}

Polyline transform_polyline(const Polyline& line, const Pose2& ego_pose) {
  Polyline out;
  out.reserve(line.size());
  for (const Vec2& p : line) out.push_back(ego_pose.to_local(p));
  return out;
}

}  // namespace

void rasterize_polyline(RasterPlane& plane, const Polyline& line) {
  // Supercover walk at quarter-cell steps.
  for (size_t i = 1; i < line.size(); ++i) {
    const Vec2 a = line[i - 1], b = line[i];
    const double len = (b - a).norm();
    const int n = std::max(1, static_cast<int>(std::ceil(len / (kCellSize * 0.25))));
    for (int k = 0; k <= n; ++k) {
      const Vec2 p = a + (b - a) * (static_cast<double>(k) / n);
      int r = 0, c = 0;
      if (GridFrame::world_to_cell(p, r, c)) plane.set(r, c, 1);
    }
  }
}

SceneSample render_scene(const WorldScene& world, const Pose2& ego_pose, double ego_speed,
                         double ego_accel, double world_time) {
  SceneSample scene;
  scene.family = world.family;
  scene.ego = {ego_speed, ego_accel, world.command};

  scene.route = transform_polyline(world.route, ego_pose);
  for (const Polyline& line : world.centerlines)
    scene.centerlines.push_back(transform_polyline(line, ego_pose));

  for (const AgentState& a : world.agents) {
    AgentState local = a;
    local.pos = ego_pose.to_local(a.position_at(world_time));
    local.heading = wrap_angle(a.heading - ego_pose.heading);
    scene.agents.push_back(local);
  }

  for (const Corridor& road : world.roads) {
    Corridor local{transform_polyline(road.center, ego_pose), road.width};
    mark_corridor(scene.raster[kPlaneRoad], local);
  }
  for (const Polyline& line : scene.centerlines)
    rasterize_polyline(scene.raster[kPlaneCenterline], line);
  for (const AgentState& a : scene.agents)
    mark_footprint(scene.raster[kPlaneVehicle], {a.pos, a.heading, a.length, a.width});
  for (const Corridor& walk : world.walkways) {
    Corridor local{transform_polyline(walk.center, ego_pose), walk.width};
    mark_corridor(scene.raster[kPlaneWalkway], local);
  }
  return scene;
}

namespace {

void place_ambient_agents(WorldScene& world, Rng& rng, int count) {
  const OrientedBox ego_box{{0.0, 0.0}, 0.0, 4.0, 1.8};
  for (int i = 0; i < count; ++i) {
    for (int attempt = 0; attempt < 8; ++attempt) {
      const double s = rng.uniform(4.0, polyline_length(world.route) - 2.0);
      const double side = rng.uniform() < 0.5 ? 1.0 : -1.0;
      const double lateral = side * rng.uniform(4.5, 7.0);
      const Vec2 base = polyline_point_at(world.route, s);
      const double tangent = polyline_heading_at(world.route, s);
      const Vec2 pos =
          base + Vec2{std::cos(tangent + kPi / 2), std::sin(tangent + kPi / 2)} * lateral;
      AgentState agent;
      agent.pos = pos;
      agent.heading = wrap_angle(tangent + rng.uniform(-0.3, 0.3));
      agent.speed = 0.0;  // parked clutter
      agent.cls = AgentClass::kVehicle;
      int r = 0, c = 0;
      if (!GridFrame::world_to_cell(pos, r, c)) continue;
      if (boxes_intersect(ego_box, {agent.pos, agent.heading, agent.length, agent.width}))
        continue;
      world.agents.push_back(agent);
      break;
    }
  }
}

uint64_t derive_seed(uint64_t seed, uint64_t salt) {
  uint64_t s = seed ^ (0x9e3779b97f4a7c15ull * (salt + 1));
  return splitmix64(s);
}

}  // namespace

WorldScene generate_world(uint64_t seed, const GenConfig& config) {
  if (config.families.empty()) throw ConfigError("generate_world: no scene families enabled");
  Rng rng(derive_seed(seed, 0x5ce9e));
  WorldScene world;
  world.family = config.families[rng.uniform_index(config.families.size())];
  world.cruise_speed = rng.uniform(config.cruise_min, config.cruise_max);
  world.start_accel = rng.uniform(-0.4, 0.4);

  const double half_lane = config.lane_width / 2.0;
  const double walk_offset = half_lane + 1.25;
  const double walk_width = 1.5;

  auto add_walkways_along = [&](const Polyline& center) {
    Polyline left, right;
    for (size_t i = 0; i < center.size(); ++i) {
      double heading;
      if (i + 1 < center.size())
        heading = std::atan2(center[i + 1].y - center[i].y, center[i + 1].x - center[i].x);
      else
        heading = std::atan2(center[i].y - center[i - 1].y, center[i].x - center[i - 1].x);
      const Vec2 normal{std::cos(heading + kPi / 2), std::sin(heading + kPi / 2)};
      left.push_back(center[i] + normal * walk_offset);
      right.push_back(center[i] - normal * walk_offset);
    }
    world.walkways.push_back({left, walk_width});
    world.walkways.push_back({right, walk_width});
  };

  switch (world.family) {
    case SceneFamily::kStraight: {
      // Ego exactly on the centerline; the collinearity contract depends on it.
      world.command = NavCommand::kStraight;
      world.route = straight_line({-2.0, 0.0}, {33.0, 0.0});
      world.roads.push_back({world.route, config.lane_width});
      world.centerlines.push_back(world.route);
      world.start_speed = world.cruise_speed;
      add_walkways_along(world.route);
      break;
    }
    case SceneFamily::kCurve: {
      const bool left_turn = rng.uniform() < 0.5;
      world.command = left_turn ? NavCommand::kLeft : NavCommand::kRight;
      const double lead_in = rng.uniform(3.0, 6.0);
      const double radius = rng.uniform(9.0, 14.0);
      const double arc_angle = rng.uniform(kPi / 3, kPi / 2);
      Polyline route = straight_line({-2.0, 0.0}, {lead_in, 0.0});
      const double side = left_turn ? 1.0 : -1.0;
      const Vec2 center{lead_in, side * radius};
      append_arc(route, center, radius, -side * kPi / 2, -side * kPi / 2 + side * arc_angle, 0.8);
      const double exit_heading = side * arc_angle;
      const Vec2 end = route.back();
      const Vec2 tail = end + Vec2{std::cos(exit_heading), std::sin(exit_heading)} * 12.0;
      Polyline tail_line = straight_line(end, tail);
      route.insert(route.end(), tail_line.begin() + 1, tail_line.end());
      world.route = route;
      world.roads.push_back({route, config.lane_width});
      world.centerlines.push_back(route);
      world.start_speed = std::min(world.cruise_speed, rng.uniform(3.0, 5.0));
      world.cruise_speed = std::min(world.cruise_speed, 5.5);
      add_walkways_along(straight_line({-2.0, 0.0}, {lead_in, 0.0}));
      break;
    }
    case SceneFamily::kTee: {
      const bool left_turn = rng.uniform() < 0.5;
      world.command = left_turn ? NavCommand::kLeft : NavCommand::kRight;
      const double junction_x = rng.uniform(10.0, 15.0);
      const double radius = rng.uniform(4.5, 6.5);
      const double side = left_turn ? 1.0 : -1.0;
      const Polyline stem = straight_line({-2.0, 0.0}, {junction_x, 0.0});
      const Polyline cross = straight_line({junction_x, -14.0}, {junction_x, 14.0});
      Polyline route = straight_line({-2.0, 0.0}, {junction_x - radius, 0.0});
      const Vec2 center{junction_x - radius, side * radius};
      append_arc(route, center, radius, -side * kPi / 2, 0.0, 0.6);
      const Vec2 exit_end{junction_x, side * 13.0};
      Polyline exit_line = straight_line(route.back(), exit_end);
      route.insert(route.end(), exit_line.begin() + 1, exit_line.end());
      world.route = route;
      world.roads.push_back({stem, config.lane_width});
      world.roads.push_back({cross, config.lane_width});
      world.roads.push_back({route, config.lane_width});
      world.centerlines.push_back(stem);
      world.centerlines.push_back(cross);
      world.centerlines.push_back(route);
      world.start_speed = std::min(world.cruise_speed, rng.uniform(3.0, 4.5));
      world.cruise_speed = std::min(world.cruise_speed, 5.0);
      add_walkways_along(stem);
      break;
    }
    case SceneFamily::kLeadVehicle: {
      world.command = NavCommand::kStraight;
      world.route = straight_line({-2.0, 0.0}, {33.0, 0.0});
      world.roads.push_back({world.route, config.lane_width});
      world.centerlines.push_back(world.route);
      world.start_speed = std::min(world.cruise_speed, rng.uniform(3.5, 5.5));
      // Keep the required deceleration comfortable from the start gap.
      const double min_gap = world.start_speed * world.start_speed / 4.0 + 4.0;
      const double gap = rng.uniform(min_gap, std::max(min_gap + 1.0, 18.0));
      AgentState lead;
      lead.pos = {gap, 0.0};
      lead.heading = 0.0;
      lead.speed = rng.uniform() < 0.4 ? 0.0 : rng.uniform(0.2, 0.5) * world.cruise_speed;
      lead.cls = AgentClass::kVehicle;
      world.agents.push_back(lead);
      add_walkways_along(world.route);
      break;
    }
    case SceneFamily::kCrossingPedestrian: {
      world.command = NavCommand::kStraight;
      world.route = straight_line({-2.0, 0.0}, {33.0, 0.0});
      world.roads.push_back({world.route, config.lane_width});
      world.centerlines.push_back(world.route);
      world.start_speed = std::min(world.cruise_speed, rng.uniform(3.0, 4.5));
      world.cruise_speed = std::min(world.cruise_speed, 5.0);
      const double cross_x = rng.uniform(10.0, 20.0);
      const double side = rng.uniform() < 0.5 ? 1.0 : -1.0;
      AgentState ped;
      ped.pos = {cross_x, side * rng.uniform(3.2, 4.5)};
      ped.heading = side > 0 ? -kPi / 2 : kPi / 2;
      ped.speed = rng.uniform(0.8, 1.4);
      ped.length = 0.6;
      ped.width = 0.6;
      ped.cls = AgentClass::kPedestrian;
      world.agents.push_back(ped);
      add_walkways_along(world.route);
      world.walkways.push_back(
          {straight_line({cross_x, -walk_offset - 0.5}, {cross_x, walk_offset + 0.5}, 0.5), 2.0});
      break;
    }
  }

  const int base_agents = static_cast<int>(world.agents.size());
  int ambient = 0;
  if (config.max_agents > base_agents) {
    const int lo = std::max(0, config.min_agents - base_agents);
    const int span = config.max_agents - base_agents - lo;
    ambient = lo + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(span) + 1));
  }
  if (ambient > 0) place_ambient_agents(world, rng, ambient);
  return world;
}

namespace {

bool expert_feasible(const SceneSample& scene) {
  const auto& expert = scene.expert;
  for (int i = 0; i < kHorizonSteps; ++i) {
    const Vec2 p = expert.position(i);
    if (!scene.raster[kPlaneRoad].test_world(p)) return false;
    const OrientedBox ego_box{p, expert.points[static_cast<size_t>(i)].heading, 4.0, 1.8};
    const double t = (i + 1) * kPlanDt;
    for (const AgentState& a : scene.agents)
      if (boxes_intersect(ego_box, a.footprint_at(t))) return false;
  }
  return true;
}

}  // namespace

SceneSample generate_scene(uint64_t seed, const GenConfig& config) {
  for (int attempt = 0; attempt < config.max_resample_attempts; ++attempt) {
    const uint64_t world_seed = derive_seed(seed, static_cast<uint64_t>(attempt));
    WorldScene world = generate_world(world_seed, config);
    SceneSample scene = render_scene(world, Pose2{}, world.start_speed, world.start_accel, 0.0);
    ExpertInput input{&scene.route, &scene.agents, world.start_speed, world.cruise_speed};
    ExpertResult result = scripted_expert(input);
    scene.expert = result.trajectory;
    scene.expert_blocked = result.blocked;
    scene.seed = seed;
    if (expert_feasible(scene)) return scene;
  }
  throw ContractError("generate_scene: no feasible scene after " +
                      std::to_string(config.max_resample_attempts) + " attempts (seed " +
                      std::to_string(seed) + ")");
}

}  // namespace bevplan
