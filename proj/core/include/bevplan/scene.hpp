#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bevplan/geometry.hpp"
#include "bevplan/rng.hpp"
#include "bevplan/trajectory.hpp"

namespace bevplan {

// BEV raster: 64 x 64 cells of 0.5 m over a 32 m x 32 m window. The ego sits
// at the bottom-center facing "up": world x (forward) spans [0, 32) across
// rows, world y (left) spans (-16, 16] across columns, column 0 on the left.
constexpr int kGridSize = 64;
constexpr double kCellSize = 0.5;
constexpr int kFeatGridSize = 16;
constexpr double kFeatCellSize = 2.0;

enum class NavCommand : uint8_t { kLeft = 0, kStraight = 1, kRight = 2 };
enum class AgentClass : uint8_t { kVehicle = 0, kPedestrian = 1 };
enum class SceneFamily : uint8_t {
  kStraight = 0,
  kCurve = 1,
  kTee = 2,
  kLeadVehicle = 3,
  kCrossingPedestrian = 4
};

const char* to_string(NavCommand c);
const char* to_string(SceneFamily f);

struct EgoStatus {
  double speed = 0.0;  // m/s
  double accel = 0.0;  // m/s^2
  NavCommand command = NavCommand::kStraight;
};

struct AgentState {
  Vec2 pos;
  double heading = 0.0;
  double speed = 0.0;
  double length = 4.0;
  double width = 1.8;
  AgentClass cls = AgentClass::kVehicle;

  Vec2 velocity() const { return Vec2{std::cos(heading), std::sin(heading)} * speed; }
  // Constant-velocity forecast.
  Vec2 position_at(double t) const { return pos + velocity() * t; }
  OrientedBox footprint_at(double t) const { return {position_at(t), heading, length, width}; }
};

struct GridFrame {
  // False when the point lies outside the window.
  static bool world_to_cell(Vec2 p, int& row, int& col);
  static Vec2 cell_center(int row, int col);
  // Continuous feature-grid coordinates (row, col) of a world point; cell
  // centers land on integers. Callers clamp via the sampling op.
  static Vec2 world_to_feature_coords(Vec2 p);
};

struct RasterPlane {
  std::array<uint8_t, kGridSize * kGridSize> cells{};

  uint8_t at(int row, int col) const { return cells[static_cast<size_t>(row) * kGridSize + col]; }
  void set(int row, int col, uint8_t v) { cells[static_cast<size_t>(row) * kGridSize + col] = v; }
  bool test_world(Vec2 p) const;
  int count() const;
  bool operator==(const RasterPlane&) const = default;
};

// Semantic plane order is fixed: road, centerline, vehicle (all dynamic
// agents), walkway.
constexpr int kNumPlanes = 4;
enum PlaneIndex { kPlaneRoad = 0, kPlaneCenterline = 1, kPlaneVehicle = 2, kPlaneWalkway = 3 };

struct RasterStack {
  std::array<RasterPlane, kNumPlanes> planes{};

  RasterPlane& operator[](int i) { return planes[static_cast<size_t>(i)]; }
  const RasterPlane& operator[](int i) const { return planes[static_cast<size_t>(i)]; }
  bool operator==(const RasterStack&) const = default;
};

struct SceneSample {
  RasterStack raster;
  std::vector<AgentState> agents;
  EgoStatus ego;
  Polyline route;                     // commanded centerline, ego frame
  std::vector<Polyline> centerlines;  // all lane centerlines incl. the route
  Trajectory expert;
  bool expert_blocked = false;
  SceneFamily family = SceneFamily::kStraight;
  uint64_t seed = 0;

  bool operator==(const SceneSample& other) const;
};

// A corridor is a centerline with a full width; roads and walkways use it.
struct Corridor {
  Polyline center;
  double width = 3.5;
};

// World-frame description used for generation and closed-loop re-rendering.
// The world frame coincides with the initial ego frame.
struct WorldScene {
  std::vector<Corridor> roads;
  std::vector<Polyline> centerlines;  // includes the route polyline
  std::vector<Corridor> walkways;
  Polyline route;
  NavCommand command = NavCommand::kStraight;
  double cruise_speed = 5.0;
  double start_speed = 5.0;
  double start_accel = 0.0;
  std::vector<AgentState> agents;
  SceneFamily family = SceneFamily::kStraight;
};

struct GenConfig {
  double lane_width = 3.5;
  int min_agents = 0;
  int max_agents = 6;
  // Enabled families; defaults to all five.
  std::vector<SceneFamily> families = {SceneFamily::kStraight, SceneFamily::kCurve,
                                       SceneFamily::kTee, SceneFamily::kLeadVehicle,
                                       SceneFamily::kCrossingPedestrian};
  double cruise_min = 3.5;
  double cruise_max = 6.5;
  int max_resample_attempts = 16;
};

WorldScene generate_world(uint64_t seed, const GenConfig& config);

// Advances world agents to time t and renders raster + vector data in the
// given ego frame. The expert field is left empty.
SceneSample render_scene(const WorldScene& world, const Pose2& ego_pose, double ego_speed,
                         double ego_accel, double world_time);

// Rasterizes a polyline into a plane, marking every cell the line passes
// through (supercover walk). Used for centerlines; exposed for the
// raster/vector consistency check.
void rasterize_polyline(RasterPlane& plane, const Polyline& line);

// Generates a scene, runs the scripted expert, validates feasibility, and
// resamples internally up to config.max_resample_attempts before throwing.
SceneSample generate_scene(uint64_t seed, const GenConfig& config);

}  // namespace bevplan
