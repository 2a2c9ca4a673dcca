#pragma once

#include <array>
#include <cstdint>

#include "bevplan/geometry.hpp"

namespace bevplan {

// Planning horizon: 8 future states at 0.5 s spacing (4 s total).
constexpr int kHorizonSteps = 8;
constexpr double kPlanDt = 0.5;
// Implied speed cap of 30 m/s.
constexpr double kMaxPointSpacing = 15.0;

struct TrajectoryPoint {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
};

struct Trajectory {
  std::array<TrajectoryPoint, kHorizonSteps> points{};

  // Headings by forward difference of consecutive points; the last point
  // copies the previous heading. Near-stationary segments keep the prior
  // heading instead of collapsing to atan2(0, 0).
  static Trajectory from_xy(const std::array<Vec2, kHorizonSteps>& xy);

  Vec2 position(int i) const { return {points[static_cast<size_t>(i)].x, points[static_cast<size_t>(i)].y}; }

  // Throws ContractError when spacing or wrapping invariants are violated.
  void validate() const;

  bool operator==(const Trajectory& other) const;
};

}  // namespace bevplan
