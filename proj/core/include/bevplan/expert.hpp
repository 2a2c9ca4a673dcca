#pragma once

#include "bevplan/scene.hpp"
#include "bevplan/trajectory.hpp"

namespace bevplan {

// Pure-pursuit path tracking with an IDM speed profile. Comfort-bounded:
// |accel| <= 2.3 m/s^2 and curvature kept under the yaw-rate threshold by
// scene construction. All quantities in the frame the route is expressed in.
struct ExpertParams {
  double wheelbase = 2.7;
  double dt = 0.05;
  double accel_max = 1.5;
  double decel_comfort = 2.3;
  double idm_time_gap = 1.2;
  double idm_min_gap = 2.5;  // bumper-to-bumper
  double idm_delta = 4.0;
  double max_steer = 0.6;
  double blocking_horizon = 30.0;  // m ahead along the route
  double ego_half_length = 2.0;
  double ego_half_width = 0.9;
};

struct ExpertResult {
  Trajectory trajectory;
  bool blocked = false;
};

struct ExpertInput {
  const Polyline* route = nullptr;
  const std::vector<AgentState>* agents = nullptr;  // constant-velocity forecasts
  double start_speed = 0.0;
  double cruise_speed = 5.0;
};

ExpertResult scripted_expert(const ExpertInput& input, const ExpertParams& params = {});

}  // namespace bevplan
