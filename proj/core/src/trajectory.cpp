#include "bevplan/trajectory.hpp"

#include <cmath>
#include <string>

namespace bevplan {

Trajectory Trajectory::from_xy(const std::array<Vec2, kHorizonSteps>& xy) {
  Trajectory t;
  double prev_heading = 0.0;
  for (int i = 0; i < kHorizonSteps; ++i) {
    const Vec2 p = xy[static_cast<size_t>(i)];
    double heading = prev_heading;
    if (i + 1 < kHorizonSteps) {
      const Vec2 d = xy[static_cast<size_t>(i + 1)] - p;
      if (d.norm() > 1e-9) heading = std::atan2(d.y, d.x);
    }
    t.points[static_cast<size_t>(i)] = {p.x, p.y, wrap_angle(heading)};
    prev_heading = heading;
  }
  return t;
}

void Trajectory::validate() const {
  Vec2 prev{0.0, 0.0};  // trajectories are expressed in the ego frame
  for (int i = 0; i < kHorizonSteps; ++i) {
    const auto& pt = points[static_cast<size_t>(i)];
    const Vec2 p{pt.x, pt.y};
    if ((p - prev).norm() > kMaxPointSpacing)
      throw ContractError("trajectory: point spacing exceeds " +
                          std::to_string(kMaxPointSpacing) + " m at step " + std::to_string(i));
    if (!(pt.heading > -kPi - 1e-12 && pt.heading <= kPi + 1e-12) ||
        pt.heading <= -kPi)
      throw ContractError("trajectory: heading not wrapped to (-pi, pi] at step " +
                          std::to_string(i));
    prev = p;
  }
}

bool Trajectory::operator==(const Trajectory& other) const {
  for (size_t i = 0; i < points.size(); ++i)
    if (points[i].x != other.points[i].x || points[i].y != other.points[i].y ||
        points[i].heading != other.points[i].heading)
      return false;
  return true;
}

}  // namespace bevplan
