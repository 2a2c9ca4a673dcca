#include "bevplan/expert.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bevplan {

namespace {

struct BlockingGap {
  double gap = std::numeric_limits<double>::infinity();
  double lead_speed = 0.0;
};

// Nearest agent occupying the route corridor ahead at sim time t, measured
// bumper to bumper along the route. Pedestrians get a widened lateral
// threshold so braking starts before they enter the lane.
BlockingGap nearest_blocking(const std::vector<AgentState>& agents, const Polyline& route,
                             double s_ego, double t, const ExpertParams& p) {
  BlockingGap best;
  for (const AgentState& a : agents) {
    const Vec2 pos = a.position_at(t);
    const double lateral = point_polyline_distance(pos, route);
    const double caution = a.cls == AgentClass::kPedestrian ? 1.6 : 0.3;
    if (lateral > a.width / 2.0 + p.ego_half_width + caution) continue;
    const double s_a = polyline_project_arclength(pos, route);
    if (s_a <= s_ego) continue;
    if (s_a - s_ego > p.blocking_horizon) continue;
    const double gap = s_a - s_ego - p.ego_half_length - a.length / 2.0;
    if (gap < best.gap) {
      const double tangent = polyline_heading_at(route, s_a);
      best.gap = gap;
      best.lead_speed = std::max(0.0, a.velocity().dot({std::cos(tangent), std::sin(tangent)}));
    }
  }
  return best;
}

// Menger curvature of the route around arc length s.
double route_curvature(const Polyline& route, double s) {
  const Vec2 a = polyline_point_at(route, s - 1.0);
  const Vec2 b = polyline_point_at(route, s);
  const Vec2 c = polyline_point_at(route, s + 1.0);
  const double ab = (b - a).norm(), bc = (c - b).norm(), ca = (c - a).norm();
  if (ab < 1e-6 || bc < 1e-6 || ca < 1e-6) return 0.0;
  return 2.0 * std::abs((b - a).cross(c - b)) / (ab * bc * ca);
}

// Speed limit from upcoming curvature: lateral comfort and yaw-rate margin.
double curve_speed_limit(const Polyline& route, double s_ego, double cruise) {
  double limit = cruise;
  const double total = polyline_length(route);
  for (double ds = 0.0; ds <= 12.0; ds += 1.0) {
    const double s = std::min(s_ego + ds, total);
    const double kappa = route_curvature(route, s);
    if (kappa < 1e-4) continue;
    const double radius = 1.0 / kappa;
    const double v_lat = std::sqrt(2.0 * radius);       // a_lat <= 2.0
    const double v_yaw = 0.85 * 0.95 * radius;          // yaw rate margin
    limit = std::min({limit, v_lat, v_yaw});
  }
  return std::max(limit, 0.5);
}

}  // namespace

ExpertResult scripted_expert(const ExpertInput& input, const ExpertParams& p) {
  if (input.route == nullptr || input.route->size() < 2)
    throw ContractError("scripted_expert: route polyline is empty");
  const Polyline& route = *input.route;
  static const std::vector<AgentState> kNoAgents;
  const std::vector<AgentState>& agents = input.agents ? *input.agents : kNoAgents;

  double x = 0.0, y = 0.0, heading = 0.0;
  double v = std::max(0.0, input.start_speed);

  std::array<Vec2, kHorizonSteps> xy{};
  std::array<double, kHorizonSteps> headings{};
  const int steps_per_point = static_cast<int>(std::round(kPlanDt / p.dt));
  double final_gap = std::numeric_limits<double>::infinity();

  for (int step = 0; step < kHorizonSteps * steps_per_point; ++step) {
    const double t = step * p.dt;
    const double s_ego = polyline_project_arclength({x, y}, route);

    // Pure pursuit steering toward the lookahead point.
    const double lookahead = std::clamp(0.5 + 0.4 * v, 1.5, 4.0);
    const Vec2 target = polyline_point_at(route, s_ego + lookahead);
    const double alpha = wrap_angle(std::atan2(target.y - y, target.x - x) - heading);
    const double kappa_cmd = 2.0 * std::sin(alpha) / lookahead;
    const double steer_limit =
        std::min(p.max_steer, std::atan(0.95 * p.wheelbase / std::max(v, 0.5)));
    const double steer = std::clamp(std::atan(p.wheelbase * kappa_cmd), -steer_limit, steer_limit);

    // IDM longitudinal control against the nearest blocking agent.
    const double v0 = curve_speed_limit(route, s_ego, input.cruise_speed);
    const BlockingGap blocking = nearest_blocking(agents, route, s_ego, t, p);
    double accel = p.accel_max * (1.0 - std::pow(v / v0, p.idm_delta));
    if (std::isfinite(blocking.gap)) {
      const double gap = std::max(blocking.gap, 0.05);
      const double dv = v - blocking.lead_speed;
      const double s_star = p.idm_min_gap + std::max(0.0, v * p.idm_time_gap +
                                                              v * dv / (2.0 * std::sqrt(p.accel_max *
                                                                                        p.decel_comfort)));
      accel -= p.accel_max * (s_star / gap) * (s_star / gap);
    }
    accel = std::clamp(accel, -p.decel_comfort, p.accel_max);

    x += v * std::cos(heading) * p.dt;
    y += v * std::sin(heading) * p.dt;
    heading = wrap_angle(heading + v / p.wheelbase * std::tan(steer) * p.dt);
    v = std::max(0.0, v + accel * p.dt);

    if ((step + 1) % steps_per_point == 0) {
      const int i = (step + 1) / steps_per_point - 1;
      xy[static_cast<size_t>(i)] = {x, y};
      headings[static_cast<size_t>(i)] = heading;
    }
    if (step + 1 == kHorizonSteps * steps_per_point) final_gap = blocking.gap;
  }

  ExpertResult result;
  for (int i = 0; i < kHorizonSteps; ++i)
    result.trajectory.points[static_cast<size_t>(i)] = {xy[static_cast<size_t>(i)].x,
                                                        xy[static_cast<size_t>(i)].y,
                                                        wrap_angle(headings[static_cast<size_t>(i)])};
  // Blocked: ends standing with the gap closed down to the standstill buffer.
  result.blocked = v <= 0.05 && final_gap <= p.idm_min_gap + 2.0;
  return result;
}

}  // namespace bevplan
