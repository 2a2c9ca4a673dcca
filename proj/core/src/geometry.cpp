#include "bevplan/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bevplan {

double polyline_length(const Polyline& line) {
  double s = 0.0;
  for (size_t i = 1; i < line.size(); ++i) s += (line[i] - line[i - 1]).norm();
  return s;
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = ab.dot(ab);
  if (len2 <= 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + ab * t)).norm();
}

double point_polyline_distance(Vec2 p, const Polyline& line) {
  if (line.size() < 2) throw ShapeError("point_polyline_distance: polyline needs >= 2 points");
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 1; i < line.size(); ++i)
    best = std::min(best, point_segment_distance(p, line[i - 1], line[i]));
  return best;
}

double polyline_project_arclength(Vec2 p, const Polyline& line) {
  if (line.size() < 2) throw ShapeError("polyline_project_arclength: polyline needs >= 2 points");
  double best = std::numeric_limits<double>::infinity();
  double best_s = 0.0;
  double s0 = 0.0;
  for (size_t i = 1; i < line.size(); ++i) {
    const Vec2 a = line[i - 1], b = line[i];
    const Vec2 ab = b - a;
    const double len = ab.norm();
    double t = 0.0;
    if (len > 0.0) t = std::clamp((p - a).dot(ab) / (len * len), 0.0, 1.0);
    const double d = (p - (a + ab * t)).norm();
    if (d < best) {
      best = d;
      best_s = s0 + t * len;
    }
    s0 += len;
  }
  return best_s;
}

Vec2 polyline_point_at(const Polyline& line, double s) {
  if (line.size() < 2) throw ShapeError("polyline_point_at: polyline needs >= 2 points");
  if (s <= 0.0) return line.front();
  for (size_t i = 1; i < line.size(); ++i) {
    const double len = (line[i] - line[i - 1]).norm();
    if (s <= len && len > 0.0) return line[i - 1] + (line[i] - line[i - 1]) * (s / len);
    s -= len;
  }
  return line.back();
}

double polyline_heading_at(const Polyline& line, double s) {
  if (line.size() < 2) throw ShapeError("polyline_heading_at: polyline needs >= 2 points");
  if (s < 0.0) s = 0.0;
  for (size_t i = 1; i < line.size(); ++i) {
    const Vec2 d = line[i] - line[i - 1];
    const double len = d.norm();
    if ((s <= len || i + 1 == line.size()) && len > 0.0) return std::atan2(d.y, d.x);
    s -= len;
  }
  // Degenerate polyline of coincident points.
  return 0.0;
}

double polyline_heading_nearest(Vec2 p, const Polyline& line) {
  if (line.size() < 2) throw ShapeError("polyline_heading_nearest: polyline needs >= 2 points");
  double best = std::numeric_limits<double>::infinity();
  double heading = 0.0;
  for (size_t i = 1; i < line.size(); ++i) {
    const double d = point_segment_distance(p, line[i - 1], line[i]);
    if (d < best) {
      const Vec2 t = line[i] - line[i - 1];
      if (t.norm() > 0.0) {
        best = d;
        heading = std::atan2(t.y, t.x);
      }
    }
  }
  return heading;
}

std::array<Vec2, 4> OrientedBox::corners() const {
  const Vec2 fwd = Vec2{1.0, 0.0}.rotated(heading) * (length * 0.5);
  const Vec2 left = Vec2{0.0, 1.0}.rotated(heading) * (width * 0.5);
  return {center + fwd + left, center + fwd - left, center - fwd - left, center - fwd + left};
}

namespace {

// Projection overlap of both corner sets onto the given axis.
bool overlap_on_axis(const std::array<Vec2, 4>& a, const std::array<Vec2, 4>& b, Vec2 axis) {
  double amin = std::numeric_limits<double>::infinity(), amax = -amin;
  double bmin = amin, bmax = amax;
  for (const Vec2& p : a) {
    const double v = p.dot(axis);
    amin = std::min(amin, v);
    amax = std::max(amax, v);
  }
  for (const Vec2& p : b) {
    const double v = p.dot(axis);
    bmin = std::min(bmin, v);
    bmax = std::max(bmax, v);
  }
  return amax >= bmin && bmax >= amin;
}

}  // namespace

bool boxes_intersect(const OrientedBox& a, const OrientedBox& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const Vec2 axes[4] = {Vec2{1.0, 0.0}.rotated(a.heading), Vec2{0.0, 1.0}.rotated(a.heading),
                        Vec2{1.0, 0.0}.rotated(b.heading), Vec2{0.0, 1.0}.rotated(b.heading)};
  for (const Vec2& axis : axes)
    if (!overlap_on_axis(ca, cb, axis)) return false;
  return true;
}

bool box_contains(const OrientedBox& b, Vec2 p) {
  const Vec2 local = (p - b.center).rotated(-b.heading);
  return std::abs(local.x) <= b.length * 0.5 && std::abs(local.y) <= b.width * 0.5;
}

}  // namespace bevplan
