#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "bevplan/common.hpp"

namespace bevplan {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double k) const { return {x * k, y * k}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::sqrt(x * x + y * y); }
  Vec2 rotated(double a) const {
    const double c = std::cos(a), s = std::sin(a);
    return {c * x - s * y, s * x + c * y};
  }
};

// Rigid 2D pose; transforms map pose-local coordinates to the parent frame.
struct Pose2 {
  Vec2 pos;
  double heading = 0.0;

  Vec2 to_parent(Vec2 local) const { return pos + local.rotated(heading); }
  Vec2 to_local(Vec2 parent) const { return (parent - pos).rotated(-heading); }
};

using Polyline = std::vector<Vec2>;

double polyline_length(const Polyline& line);

// Distance from a point to a segment.
double point_segment_distance(Vec2 p, Vec2 a, Vec2 b);

// Distance from a point to a polyline (>= 2 points required).
double point_polyline_distance(Vec2 p, const Polyline& line);

// Projects p onto the polyline; returns the arc length at the closest point.
double polyline_project_arclength(Vec2 p, const Polyline& line);

// Point at the given arc length (clamped to the ends).
Vec2 polyline_point_at(const Polyline& line, double s);

// Unit-tangent heading at the given arc length (clamped).
double polyline_heading_at(const Polyline& line, double s);

// Heading of the segment nearest to p.
double polyline_heading_nearest(Vec2 p, const Polyline& line);

// An oriented rectangle (vehicle footprint): center, heading, full extents.
struct OrientedBox {
  Vec2 center;
  double heading = 0.0;
  double length = 0.0;  // extent along heading
  double width = 0.0;

  std::array<Vec2, 4> corners() const;
};

// Separating-axis intersection test for two oriented rectangles.
bool boxes_intersect(const OrientedBox& a, const OrientedBox& b);

// True if p lies inside the box (inclusive of the border).
bool box_contains(const OrientedBox& b, Vec2 p);

}  // namespace bevplan
