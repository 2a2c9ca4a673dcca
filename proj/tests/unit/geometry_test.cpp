#include <cmath>

#include "bevplan/geometry.hpp"
#include "doctest.h"

using namespace bevplan;

TEST_CASE("angle wrapping") {
  CHECK(wrap_angle(0.2) == doctest::Approx(0.2));
  CHECK(wrap_angle(kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(-kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(3 * kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(2 * kPi + 0.1) == doctest::Approx(0.1));
  CHECK(wrap_angle(-2 * kPi - 0.1) == doctest::Approx(-0.1));
}

TEST_CASE("point to polyline distance and projection") {
  Polyline line{{0, 0}, {10, 0}, {10, 10}};
  CHECK(point_polyline_distance({5, 3}, line) == doctest::Approx(3.0));
  CHECK(point_polyline_distance({12, 12}, line) == doctest::Approx(std::sqrt(8.0)));
  CHECK(polyline_project_arclength({5, 3}, line) == doctest::Approx(5.0));
  CHECK(polyline_project_arclength({11, 4}, line) == doctest::Approx(14.0));
  CHECK(polyline_length(line) == doctest::Approx(20.0));
}

TEST_CASE("polyline point and heading lookup") {
  Polyline line{{0, 0}, {4, 0}, {4, 4}};
  Vec2 p = polyline_point_at(line, 6.0);
  CHECK(p.x == doctest::Approx(4.0));
  CHECK(p.y == doctest::Approx(2.0));
  CHECK(polyline_heading_at(line, 1.0) == doctest::Approx(0.0));
  CHECK(polyline_heading_at(line, 6.0) == doctest::Approx(kPi / 2));
  CHECK(polyline_heading_nearest({4.2, 3.0}, line) == doctest::Approx(kPi / 2));
}

TEST_CASE("oriented box intersection") {
  OrientedBox ego{{0, 0}, 0.0, 4.0, 1.8};
  OrientedBox other{{3.0, 0}, 0.0, 4.0, 1.8};
  CHECK(boxes_intersect(ego, other));  // 3 m gap < combined half-lengths
  other.center = {4.5, 0};
  CHECK_FALSE(boxes_intersect(ego, other));
  // Rotated near-miss: diagonal box just clipping the corner.
  OrientedBox diag{{2.5, 1.5}, kPi / 4, 4.0, 1.8};
  CHECK(boxes_intersect(ego, diag));
  diag.center = {4.0, 3.2};
  CHECK_FALSE(boxes_intersect(ego, diag));
}

TEST_CASE("box containment") {
  OrientedBox b{{1, 1}, kPi / 2, 4.0, 2.0};
  CHECK(box_contains(b, {1, 2.9}));
  CHECK(box_contains(b, {1.9, 1}));
  CHECK_FALSE(box_contains(b, {2.1, 1}));
}

TEST_CASE("pose transforms roundtrip") {
  Pose2 pose{{3, -2}, 0.7};
  Vec2 local{1.5, 0.5};
  Vec2 back = pose.to_local(pose.to_parent(local));
  CHECK(back.x == doctest::Approx(local.x));
  CHECK(back.y == doctest::Approx(local.y));
}
