#pragma once

// Independent geometry routines for cross-checking the library: written
// against raw coordinate pairs, sharing no code with bevplan::geometry.

#include <array>
#include <cmath>
#include <vector>

namespace oracle {

using Pt = std::array<double, 2>;
using Poly = std::vector<Pt>;

inline Poly box_corners(double cx, double cy, double heading, double length, double width) {
  const double c = std::cos(heading), s = std::sin(heading);
  const double hl = length / 2.0, hw = width / 2.0;
  Poly out;
  const double local[4][2] = {{hl, hw}, {hl, -hw}, {-hl, -hw}, {-hl, hw}};
  for (auto& l : local) out.push_back({cx + c * l[0] - s * l[1], cy + s * l[0] + c * l[1]});
  return out;
}

// Separating-axis test over every edge normal of both convex polygons.
inline bool convex_polys_intersect(const Poly& a, const Poly& b) {
  auto axes_separate = [](const Poly& p, const Poly& q) {
    const size_t n = p.size();
    for (size_t i = 0; i < n; ++i) {
      const Pt& e0 = p[i];
      const Pt& e1 = p[(i + 1) % n];
      // outward normal of edge e0->e1
      const double nx = -(e1[1] - e0[1]);
      const double ny = e1[0] - e0[0];
      double pmin = 1e300, pmax = -1e300, qmin = 1e300, qmax = -1e300;
      for (const Pt& v : p) {
        const double d = v[0] * nx + v[1] * ny;
        pmin = std::min(pmin, d);
        pmax = std::max(pmax, d);
      }
      for (const Pt& v : q) {
        const double d = v[0] * nx + v[1] * ny;
        qmin = std::min(qmin, d);
        qmax = std::max(qmax, d);
      }
      if (pmax < qmin || qmax < pmin) return true;  // separated on this axis
    }
    return false;
  };
  return !axes_separate(a, b) && !axes_separate(b, a);
}

inline double point_seg_dist(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = ((px - ax) * dx + (py - ay) * dy) / len2;
  t = std::max(0.0, std::min(1.0, t));
  const double qx = ax + t * dx, qy = ay + t * dy;
  return std::sqrt((px - qx) * (px - qx) + (py - qy) * (py - qy));
}

inline double point_polyline_dist(double px, double py, const Poly& line) {
  double best = 1e300;
  for (size_t i = 1; i < line.size(); ++i)
    best = std::min(best, point_seg_dist(px, py, line[i - 1][0], line[i - 1][1], line[i][0],
                                         line[i][1]));
  return best;
}

}  // namespace oracle
