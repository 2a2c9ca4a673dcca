#include <cmath>

#include "bevplan/expert.hpp"
#include "bevplan/scene.hpp"
#include "doctest.h"
#include "oracle/geometry_oracle.hpp"

using namespace bevplan;

namespace {

oracle::Poly expert_footprint(const TrajectoryPoint& pt) {
  return oracle::box_corners(pt.x, pt.y, pt.heading, 4.0, 1.8);
}

Polyline straight_route() {
  Polyline route;
  for (int i = 0; i <= 35; ++i) route.push_back({-2.0 + i, 0.0});
  return route;
}

}  // namespace

TEST_CASE("same seed and config give identical scenes") {
  GenConfig cfg;
  for (uint64_t seed : {1ull, 7ull, 991ull}) {
    SceneSample a = generate_scene(seed, cfg);
    SceneSample b = generate_scene(seed, cfg);
    CHECK(a == b);
  }
}

TEST_CASE("straight family with zero agents is collinear with the centerline") {
  GenConfig cfg;
  cfg.families = {SceneFamily::kStraight};
  cfg.min_agents = 0;
  cfg.max_agents = 0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    SceneSample scene = generate_scene(seed, cfg);
    for (const auto& pt : scene.expert.points) CHECK(std::abs(pt.y) <= 1e-6);
  }
}

TEST_CASE("straight route at constant speed advances 2.5 m per step") {
  Polyline route = straight_route();
  ExpertInput input{&route, nullptr, 5.0, 5.0};
  ExpertResult res = scripted_expert(input);
  for (int i = 0; i < kHorizonSteps; ++i) {
    CHECK(res.trajectory.points[static_cast<size_t>(i)].x ==
          doctest::Approx(2.5 * (i + 1)).epsilon(1e-9));
    CHECK(std::abs(res.trajectory.points[static_cast<size_t>(i)].y) <= 1e-9);
  }
  CHECK_FALSE(res.blocked);
}

TEST_CASE("expert stays within 0.25 m of a 90-degree curve") {
  Polyline route;
  for (double x = -2.0; x <= 5.0; x += 0.5) route.push_back({x, 0.0});
  const Vec2 center{5.0, 10.0};
  for (int i = 1; i <= 45; ++i) {
    const double a = -kPi / 2 + (kPi / 2) * (i / 45.0);
    route.push_back(center + Vec2{std::cos(a), std::sin(a)} * 10.0);
  }
  for (double y = 10.5; y <= 20.0; y += 0.5) route.push_back({15.0, y});

  ExpertInput input{&route, nullptr, 4.0, 5.0};
  ExpertResult res = scripted_expert(input);
  oracle::Poly ref;
  for (const Vec2& p : route) ref.push_back({p.x, p.y});
  for (const auto& pt : res.trajectory.points)
    CHECK(oracle::point_polyline_dist(pt.x, pt.y, ref) <= 0.25);
}

TEST_CASE("lead vehicle scenes slow the expert without overlap") {
  GenConfig cfg;
  cfg.families = {SceneFamily::kLeadVehicle};
  int stopped_leads = 0;
  for (uint64_t seed = 0; seed < 30; ++seed) {
    SceneSample scene = generate_scene(seed, cfg);
    const AgentState* lead = nullptr;
    for (const auto& a : scene.agents)
      if (a.pos.y == 0.0 && a.cls == AgentClass::kVehicle) lead = &a;
    REQUIRE(lead != nullptr);
    if (lead->speed != 0.0) continue;
    ++stopped_leads;
    const auto& pts = scene.expert.points;
    const double v_end = std::hypot(pts[7].x - pts[6].x, pts[7].y - pts[6].y) / kPlanDt;
    CHECK(v_end < scene.ego.speed);
    for (int i = 0; i < kHorizonSteps; ++i) {
      const double t = (i + 1) * kPlanDt;
      for (const AgentState& a : scene.agents) {
        const Vec2 ap = a.position_at(t);
        CHECK_FALSE(oracle::convex_polys_intersect(
            expert_footprint(pts[static_cast<size_t>(i)]),
            oracle::box_corners(ap.x, ap.y, a.heading, a.length, a.width)));
      }
    }
  }
  CHECK(stopped_leads > 0);
}

TEST_CASE("blocked route stops with the flag set") {
  Polyline route = straight_route();
  std::vector<AgentState> agents;
  AgentState wall;
  wall.pos = {5.0, 0.0};
  wall.heading = 0.0;
  wall.speed = 0.0;
  agents.push_back(wall);
  ExpertInput input{&route, &agents, 0.0, 5.0};
  ExpertResult res = scripted_expert(input);
  CHECK(res.blocked);
  const auto& pts = res.trajectory.points;
  const double v_end = std::hypot(pts[7].x - pts[6].x, pts[7].y - pts[6].y) / kPlanDt;
  CHECK(v_end == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("empty route is rejected") {
  Polyline route;
  ExpertInput input{&route, nullptr, 3.0, 5.0};
  CHECK_THROWS_AS(scripted_expert(input), ContractError);
}

TEST_CASE("expert validity over 1000 seeds") {
  GenConfig cfg;
  for (uint64_t seed = 0; seed < 1000; ++seed) {
    SceneSample scene = generate_scene(seed, cfg);
    for (int i = 0; i < kHorizonSteps; ++i) {
      const auto& pt = scene.expert.points[static_cast<size_t>(i)];
      CHECK(scene.raster[kPlaneRoad].test_world({pt.x, pt.y}));
      const double t = (i + 1) * kPlanDt;
      for (const AgentState& a : scene.agents) {
        const Vec2 ap = a.position_at(t);
        CHECK_FALSE(oracle::convex_polys_intersect(
            expert_footprint(pt), oracle::box_corners(ap.x, ap.y, a.heading, a.length, a.width)));
      }
    }
    scene.expert.validate();
  }
}

TEST_CASE("rasterizing the route re-marks only centerline cells") {
  GenConfig cfg;
  for (uint64_t seed = 100; seed < 130; ++seed) {
    SceneSample scene = generate_scene(seed, cfg);
    RasterPlane route_plane;
    rasterize_polyline(route_plane, scene.route);
    for (int r = 0; r < kGridSize; ++r)
      for (int c = 0; c < kGridSize; ++c)
        if (route_plane.at(r, c)) CHECK(scene.raster[kPlaneCenterline].at(r, c) != 0);
  }
}

TEST_CASE("agents never start overlapping the ego footprint") {
  GenConfig cfg;
  cfg.min_agents = 3;
  for (uint64_t seed = 0; seed < 50; ++seed) {
    SceneSample scene = generate_scene(seed, cfg);
    const oracle::Poly ego = oracle::box_corners(0.0, 0.0, 0.0, 4.0, 1.8);
    for (const AgentState& a : scene.agents)
      CHECK_FALSE(oracle::convex_polys_intersect(
          ego, oracle::box_corners(a.pos.x, a.pos.y, a.heading, a.length, a.width)));
  }
}

TEST_CASE("grid frame mapping is invertible at cell centers") {
  for (int r = 0; r < kGridSize; r += 7)
    for (int c = 0; c < kGridSize; c += 7) {
      const Vec2 p = GridFrame::cell_center(r, c);
      int rr = 0, cc = 0;
      CHECK(GridFrame::world_to_cell(p, rr, cc));
      CHECK(rr == r);
      CHECK(cc == c);
    }
  int r0 = 0, c0 = 0;
  CHECK(GridFrame::world_to_cell({0.01, 0.0}, r0, c0));
  CHECK(r0 == 0);
  CHECK(c0 == kGridSize / 2);
}
