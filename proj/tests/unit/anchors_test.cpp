#include <cstdio>
#include <filesystem>
#include <fstream>

#include "bevplan/anchors.hpp"
#include "bevplan/dataset_io.hpp"
#include "bevplan/rng.hpp"
#include "bevplan/scene.hpp"
#include "doctest.h"
#include "oracle/reference_kmeans.hpp"

using namespace bevplan;

namespace {

Trajectory line_traj(double step_x, double step_y) {
  std::array<Vec2, kHorizonSteps> xy{};
  for (int i = 0; i < kHorizonSteps; ++i)
    xy[static_cast<size_t>(i)] = {step_x * (i + 1), step_y * (i + 1)};
  return Trajectory::from_xy(xy);
}

std::vector<Trajectory> synthetic_experts(int n) {
  GenConfig cfg;
  std::vector<Trajectory> out;
  for (int i = 0; i < n; ++i) out.push_back(generate_scene(static_cast<uint64_t>(i), cfg).expert);
  return out;
}

}  // namespace

TEST_CASE("separable duplicated trajectories recover exact centers") {
  std::vector<Trajectory> data;
  const Trajectory a = line_traj(2.0, 0.0);
  const Trajectory b = line_traj(1.0, 0.8);
  for (int i = 0; i < 5; ++i) {
    data.push_back(a);
    data.push_back(b);
  }
  auto vocab = kmeans_fit(data, 2, 3);
  REQUIRE(vocab.k == 2);
  // Each center equals one of the two inputs exactly.
  for (const auto& anchor : vocab.anchors) {
    const bool is_a = std::abs(anchor[0].x - 2.0) < 1e-12;
    for (int i = 0; i < kHorizonSteps; ++i) {
      const Trajectory& ref = is_a ? a : b;
      CHECK(anchor[static_cast<size_t>(i)].x ==
            doctest::Approx(ref.points[static_cast<size_t>(i)].x).epsilon(1e-6));
      CHECK(anchor[static_cast<size_t>(i)].y ==
            doctest::Approx(ref.points[static_cast<size_t>(i)].y).epsilon(1e-6));
    }
  }
  CHECK(vocab.inertia == doctest::Approx(0.0));
}

TEST_CASE("K=1 yields the arithmetic mean") {
  std::vector<Trajectory> data{line_traj(1.0, 0.0), line_traj(3.0, 0.0)};
  auto vocab = kmeans_fit(data, 1, 11);
  for (int i = 0; i < kHorizonSteps; ++i)
    CHECK(vocab.anchors[0][static_cast<size_t>(i)].x == doctest::Approx(2.0 * (i + 1)));
}

TEST_CASE("K above distinct count reduces with a report") {
  std::vector<Trajectory> data{line_traj(1.0, 0.0), line_traj(1.0, 0.0), line_traj(2.0, 0.1)};
  auto vocab = kmeans_fit(data, 5, 1);
  CHECK(vocab.k == 2);
  CHECK(vocab.requested_k == 5);
}

TEST_CASE("inertia matches the single-file reference on 200 experts") {
  auto experts = synthetic_experts(200);
  auto vocab = kmeans_fit(experts, 20, 7);
  std::vector<std::vector<double>> pts;
  for (const auto& t : experts) {
    std::vector<double> v;
    for (const auto& p : t.points) {
      v.push_back(p.x);
      v.push_back(p.y);
    }
    pts.push_back(v);
  }
  auto ref = oracle::reference_lloyd(pts, 20, 7);
  CHECK(vocab.inertia == doctest::Approx(ref.inertia).epsilon(1e-6));
}

TEST_CASE("nearest anchor argmin and tie-break") {
  auto experts = synthetic_experts(50);
  auto vocab = kmeans_fit(experts, 8, 1);
  // Exact anchor lookup.
  for (int c = 0; c < vocab.k; ++c) {
    std::array<Vec2, kHorizonSteps> xy{};
    for (int i = 0; i < kHorizonSteps; ++i) xy[static_cast<size_t>(i)] = vocab.anchors[static_cast<size_t>(c)][static_cast<size_t>(i)];
    CHECK(nearest_anchor(vocab, Trajectory::from_xy(xy)) == c);
  }
  // Random probes match an exhaustive scan.
  Rng rng(5);
  for (int probe = 0; probe < 50; ++probe) {
    std::array<Vec2, kHorizonSteps> xy{};
    for (auto& p : xy) p = {rng.uniform(-5, 25), rng.uniform(-10, 10)};
    Trajectory t = Trajectory::from_xy(xy);
    int best = 0;
    double bd = 1e300;
    for (int c = 0; c < vocab.k; ++c) {
      double d = 0.0;
      for (int i = 0; i < kHorizonSteps; ++i) {
        const double dx = t.points[static_cast<size_t>(i)].x - vocab.anchors[static_cast<size_t>(c)][static_cast<size_t>(i)].x;
        const double dy = t.points[static_cast<size_t>(i)].y - vocab.anchors[static_cast<size_t>(c)][static_cast<size_t>(i)].y;
        d += dx * dx + dy * dy;
      }
      if (d < bd) {
        bd = d;
        best = c;
      }
    }
    CHECK(nearest_anchor(vocab, t) == best);
  }
  // Equidistant tie breaks to the lowest index.
  AnchorVocabulary two;
  two.k = 2;
  two.requested_k = 2;
  two.anchors.resize(2);
  for (int i = 0; i < kHorizonSteps; ++i) {
    two.anchors[0][static_cast<size_t>(i)] = {1.0, 0.0};
    two.anchors[1][static_cast<size_t>(i)] = {-1.0, 0.0};
  }
  std::array<Vec2, kHorizonSteps> mid{};
  CHECK(nearest_anchor(two, Trajectory::from_xy(mid)) == 0);
}

TEST_CASE("vocabulary roundtrip is bitwise") {
  auto vocab = kmeans_fit(synthetic_experts(60), 10, 3);
  const std::string path =
      (std::filesystem::temp_directory_path() / "bevplan_vocab_rt.bin").string();
  save_vocab(vocab, path);
  auto back = load_vocab(path);
  CHECK(back.k == vocab.k);
  CHECK(back.seed == vocab.seed);
  CHECK(back.inertia == vocab.inertia);
  CHECK(back.member_counts == vocab.member_counts);
  for (int c = 0; c < vocab.k; ++c)
    for (int i = 0; i < kHorizonSteps; ++i) {
      CHECK(back.anchors[static_cast<size_t>(c)][static_cast<size_t>(i)].x ==
            vocab.anchors[static_cast<size_t>(c)][static_cast<size_t>(i)].x);
      CHECK(back.anchors[static_cast<size_t>(c)][static_cast<size_t>(i)].y ==
            vocab.anchors[static_cast<size_t>(c)][static_cast<size_t>(i)].y);
    }
  std::remove(path.c_str());
}

TEST_CASE("version bump and horizon mismatch are rejected") {
  auto vocab = kmeans_fit(synthetic_experts(20), 4, 3);
  const std::string path =
      (std::filesystem::temp_directory_path() / "bevplan_vocab_bad.bin").string();
  save_vocab(vocab, path);

  // Bump the version field (offset 4, little-endian u16).
  {
    std::fstream io(path, std::ios::binary | std::ios::in | std::ios::out);
    io.seekp(4);
    char v2 = 2;
    io.write(&v2, 1);
  }
  CHECK_THROWS_WITH_AS(load_vocab(path), doctest::Contains("version"), IoError);

  save_vocab(vocab, path);
  // Corrupt the horizon field (offset 8).
  {
    std::fstream io(path, std::ios::binary | std::ios::in | std::ios::out);
    io.seekp(8);
    char t10 = 10;
    io.write(&t10, 1);
  }
  CHECK_THROWS_WITH_AS(load_vocab(path), doctest::Contains("horizon"), IoError);
  std::remove(path.c_str());
}

TEST_CASE("determinism and fixed point of converged centers") {
  auto experts = synthetic_experts(80);
  auto v1 = kmeans_fit(experts, 6, 9);
  auto v2 = kmeans_fit(experts, 6, 9);
  for (int c = 0; c < v1.k; ++c)
    for (int i = 0; i < kHorizonSteps; ++i) {
      CHECK(v1.anchors[static_cast<size_t>(c)][static_cast<size_t>(i)].x ==
            v2.anchors[static_cast<size_t>(c)][static_cast<size_t>(i)].x);
    }
  CHECK(v1.inertia == v2.inertia);
  // Fixed point: each center equals the mean of its members (recomputed).
  std::vector<std::vector<double>> sums(static_cast<size_t>(v1.k), std::vector<double>(16, 0.0));
  std::vector<int> counts(static_cast<size_t>(v1.k), 0);
  for (const auto& t : experts) {
    const int c = nearest_anchor(v1, t);
    counts[static_cast<size_t>(c)] += 1;
    for (int i = 0; i < kHorizonSteps; ++i) {
      sums[static_cast<size_t>(c)][static_cast<size_t>(2 * i)] += t.points[static_cast<size_t>(i)].x;
      sums[static_cast<size_t>(c)][static_cast<size_t>(2 * i + 1)] += t.points[static_cast<size_t>(i)].y;
    }
  }
  for (int c = 0; c < v1.k; ++c) {
    if (counts[static_cast<size_t>(c)] == 0) continue;
    for (int i = 0; i < kHorizonSteps; ++i) {
      const double mean_x = sums[static_cast<size_t>(c)][static_cast<size_t>(2 * i)] / counts[static_cast<size_t>(c)];
      // Anchors are float-rounded after fitting; compare at float resolution.
      CHECK(std::abs(v1.anchors[static_cast<size_t>(c)][static_cast<size_t>(i)].x - mean_x) <= 1e-5);
    }
  }
}
