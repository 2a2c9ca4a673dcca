#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bevplan/trajectory.hpp"

namespace bevplan {

// Offline-clustered trajectory vocabulary: K anchors of 8 (x, y) points in
// the ego frame. Anchor values are kept float-representable so the ANCH file
// payload (32-bit) roundtrips bitwise.
struct AnchorVocabulary {
  int k = 0;
  int requested_k = 0;  // differs from k when the input had fewer distinct trajectories
  std::vector<std::array<Vec2, kHorizonSteps>> anchors;
  double inertia = 0.0;
  std::vector<uint32_t> member_counts;
  uint64_t seed = 0;

  // Flattened 16-vector of one anchor, order (x0, y0, x1, y1, ...).
  std::vector<double> flattened(int index) const;
};

// Lloyd's algorithm with k-means++ initialization over flattened expert
// trajectories. Empty clusters are reseeded to the point farthest from the
// cluster's previous center. Deterministic in (data, K, seed).
AnchorVocabulary kmeans_fit(const std::vector<Trajectory>& trajectories, int k, uint64_t seed,
                            int max_iter = 100);

// Argmin of squared Euclidean distance over the flattened representation;
// ties break toward the lowest index.
int nearest_anchor(const AnchorVocabulary& vocab, const Trajectory& trajectory);

void save_vocab(const AnchorVocabulary& vocab, const std::string& path);
AnchorVocabulary load_vocab(const std::string& path);

}  // namespace bevplan
