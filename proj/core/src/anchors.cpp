#include "bevplan/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

#include "bevplan/dataset_io.hpp"
#include "bevplan/rng.hpp"

namespace bevplan {

namespace {

constexpr int kDim = kHorizonSteps * 2;
constexpr char kMagic[4] = {'A', 'N', 'C', 'H'};
constexpr uint16_t kVersion = 1;

std::vector<double> flatten(const Trajectory& t) {
  std::vector<double> v(kDim);
  for (int i = 0; i < kHorizonSteps; ++i) {
    v[static_cast<size_t>(2 * i)] = t.points[static_cast<size_t>(i)].x;
    v[static_cast<size_t>(2 * i + 1)] = t.points[static_cast<size_t>(i)].y;
  }
  return v;
}

double sq_dist(const double* a, const double* b) {
  double s = 0.0;
  for (int i = 0; i < kDim; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

std::vector<double> AnchorVocabulary::flattened(int index) const {
  std::vector<double> v(kDim);
  const auto& a = anchors[static_cast<size_t>(index)];
  for (int i = 0; i < kHorizonSteps; ++i) {
    v[static_cast<size_t>(2 * i)] = a[static_cast<size_t>(i)].x;
    v[static_cast<size_t>(2 * i + 1)] = a[static_cast<size_t>(i)].y;
  }
  return v;
}

AnchorVocabulary kmeans_fit(const std::vector<Trajectory>& trajectories, int k, uint64_t seed,
                            int max_iter) {
  if (trajectories.empty()) throw ContractError("kmeans_fit: at least one trajectory required");
  if (k < 1) throw ConfigError("kmeans_fit: K must be >= 1");
  const int n = static_cast<int>(trajectories.size());

  std::vector<std::vector<double>> points(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) points[static_cast<size_t>(i)] = flatten(trajectories[static_cast<size_t>(i)]);

  const int requested_k = k;
  {
    std::set<std::vector<double>> distinct(points.begin(), points.end());
    if (k > static_cast<int>(distinct.size())) k = static_cast<int>(distinct.size());
  }

  Rng rng(seed ^ 0xa17c5ull);
  // k-means++ seeding: first center uniform, then proportional to squared
  // distance from the chosen set.
  std::vector<std::vector<double>> centers;
  centers.push_back(points[rng.uniform_index(static_cast<uint64_t>(n))]);
  std::vector<double> d2(static_cast<size_t>(n));
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, sq_dist(points[static_cast<size_t>(i)].data(), c.data()));
      d2[static_cast<size_t>(i)] = best;
      total += best;
    }
    int chosen = n - 1;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += d2[static_cast<size_t>(i)];
        if (u < acc) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(n)));
    }
    centers.push_back(points[static_cast<size_t>(chosen)]);
  }

  std::vector<int> assign(static_cast<size_t>(n), -1);
  std::vector<uint32_t> counts(static_cast<size_t>(k), 0);
  double inertia = 0.0;
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    inertia = 0.0;
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = sq_dist(points[static_cast<size_t>(i)].data(), centers[static_cast<size_t>(c)].data());
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[static_cast<size_t>(i)] != best) changed = true;
      assign[static_cast<size_t>(i)] = best;
      counts[static_cast<size_t>(best)] += 1;
      inertia += best_d;
    }
    if (!changed && iter > 0) break;

    std::vector<std::vector<double>> sums(static_cast<size_t>(k), std::vector<double>(kDim, 0.0));
    for (int i = 0; i < n; ++i)
      for (int d = 0; d < kDim; ++d)
        sums[static_cast<size_t>(assign[static_cast<size_t>(i)])][static_cast<size_t>(d)] +=
            points[static_cast<size_t>(i)][static_cast<size_t>(d)];
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<size_t>(c)] > 0) {
        for (int d = 0; d < kDim; ++d)
          centers[static_cast<size_t>(c)][static_cast<size_t>(d)] =
              sums[static_cast<size_t>(c)][static_cast<size_t>(d)] / counts[static_cast<size_t>(c)];
      } else {
        // Reseed an empty cluster to the point farthest from its old center.
        int far = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          const double d = sq_dist(points[static_cast<size_t>(i)].data(), centers[static_cast<size_t>(c)].data());
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centers[static_cast<size_t>(c)] = points[static_cast<size_t>(far)];
      }
    }
  }

  AnchorVocabulary vocab;
  vocab.k = k;
  vocab.requested_k = requested_k;
  vocab.seed = seed;
  vocab.inertia = inertia;
  vocab.member_counts = counts;
  vocab.anchors.resize(static_cast<size_t>(k));
  for (int c = 0; c < k; ++c)
    for (int i = 0; i < kHorizonSteps; ++i)
      vocab.anchors[static_cast<size_t>(c)][static_cast<size_t>(i)] = {
          static_cast<double>(static_cast<float>(centers[static_cast<size_t>(c)][static_cast<size_t>(2 * i)])),
          static_cast<double>(static_cast<float>(centers[static_cast<size_t>(c)][static_cast<size_t>(2 * i + 1)]))};
  return vocab;
}

int nearest_anchor(const AnchorVocabulary& vocab, const Trajectory& trajectory) {
  if (vocab.k < 1) throw ContractError("nearest_anchor: vocabulary is empty");
  const std::vector<double> probe = flatten(trajectory);
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int c = 0; c < vocab.k; ++c) {
    const double d = sq_dist(probe.data(), vocab.flattened(c).data());
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

void save_vocab(const AnchorVocabulary& vocab, const std::string& path) {
  ByteWriter w;
  w.bytes(reinterpret_cast<const uint8_t*>(kMagic), 4);
  w.u16(kVersion);
  w.u16(static_cast<uint16_t>(vocab.k));
  w.u16(kHorizonSteps);
  w.u64(vocab.seed);
  w.f64(vocab.inertia);
  for (int c = 0; c < vocab.k; ++c) w.u32(vocab.member_counts[static_cast<size_t>(c)]);
  ByteWriter payload;
  for (int c = 0; c < vocab.k; ++c)
    for (const Vec2& p : vocab.anchors[static_cast<size_t>(c)]) {
      payload.f32(static_cast<float>(p.x));
      payload.f32(static_cast<float>(p.y));
    }
  w.bytes(payload.buffer().data(), payload.buffer().size());
  w.u32(crc32(payload.buffer().data(), payload.buffer().size()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path);
  out.write(reinterpret_cast<const char*>(w.buffer().data()),
            static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("write failed: " + path);
}

AnchorVocabulary load_vocab(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::vector<uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  ByteReader r(bytes.data(), bytes.size());
  char magic[4];
  r.bytes(reinterpret_cast<uint8_t*>(magic), 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw IoError("bad magic in " + path + " (expected ANCH)", 0);
  const uint16_t version = r.u16();
  if (version != kVersion)
    throw IoError("unsupported vocabulary version " + std::to_string(version) + " in " + path, 4);
  AnchorVocabulary vocab;
  vocab.k = r.u16();
  vocab.requested_k = vocab.k;
  const uint16_t t_f = r.u16();
  if (t_f != kHorizonSteps)
    throw IoError("vocabulary horizon " + std::to_string(t_f) + " does not match configured " +
                  std::to_string(kHorizonSteps));
  vocab.seed = r.u64();
  vocab.inertia = r.f64();
  vocab.member_counts.resize(static_cast<size_t>(vocab.k));
  for (auto& c : vocab.member_counts) c = r.u32();
  const size_t payload_len = static_cast<size_t>(vocab.k) * kHorizonSteps * 2 * 4;
  if (r.remaining() < payload_len + 4)
    throw IoError("truncated vocabulary payload in " + path, static_cast<long long>(r.offset()));
  const size_t payload_off = r.offset();
  vocab.anchors.resize(static_cast<size_t>(vocab.k));
  for (int c = 0; c < vocab.k; ++c)
    for (auto& p : vocab.anchors[static_cast<size_t>(c)]) {
      p.x = static_cast<double>(r.f32());
      p.y = static_cast<double>(r.f32());
    }
  const uint32_t expected = r.u32();
  const uint32_t actual = crc32(bytes.data() + payload_off, payload_len);
  if (expected != actual)
    throw IoError("vocabulary checksum mismatch in " + path, static_cast<long long>(payload_off));
  return vocab;
}

}  // namespace bevplan
