#pragma once

// Single-file brute-force Lloyd reference. Mirrors the documented seeding
// procedure (k-means++ over splitmix64/xoshiro256++ draws) with its own RNG
// and distance code so the library implementation is checked end to end.

#include <cstdint>
#include <limits>
#include <vector>

namespace oracle {

class KmRng {
 public:
  explicit KmRng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& v : s_) {
      uint64_t z = (sm += 0x9e3779b97f4a7c15ull);
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
      v = z ^ (z >> 31);
    }
  }
  uint64_t next() {
    auto rotl = [](uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  uint64_t index(uint64_t n) { return next() % n; }

 private:
  uint64_t s_[4];
};

struct KmResult {
  std::vector<std::vector<double>> centers;
  double inertia = 0.0;
  int iterations = 0;
};

inline double km_sqdist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

inline KmResult reference_lloyd(const std::vector<std::vector<double>>& pts, int k, uint64_t seed,
                                int max_iter = 100) {
  const int n = static_cast<int>(pts.size());
  KmRng rng(seed ^ 0xa17c5ull);
  KmResult res;
  res.centers.push_back(pts[rng.index(static_cast<uint64_t>(n))]);
  while (static_cast<int>(res.centers.size()) < k) {
    std::vector<double> d2(static_cast<size_t>(n));
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : res.centers) best = std::min(best, km_sqdist(pts[static_cast<size_t>(i)], c));
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
      chosen = static_cast<int>(rng.index(static_cast<uint64_t>(n)));
    }
    res.centers.push_back(pts[static_cast<size_t>(chosen)]);
  }

  std::vector<int> assign(static_cast<size_t>(n), -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    ++res.iterations;
    bool changed = false;
    res.inertia = 0.0;
    std::vector<int> counts(static_cast<size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = km_sqdist(pts[static_cast<size_t>(i)], res.centers[static_cast<size_t>(c)]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (assign[static_cast<size_t>(i)] != best) changed = true;
      assign[static_cast<size_t>(i)] = best;
      counts[static_cast<size_t>(best)] += 1;
      res.inertia += bd;
    }
    if (!changed && iter > 0) break;
    const size_t dim = pts[0].size();
    std::vector<std::vector<double>> sums(static_cast<size_t>(k), std::vector<double>(dim, 0.0));
    for (int i = 0; i < n; ++i)
      for (size_t d = 0; d < dim; ++d) sums[static_cast<size_t>(assign[static_cast<size_t>(i)])][d] += pts[static_cast<size_t>(i)][d];
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<size_t>(c)] > 0) {
        for (size_t d = 0; d < dim; ++d)
          res.centers[static_cast<size_t>(c)][d] = sums[static_cast<size_t>(c)][d] / counts[static_cast<size_t>(c)];
      } else {
        int far = 0;
        double fd = -1.0;
        for (int i = 0; i < n; ++i) {
          const double d = km_sqdist(pts[static_cast<size_t>(i)], res.centers[static_cast<size_t>(c)]);
          if (d > fd) {
            fd = d;
            far = i;
          }
        }
        res.centers[static_cast<size_t>(c)] = pts[static_cast<size_t>(far)];
      }
    }
  }
  return res;
}

}  // namespace oracle
