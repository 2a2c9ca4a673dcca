#pragma once

// Straight-line multi-head attention reference, kept independent of the
// library's tensor engine: plain loops over std::vector<double>.

#include <cmath>
#include <vector>

namespace oracle {

struct RefMat {
  int rows = 0, cols = 0;
  std::vector<double> v;
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
};

inline RefMat ref_matmul(const RefMat& a, const RefMat& b) {
  RefMat c{a.rows, b.cols, std::vector<double>(static_cast<size_t>(a.rows) * b.cols, 0.0)};
  for (int i = 0; i < a.rows; ++i)
    for (int k = 0; k < a.cols; ++k)
      for (int j = 0; j < b.cols; ++j) c.at(i, j) += a.at(i, k) * b.at(k, j);
  return c;
}

// query [nq x d], kv [nkv x d], weights all [d x d], no biases.
inline RefMat ref_multihead_attention(const RefMat& query, const RefMat& kv, const RefMat& wq,
                                      const RefMat& wk, const RefMat& wv, const RefMat& wo,
                                      int heads) {
  const int d = wq.cols;
  const int dh = d / heads;
  const RefMat q = ref_matmul(query, wq);
  const RefMat k = ref_matmul(kv, wk);
  const RefMat v = ref_matmul(kv, wv);
  RefMat concat{query.rows, d, std::vector<double>(static_cast<size_t>(query.rows) * d, 0.0)};
  for (int h = 0; h < heads; ++h) {
    for (int i = 0; i < query.rows; ++i) {
      // scores over all kv rows for this query row and head
      std::vector<double> scores(static_cast<size_t>(kv.rows));
      for (int j = 0; j < kv.rows; ++j) {
        double s = 0.0;
        for (int c = 0; c < dh; ++c) s += q.at(i, h * dh + c) * k.at(j, h * dh + c);
        scores[static_cast<size_t>(j)] = s / std::sqrt(static_cast<double>(dh));
      }
      double mx = scores[0];
      for (double s : scores) mx = std::max(mx, s);
      double z = 0.0;
      for (double& s : scores) {
        s = std::exp(s - mx);
        z += s;
      }
      for (double& s : scores) s /= z;
      for (int c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (int j = 0; j < kv.rows; ++j) acc += scores[static_cast<size_t>(j)] * v.at(j, h * dh + c);
        concat.at(i, h * dh + c) = acc;
      }
    }
  }
  return ref_matmul(concat, wo);
}

}  // namespace oracle
