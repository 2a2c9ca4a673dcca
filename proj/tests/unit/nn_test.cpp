#include <algorithm>
#include <cmath>
#include <vector>

#include "bevplan/nn.hpp"
#include "bevplan/rng.hpp"
#include "doctest.h"
#include "oracle/reference_attention.hpp"

using namespace bevplan;

namespace {

std::vector<double> random_vec(size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return v;
}

}  // namespace

TEST_CASE("positional encoding of zero coordinate") {
  Tensor coords = Tensor::from_data({1, 1}, {0.0});
  Tensor enc = nn::sinusoidal_positional_encoding(coords, 8);
  for (int j = 0; j < 4; ++j) {
    CHECK(enc.data()[static_cast<size_t>(2 * j)] == doctest::Approx(0.0));
    CHECK(enc.data()[static_cast<size_t>(2 * j + 1)] == doctest::Approx(1.0));
  }
}

TEST_CASE("positional encoding injective on a 0.1 grid of [-32, 32]") {
  std::vector<double> grid;
  for (int i = -320; i <= 320; ++i) grid.push_back(i * 0.1);
  Tensor coords = Tensor::from_data({static_cast<int>(grid.size()), 1}, grid);
  Tensor enc = nn::sinusoidal_positional_encoding(coords, 8);
  const int n = static_cast<int>(grid.size());
  double min_sep = 1e18;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double d = 0.0;
      for (int k = 0; k < 8; ++k)
        d = std::max(d, std::abs(enc.data()[static_cast<size_t>(i) * 8 + k] -
                                 enc.data()[static_cast<size_t>(j) * 8 + k]));
      min_sep = std::min(min_sep, d);
    }
  CHECK(min_sep > 1e-9);
}

TEST_CASE("positional encoding deterministic and dimension-checked") {
  Rng rng(5);
  Tensor coords = Tensor::from_data({3, 2}, random_vec(6, rng, 20.0));
  Tensor a = nn::sinusoidal_positional_encoding(coords, 16);
  Tensor b = nn::sinusoidal_positional_encoding(coords, 16);
  for (size_t i = 0; i < a.data().size(); ++i) CHECK(a.data()[i] == b.data()[i]);
  CHECK_THROWS_AS(nn::sinusoidal_positional_encoding(coords, 10), ConfigError);
}

TEST_CASE("attention with one key-value pair ignores the query") {
  Rng rng(9);
  ParameterSet ps(Precision::f64);
  auto attn = nn::MultiheadCrossAttention::create(ps, "a", 8, 2, rng);
  Tensor kv = Tensor::from_data({1, 8}, random_vec(8, rng));
  Tensor q1 = Tensor::from_data({1, 8}, random_vec(8, rng, 3.0));
  Tensor q2 = Tensor::from_data({1, 8}, random_vec(8, rng, 3.0));
  Tensor o1 = attn(q1, kv);
  Tensor o2 = attn(q2, kv);
  // Softmax over a singleton is 1, so output = (kv Wv) Wo for every query.
  Tensor expected = ops::matmul(ops::matmul(kv, ps.get("a.wv")), ps.get("a.wo"));
  for (size_t i = 0; i < 8; ++i) {
    CHECK(o1.data()[i] == doctest::Approx(expected.data()[i]).epsilon(1e-12));
    CHECK(o2.data()[i] == doctest::Approx(expected.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("attention invariant under joint key-value permutation") {
  Rng rng(17);
  ParameterSet ps(Precision::f64);
  auto attn = nn::MultiheadCrossAttention::create(ps, "a", 8, 4, rng);
  Tensor q = Tensor::from_data({3, 8}, random_vec(24, rng));
  std::vector<double> kv_data = random_vec(40, rng);
  Tensor kv = Tensor::from_data({5, 8}, kv_data);
  // permutation (4,2,0,3,1) applied to kv rows
  const int perm[5] = {4, 2, 0, 3, 1};
  std::vector<double> kv_perm(40);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 8; ++j)
      kv_perm[static_cast<size_t>(i) * 8 + j] = kv_data[static_cast<size_t>(perm[i]) * 8 + j];
  Tensor o1 = attn(q, kv);
  Tensor o2 = attn(q, Tensor::from_data({5, 8}, kv_perm));
  for (size_t i = 0; i < o1.data().size(); ++i)
    CHECK(o1.data()[i] == doctest::Approx(o2.data()[i]).epsilon(1e-12));
}

TEST_CASE("attention matches straight-line reference") {
  Rng rng(123);
  ParameterSet ps(Precision::f64);
  auto attn = nn::MultiheadCrossAttention::create(ps, "a", 8, 2, rng);
  Tensor q = Tensor::from_data({2, 8}, random_vec(16, rng));
  Tensor kv = Tensor::from_data({3, 8}, random_vec(24, rng));
  Tensor out = attn(q, kv);

  auto to_ref = [](const Tensor& t) {
    return oracle::RefMat{t.dim(0), t.dim(1), t.data()};
  };
  oracle::RefMat ref = oracle::ref_multihead_attention(
      to_ref(q), to_ref(kv), to_ref(ps.get("a.wq")), to_ref(ps.get("a.wk")),
      to_ref(ps.get("a.wv")), to_ref(ps.get("a.wo")), 2);
  for (size_t i = 0; i < out.data().size(); ++i)
    CHECK(std::abs(out.data()[i] - ref.v[i]) <= 1e-6);
}

TEST_CASE("attention rejects empty context") {
  Rng rng(3);
  ParameterSet ps(Precision::f64);
  auto attn = nn::MultiheadCrossAttention::create(ps, "a", 8, 2, rng);
  Tensor q = Tensor::from_data({1, 8}, random_vec(8, rng));
  CHECK_THROWS_WITH_AS(attn(q, Tensor{}), doctest::Contains("empty key-value"), ContractError);
}

TEST_CASE("conv3x3 shapes and zero path") {
  Rng rng(31);
  ParameterSet ps(Precision::f64);
  auto c1 = nn::Conv3x3::create(ps, "c1", 2, 4, 2, rng);
  Tensor grid = Tensor::from_data({8, 8, 2}, random_vec(128, rng));
  Tensor out = c1(grid);
  CHECK(out.shape() == Shape{4, 4, 4});

  auto c0 = nn::Conv3x3::create(ps, "c0", 2, 4, 1, rng, Init::zero());
  Tensor z = c0(grid);
  CHECK(z.shape() == Shape{8, 8, 4});
  for (double v : z.data()) CHECK(v == 0.0);
}

TEST_CASE("conv3x3 matches direct convolution") {
  Rng rng(77);
  ParameterSet ps(Precision::f64);
  auto conv = nn::Conv3x3::create(ps, "c", 3, 2, 1, rng);
  Tensor grid = Tensor::from_data({5, 6, 3}, random_vec(90, rng));
  Tensor out = conv(grid);
  const auto& w = ps.get("c.w").data();  // [9*cin x cout]
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 6; ++c)
      for (int o = 0; o < 2; ++o) {
        double acc = 0.0;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= 5 || cc < 0 || cc >= 6) continue;
            for (int ch = 0; ch < 3; ++ch) {
              const int tap = (dr + 1) * 3 + (dc + 1);
              acc += grid.data()[(static_cast<size_t>(rr) * 6 + cc) * 3 + ch] *
                     w[static_cast<size_t>(tap * 3 + ch) * 2 + o];
            }
          }
        CHECK(out.data()[(static_cast<size_t>(r) * 6 + c) * 2 + o] == doctest::Approx(acc));
      }
}

TEST_CASE("grad_check on a linear layer is nearly exact") {
  Rng rng(8);
  ParameterSet ps(Precision::f64);
  auto lin = nn::Linear::create(ps, "lin", 4, 3, rng);
  Tensor x = Tensor::from_data({2, 4}, random_vec(8, rng));
  Tensor target = Tensor::from_data({2, 3}, random_vec(6, rng));
  auto fragment = [&]() {
    Tensor err = ops::sub(lin(x), target);
    return ops::sum_all(ops::mul(err, err));
  };
  auto report = nn::grad_check(fragment, ps, 1e-6);
  CHECK(report.passed());
  CHECK(report.max_rel_err() <= 1e-6);
}

TEST_CASE("grad_check excludes frozen parameters") {
  Rng rng(8);
  ParameterSet ps(Precision::f64);
  auto lin = nn::Linear::create(ps, "lin", 4, 3, rng);
  Tensor frozen = ps.create("frozen", {5}, Init::xavier(), rng, /*requires_grad=*/false);
  Tensor x = Tensor::from_data({2, 4}, random_vec(8, rng));
  auto fragment = [&]() { return ops::sum_all(lin(x)); };
  auto report = nn::grad_check(fragment, ps, 1e-4);
  for (const auto& e : report.entries) CHECK(e.name != "frozen");
  CHECK(report.entries.size() == 2);  // lin.w, lin.b
}

TEST_CASE("grad_check through attention block") {
  Rng rng(21);
  ParameterSet ps(Precision::f64);
  auto block = nn::CrossAttnBlock::create(ps, "blk", 8, 2, rng);
  Tensor x = Tensor::from_data({3, 8}, random_vec(24, rng));
  Tensor kv = Tensor::from_data({4, 8}, random_vec(32, rng));
  Tensor probe = Tensor::from_data({3, 8}, random_vec(24, rng));
  auto fragment = [&]() { return ops::sum_all(ops::mul(block(x, kv), probe)); };
  auto report = nn::grad_check(fragment, ps, 1e-4);
  CHECK(report.passed());
}

TEST_CASE("parameter names are unique and iteration is lexicographic") {
  Rng rng(1);
  ParameterSet ps;
  ps.create("b", {2}, Init::zero(), rng);
  ps.create("a", {2}, Init::zero(), rng);
  CHECK_THROWS_AS(ps.create("a", {2}, Init::zero(), rng), ConfigError);
  std::vector<std::string> names;
  for (const auto& [n, t] : ps.all()) names.push_back(n);
  CHECK(names == std::vector<std::string>{"a", "b"});
}

TEST_CASE("f32r precision keeps parameters float-representable") {
  Rng rng(2);
  ParameterSet ps(Precision::f32r);
  Tensor w = ps.create("w", {64}, Init::xavier(), rng);
  for (double v : w.data()) CHECK(static_cast<double>(static_cast<float>(v)) == v);
}
