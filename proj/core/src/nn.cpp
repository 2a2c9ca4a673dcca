#include "bevplan/nn.hpp"

#include <algorithm>
#include <cmath>

namespace bevplan {

Tensor ParameterSet::create(const std::string& name, Shape shape, Init init, Rng& rng,
                            bool requires_grad) {
  if (params_.count(name) != 0) throw ConfigError("parameter already registered: " + name);
  const auto n = static_cast<size_t>(shape_numel(shape));
  std::vector<double> data(n, 0.0);
  switch (init.kind) {
    case Init::kZero:
      break;
    case Init::kConstant:
      std::fill(data.begin(), data.end(), init.value);
      break;
    case Init::kXavier: {
      // fan_in/fan_out from the first two dims; vectors use fan_out = 1.
      const double fan_in = static_cast<double>(shape[0]);
      const double fan_out = shape.size() > 1 ? static_cast<double>(shape[1]) : 1.0;
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      for (auto& v : data) v = rng.uniform(-bound, bound);
      break;
    }
    case Init::kNormal:
      for (auto& v : data) v = rng.normal() * init.value;
      break;
  }
  if (precision_ == Precision::f32r)
    for (auto& v : data) v = round_f32(v);
  Tensor t = Tensor::leaf(std::move(shape), std::move(data), requires_grad);
  params_.emplace(name, t);
  return t;
}

Tensor ParameterSet::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

void ParameterSet::zero_grads() {
  for (auto& [name, t] : params_) t.zero_grad();
}

int64_t ParameterSet::scalar_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

namespace nn {

Tensor sinusoidal_positional_encoding(const Tensor& coords, int d_model) {
  if (coords.rank() != 2)
    throw ShapeError("positional encoding: coords must be [n x c], got " +
                     shape_str(coords.shape()));
  const int n = coords.dim(0), c = coords.dim(1);
  if (d_model <= 0 || d_model % (2 * c) != 0)
    throw ConfigError("positional encoding: d_model " + std::to_string(d_model) +
                      " must be divisible by 2*" + std::to_string(c));
  const int d_pc = d_model / c;
  const int half = d_pc / 2;
  std::vector<double> omega(static_cast<size_t>(half));
  for (int j = 0; j < half; ++j)
    omega[static_cast<size_t>(j)] = std::pow(10000.0, -2.0 * j / static_cast<double>(d_pc));

  std::vector<double> out(static_cast<size_t>(n) * d_model);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < c; ++k) {
      const double v = coords.data()[static_cast<size_t>(i) * c + k];
      double* o = out.data() + static_cast<size_t>(i) * d_model + static_cast<size_t>(k) * d_pc;
      for (int j = 0; j < half; ++j) {
        o[2 * j] = std::sin(v * omega[static_cast<size_t>(j)]);
        o[2 * j + 1] = std::cos(v * omega[static_cast<size_t>(j)]);
      }
    }
  auto node = coords.node();
  return make_op_output(
      {n, d_model}, std::move(out), {coords},
      [node, n, c, d_pc, half, omega](const std::vector<double>& dout) {
        if (!node->requires_grad) return;
        auto& g = node->grad_buffer();
        const int d_model_local = c * d_pc;
        for (int i = 0; i < n; ++i)
          for (int k = 0; k < c; ++k) {
            const double v = node->data[static_cast<size_t>(i) * c + k];
            const double* d = dout.data() + static_cast<size_t>(i) * d_model_local +
                              static_cast<size_t>(k) * d_pc;
            double acc = 0.0;
            for (int j = 0; j < half; ++j) {
              const double w = omega[static_cast<size_t>(j)];
              acc += d[2 * j] * w * std::cos(v * w);
              acc -= d[2 * j + 1] * w * std::sin(v * w);
            }
            g[static_cast<size_t>(i) * c + k] += acc;
          }
      });
}

Linear Linear::create(ParameterSet& ps, const std::string& name, int in, int out, Rng& rng,
                      Init weight_init) {
  Linear l;
  l.w = ps.create(name + ".w", {in, out}, weight_init, rng);
  l.b = ps.create(name + ".b", {out}, Init::zero(), rng);
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  return ops::add_rowvec(ops::matmul(x, w), b);
}

Mlp Mlp::create(ParameterSet& ps, const std::string& name, int in, int hidden, int out, Rng& rng,
                Init out_init) {
  Mlp m;
  m.l1 = Linear::create(ps, name + ".l1", in, hidden, rng);
  m.l2 = Linear::create(ps, name + ".l2", hidden, out, rng, out_init);
  return m;
}

Tensor Mlp::operator()(const Tensor& x) const { return l2(ops::relu(l1(x))); }

LayerNorm LayerNorm::create(ParameterSet& ps, const std::string& name, int dim, Rng& rng) {
  LayerNorm ln;
  ln.gamma = ps.create(name + ".gamma", {dim}, Init::constant(1.0), rng);
  ln.beta = ps.create(name + ".beta", {dim}, Init::zero(), rng);
  return ln;
}

Tensor LayerNorm::operator()(const Tensor& x) const {
  return ops::layer_norm_rows(x, gamma, beta);
}

MultiheadCrossAttention MultiheadCrossAttention::create(ParameterSet& ps, const std::string& name,
                                                        int d, int heads, Rng& rng) {
  if (heads <= 0 || d % heads != 0)
    throw ConfigError("attention: d " + std::to_string(d) + " not divisible by heads " +
                      std::to_string(heads));
  MultiheadCrossAttention a;
  a.heads = heads;
  a.wq = ps.create(name + ".wq", {d, d}, Init::xavier(), rng);
  a.wk = ps.create(name + ".wk", {d, d}, Init::xavier(), rng);
  a.wv = ps.create(name + ".wv", {d, d}, Init::xavier(), rng);
  a.wo = ps.create(name + ".wo", {d, d}, Init::xavier(), rng);
  return a;
}

Tensor MultiheadCrossAttention::operator()(const Tensor& query, const Tensor& key_value) const {
  if (!key_value.defined() || key_value.dim(0) < 1)
    throw ContractError("multihead_cross_attention: empty key-value context");
  const int d = wq.dim(0);
  if (query.rank() != 2 || query.dim(1) != d || key_value.rank() != 2 || key_value.dim(1) != d)
    throw ShapeError("multihead_cross_attention: bad shapes " + shape_str(query.shape()) + ", " +
                     shape_str(key_value.shape()));
  const int dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor q = ops::matmul(query, wq);
  const Tensor k = ops::matmul(key_value, wk);
  const Tensor v = ops::matmul(key_value, wv);
  std::vector<Tensor> head_outs;
  head_outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Tensor qh = ops::slice_cols(q, h * dh, dh);
    const Tensor kh = ops::slice_cols(k, h * dh, dh);
    const Tensor vh = ops::slice_cols(v, h * dh, dh);
    const Tensor scores = ops::scale(ops::matmul(qh, ops::transpose(kh)), inv_sqrt);
    head_outs.push_back(ops::matmul(ops::softmax_rows(scores), vh));
  }
  return ops::matmul(ops::concat(head_outs, 1), wo);
}

CrossAttnBlock CrossAttnBlock::create(ParameterSet& ps, const std::string& name, int d, int heads,
                                      Rng& rng) {
  CrossAttnBlock b;
  b.attn = MultiheadCrossAttention::create(ps, name + ".attn", d, heads, rng);
  b.ln = LayerNorm::create(ps, name + ".ln", d, rng);
  return b;
}

Tensor CrossAttnBlock::operator()(const Tensor& x, const Tensor& kv) const {
  return ln(ops::add(x, attn(x, kv)));
}

FeedForwardBlock FeedForwardBlock::create(ParameterSet& ps, const std::string& name, int d,
                                          int hidden, Rng& rng) {
  FeedForwardBlock b;
  b.mlp = Mlp::create(ps, name + ".mlp", d, hidden, d, rng);
  b.ln = LayerNorm::create(ps, name + ".ln", d, rng);
  return b;
}

Tensor FeedForwardBlock::operator()(const Tensor& x) const { return ln(ops::add(x, mlp(x))); }

Conv3x3 Conv3x3::create(ParameterSet& ps, const std::string& name, int cin, int cout, int stride,
                        Rng& rng, Init weight_init) {
  if (stride != 1 && stride != 2) throw ConfigError("conv3x3: stride must be 1 or 2");
  Conv3x3 c;
  c.stride = stride;
  c.w = ps.create(name + ".w", {9 * cin, cout}, weight_init, rng);
  c.b = ps.create(name + ".b", {cout}, Init::zero(), rng);
  return c;
}

Tensor Conv3x3::operator()(const Tensor& grid) const {
  if (grid.rank() != 3)
    throw ShapeError("conv3x3: expected [H x W x C] input, got " + shape_str(grid.shape()));
  const int H = grid.dim(0), W = grid.dim(1), C = grid.dim(2);
  if (9 * C != w.dim(0))
    throw ShapeError("conv3x3: input channels " + std::to_string(C) + " do not match weight " +
                     shape_str(w.shape()));
  const int Hp = H + 2, Wp = W + 2;
  const int oh = (H - 1) / stride + 1, ow = (W - 1) / stride + 1;
  const Tensor padded = ops::reshape(ops::pad_hw(grid, 1), {Hp * Wp, C});
  std::vector<Tensor> taps;
  taps.reserve(9);
  for (int dr = 0; dr < 3; ++dr)
    for (int dc = 0; dc < 3; ++dc) {
      std::vector<int> idx(static_cast<size_t>(oh) * ow);
      for (int r = 0; r < oh; ++r)
        for (int c2 = 0; c2 < ow; ++c2)
          idx[static_cast<size_t>(r) * ow + c2] = (r * stride + dr) * Wp + (c2 * stride + dc);
      taps.push_back(ops::embedding(padded, idx));
    }
  const Tensor cols = ops::concat(taps, 1);
  const Tensor out = ops::add_rowvec(ops::matmul(cols, w), b);
  return ops::reshape(out, {oh, ow, out_channels()});
}

double GradCheckReport::max_rel_err() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_err);
  return m;
}

bool GradCheckReport::passed() const {
  if (numerically_unstable) return false;
  for (const auto& e : entries)
    if (!e.finite || e.max_rel_err > tolerance) return false;
  return true;
}

GradCheckReport grad_check(const std::function<Tensor()>& fragment, ParameterSet& params,
                           double tolerance, int64_t max_entries) {
  GradCheckReport report;
  report.tolerance = tolerance;

  params.zero_grads();
  std::map<std::string, std::vector<double>> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = fragment();
    if (loss.numel() != 1) throw ContractError("grad_check: fragment must produce a scalar");
    tape.backward(loss);
  }
  for (const auto& [name, t] : params.all()) {
    if (!t.requires_grad()) continue;
    analytic[name] =
        t.has_grad() ? t.grad() : std::vector<double>(static_cast<size_t>(t.numel()), 0.0);
  }

  for (auto& [name, t] : params.all()) {
    if (!t.requires_grad()) continue;  // frozen parameters are excluded
    GradCheckEntry entry;
    entry.name = name;
    auto& data = t.mutable_data();
    const auto& g = analytic[name];
    const int64_t n = t.numel();
    int64_t stride = 1;
    if (max_entries > 0 && n > max_entries) stride = (n + max_entries - 1) / max_entries;
    for (int64_t i = 0; i < n; i += stride) {
      const double saved = data[static_cast<size_t>(i)];
      const double h = 1e-5 * std::max(1.0, std::abs(saved));
      data[static_cast<size_t>(i)] = saved + h;
      const double f_plus = fragment().item();
      data[static_cast<size_t>(i)] = saved - h;
      const double f_minus = fragment().item();
      data[static_cast<size_t>(i)] = saved;
      const double fd = (f_plus - f_minus) / (2.0 * h);
      if (!std::isfinite(fd)) {
        entry.finite = false;
        report.numerically_unstable = true;
        ++entry.checked;
        continue;
      }
      const double a = g[static_cast<size_t>(i)];
      const double rel = std::abs(fd - a) / std::max({std::abs(fd), std::abs(a), 1e-3});
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
      ++entry.checked;
    }
    report.entries.push_back(std::move(entry));
  }
  params.zero_grads();
  return report;
}

}  // namespace nn

}  // namespace bevplan
