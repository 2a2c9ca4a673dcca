#include "bevplan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace bevplan {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? " x " : "") << s[i];
  os << "]";
  return os.str();
}

namespace detail {

void TensorNode::accumulate(const std::vector<double>& g) {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  for (size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

std::vector<double>& TensorNode::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

}  // namespace detail

namespace {

void check_shape(bool ok, const char* op, const Shape& a, const Shape& b) {
  if (!ok)
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                     shape_str(b));
}

void check_positive_dims(const char* op, const Shape& s) {
  for (int d : s)
    if (d <= 0) throw ShapeError(std::string(op) + ": nonpositive dimension in " + shape_str(s));
}

thread_local std::vector<Tape*> t_tape_stack;

// c[m x n] (+)= a[m x k] @ b[k x n]
void mm(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<size_t>(i) * n;
    if (!accumulate)
      for (int j = 0; j < n; ++j) ci[j] = 0.0;
    const double* ai = a + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[m x k] += a[m x n] @ b[k x n]^T
void mm_nt_acc(const double* a, const double* b, double* c, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * n;
    double* ci = c + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double* bp = b + static_cast<size_t>(p) * n;
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += ai[j] * bp[j];
      ci[p] += acc;
    }
  }
}

// c[k x n] += a[m x k]^T @ b[m x n]
void mm_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    const double* bi = b + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace

Tensor make_op_output(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                      std::function<void(const std::vector<double>&)> backward) {
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);

  Tape* tape = active_tape();
  bool needs = false;
  if (tape != nullptr)
    for (const Tensor& in : inputs)
      if (in.requires_grad()) needs = true;
  node->requires_grad = needs;
  Tensor out;
  out.node_ = node;
  if (needs) {
    Tape::Record rec;
    rec.inputs.reserve(inputs.size());
    for (const Tensor& in : inputs) rec.inputs.push_back(in.node());
    rec.output = node;
    rec.backward = std::move(backward);
    tape->nodes_.push_back(std::move(rec));
  }
  return out;
}

Tensor Tensor::zeros(Shape shape) {
  check_positive_dims("zeros", shape);
  const auto n = static_cast<size_t>(shape_numel(shape));
  return from_data(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(Shape shape, double value) {
  check_positive_dims("full", shape);
  const auto n = static_cast<size_t>(shape_numel(shape));
  return from_data(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  check_positive_dims("from_data", shape);
  if (static_cast<int64_t>(data.size()) != shape_numel(shape))
    throw ShapeError("from_data: data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

Tensor Tensor::leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  Tensor t = from_data(std::move(shape), std::move(data));
  t.node_->requires_grad = requires_grad;
  return t;
}

const std::vector<double>& Tensor::grad() const {
  if (node_->grad.empty()) throw ContractError("tensor has no accumulated gradient");
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item(): tensor is not scalar, shape " + shape_str(shape()));
  return node_->data[0];
}

Tensor Tensor::detach() const {
  Tensor t = from_data(node_->shape, node_->data);
  return t;
}

TapeScope::TapeScope(Tape& tape) { t_tape_stack.push_back(&tape); }
TapeScope::~TapeScope() { t_tape_stack.pop_back(); }

Tape* active_tape() { return t_tape_stack.empty() ? nullptr : t_tape_stack.back(); }

int Tape::backward(const Tensor& loss, bool strict) {
  if (consumed_) throw ContractError("tape: second backward without reset");
  if (loss.numel() != 1)
    throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  consumed_ = true;

  auto loss_node = loss.node();
  bool on_tape = false;
  for (const Record& r : nodes_)
    if (r.output == loss_node) on_tape = true;
  const bool leaf_loss = !on_tape && loss_node->requires_grad;
  if (!on_tape && !leaf_loss) {
    if (strict) throw ContractError("backward: loss is detached from the tape (empty gradient)");
    return 0;
  }

  loss_node->grad_buffer()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // not reachable from the loss
    it->backward(it->output->grad);
  }

  // Count distinct requires-grad leaves (inputs that are not any record's
  // output) that received gradient.
  std::unordered_set<const detail::TensorNode*> outputs;
  outputs.reserve(nodes_.size());
  for (const Record& r : nodes_) outputs.insert(r.output.get());
  std::unordered_set<const detail::TensorNode*> seen;
  int touched = 0;
  for (const Record& r : nodes_)
    for (const auto& in : r.inputs) {
      if (outputs.count(in.get()) != 0) continue;
      if (!seen.insert(in.get()).second) continue;
      if (in->requires_grad && !in->grad.empty()) ++touched;
    }
  if (leaf_loss) ++touched;
  return touched;
}

void Tape::clear() {
  nodes_.clear();
  consumed_ = false;
}

namespace ops {

namespace {

using detail::TensorNode;
using NodePtr = std::shared_ptr<detail::TensorNode>;

Tensor unary_map(const char* name, const Tensor& t, const std::function<double(double)>& f,
                 const std::function<double(double, double)>& dfdx /* (x, y) -> dy/dx */) {
  (void)name;
  std::vector<double> out(t.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(t.data()[i]);
  NodePtr in = t.node();
  std::vector<double> saved_out = out;
  return make_op_output(t.shape(), std::move(out), {t},
                        [in, saved_out, dfdx](const std::vector<double>& dout) {
                          if (!in->requires_grad) return;
                          auto& g = in->grad_buffer();
                          for (size_t i = 0; i < dout.size(); ++i)
                            g[i] += dout[i] * dfdx(in->data[i], saved_out[i]);
                        });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_shape(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0), "matmul", a.shape(),
              b.shape());
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m) * n);
  mm(a.data().data(), b.data().data(), out.data(), m, k, n, false);
  NodePtr na = a.node(), nb = b.node();
  return make_op_output({m, n}, std::move(out), {a, b},
                        [na, nb, m, k, n](const std::vector<double>& dout) {
                          if (na->requires_grad)
                            mm_nt_acc(dout.data(), nb->data.data(), na->grad_buffer().data(), m, n,
                                      k);
                          if (nb->requires_grad)
                            mm_tn_acc(na->data.data(), dout.data(), nb->grad_buffer().data(), m, k,
                                      n);
                        });
}

namespace {

Tensor elementwise2(const char* name, const Tensor& a, const Tensor& b,
                    const std::function<double(double, double)>& f,
                    const std::function<double(double, double)>& dfda,
                    const std::function<double(double, double)>& dfdb) {
  check_shape(a.shape() == b.shape(), name, a.shape(), b.shape());
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(a.data()[i], b.data()[i]);
  NodePtr na = a.node(), nb = b.node();
  return make_op_output(a.shape(), std::move(out), {a, b},
                        [na, nb, dfda, dfdb](const std::vector<double>& dout) {
                          if (na->requires_grad) {
                            auto& g = na->grad_buffer();
                            for (size_t i = 0; i < dout.size(); ++i)
                              g[i] += dout[i] * dfda(na->data[i], nb->data[i]);
                          }
                          if (nb->requires_grad) {
                            auto& g = nb->grad_buffer();
                            for (size_t i = 0; i < dout.size(); ++i)
                              g[i] += dout[i] * dfdb(na->data[i], nb->data[i]);
                          }
                        });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise2(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise2(
      "subtract", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise2(
      "multiply", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  const bool v_ok = (v.rank() == 1 && a.rank() == 2 && v.dim(0) == a.dim(1)) ||
                    (v.rank() == 2 && a.rank() == 2 && v.dim(0) == 1 && v.dim(1) == a.dim(1));
  check_shape(v_ok, "add_rowvec", a.shape(), v.shape());
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> out(a.data());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] += v.data()[j];
  NodePtr na = a.node(), nv = v.node();
  return make_op_output(a.shape(), std::move(out), {a, v},
                        [na, nv, m, n](const std::vector<double>& dout) {
                          if (na->requires_grad) na->accumulate(dout);
                          if (nv->requires_grad) {
                            auto& g = nv->grad_buffer();
                            for (int i = 0; i < m; ++i)
                              for (int j = 0; j < n; ++j)
                                g[j] += dout[static_cast<size_t>(i) * n + j];
                          }
                        });
}

Tensor mul_colvec(const Tensor& a, const Tensor& v) {
  const bool v_ok = a.rank() == 2 && v.rank() == 2 && v.dim(0) == a.dim(0) && v.dim(1) == 1;
  check_shape(v_ok, "mul_colvec", a.shape(), v.shape());
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> out(a.data());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] *= v.data()[i];
  NodePtr na = a.node(), nv = v.node();
  return make_op_output(a.shape(), std::move(out), {a, v},
                        [na, nv, m, n](const std::vector<double>& dout) {
                          if (na->requires_grad) {
                            auto& g = na->grad_buffer();
                            for (int i = 0; i < m; ++i)
                              for (int j = 0; j < n; ++j)
                                g[static_cast<size_t>(i) * n + j] +=
                                    dout[static_cast<size_t>(i) * n + j] * nv->data[i];
                          }
                          if (nv->requires_grad) {
                            auto& g = nv->grad_buffer();
                            for (int i = 0; i < m; ++i) {
                              double acc = 0.0;
                              for (int j = 0; j < n; ++j)
                                acc += dout[static_cast<size_t>(i) * n + j] *
                                       na->data[static_cast<size_t>(i) * n + j];
                              g[i] += acc;
                            }
                          }
                        });
}

Tensor affine(const Tensor& t, double k, double b) {
  std::vector<double> out(t.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = k * t.data()[i] + b;
  NodePtr in = t.node();
  return make_op_output(t.shape(), std::move(out), {t}, [in, k](const std::vector<double>& dout) {
    if (!in->requires_grad) return;
    auto& g = in->grad_buffer();
    for (size_t i = 0; i < dout.size(); ++i) g[i] += k * dout[i];
  });
}

Tensor scale(const Tensor& t, double k) { return affine(t, k, 0.0); }

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const int rank = parts.front().rank();
  if (!((rank == 1 && axis == 0) || (rank == 2 && (axis == 0 || axis == 1))))
    throw ShapeError("concat: unsupported rank/axis");
  if (rank == 1 || axis == 0) {
    // Row concatenation (rank-1 vectors behave as rows of length dim0).
    int cols = rank == 2 ? parts.front().dim(1) : 1;
    int total_rows = 0;
    for (const Tensor& p : parts) {
      check_shape(p.rank() == rank && (rank == 1 || p.dim(1) == cols), "concat",
                  parts.front().shape(), p.shape());
      total_rows += p.dim(0);
    }
    std::vector<double> out;
    out.reserve(static_cast<size_t>(total_rows) * cols);
    for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    std::vector<NodePtr> nodes;
    for (const Tensor& p : parts) nodes.push_back(p.node());
    Shape oshape = rank == 1 ? Shape{total_rows} : Shape{total_rows, cols};
    return make_op_output(std::move(oshape), std::move(out), parts,
                          [nodes](const std::vector<double>& dout) {
                            size_t off = 0;
                            for (const NodePtr& nptr : nodes) {
                              const size_t len = nptr->data.size();
                              if (nptr->requires_grad) {
                                auto& g = nptr->grad_buffer();
                                for (size_t i = 0; i < len; ++i) g[i] += dout[off + i];
                              }
                              off += len;
                            }
                          });
  }
  // Column concatenation of rank-2 tensors.
  const int m = parts.front().dim(0);
  int total_cols = 0;
  for (const Tensor& p : parts) {
    check_shape(p.rank() == 2 && p.dim(0) == m, "concat", parts.front().shape(), p.shape());
    total_cols += p.dim(1);
  }
  std::vector<double> out(static_cast<size_t>(m) * total_cols);
  {
    int col0 = 0;
    for (const Tensor& p : parts) {
      const int pc = p.dim(1);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < pc; ++j)
          out[static_cast<size_t>(i) * total_cols + col0 + j] =
              p.data()[static_cast<size_t>(i) * pc + j];
      col0 += pc;
    }
  }
  std::vector<NodePtr> nodes;
  std::vector<int> widths;
  for (const Tensor& p : parts) {
    nodes.push_back(p.node());
    widths.push_back(p.dim(1));
  }
  return make_op_output({m, total_cols}, std::move(out), parts,
                        [nodes, widths, m, total_cols](const std::vector<double>& dout) {
                          int col0 = 0;
                          for (size_t pi = 0; pi < nodes.size(); ++pi) {
                            const int pc = widths[pi];
                            if (nodes[pi]->requires_grad) {
                              auto& g = nodes[pi]->grad_buffer();
                              for (int i = 0; i < m; ++i)
                                for (int j = 0; j < pc; ++j)
                                  g[static_cast<size_t>(i) * pc + j] +=
                                      dout[static_cast<size_t>(i) * total_cols + col0 + j];
                            }
                            col0 += pc;
                          }
                        });
}

Tensor slice_rows(const Tensor& t, int start, int len) {
  if (t.rank() != 2 && t.rank() != 1)
    throw ShapeError("slice: expected rank 1 or 2, got " + shape_str(t.shape()));
  const int rows = t.dim(0);
  const int cols = t.rank() == 2 ? t.dim(1) : 1;
  if (start < 0 || len <= 0 || start + len > rows)
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") out of bounds for " + shape_str(t.shape()));
  std::vector<double> out(t.data().begin() + static_cast<size_t>(start) * cols,
                          t.data().begin() + static_cast<size_t>(start + len) * cols);
  NodePtr in = t.node();
  Shape oshape = t.rank() == 2 ? Shape{len, cols} : Shape{len};
  return make_op_output(std::move(oshape), std::move(out), {t},
                        [in, start, cols](const std::vector<double>& dout) {
                          if (!in->requires_grad) return;
                          auto& g = in->grad_buffer();
                          const size_t off = static_cast<size_t>(start) * cols;
                          for (size_t i = 0; i < dout.size(); ++i) g[off + i] += dout[i];
                        });
}

Tensor slice_cols(const Tensor& t, int start, int len) {
  if (t.rank() != 2) throw ShapeError("slice_cols: expected rank 2, got " + shape_str(t.shape()));
  const int m = t.dim(0), n = t.dim(1);
  if (start < 0 || len <= 0 || start + len > n)
    throw ShapeError("slice_cols: range out of bounds for " + shape_str(t.shape()));
  std::vector<double> out(static_cast<size_t>(m) * len);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < len; ++j)
      out[static_cast<size_t>(i) * len + j] = t.data()[static_cast<size_t>(i) * n + start + j];
  NodePtr in = t.node();
  return make_op_output({m, len}, std::move(out), {t},
                        [in, start, len, m, n](const std::vector<double>& dout) {
                          if (!in->requires_grad) return;
                          auto& g = in->grad_buffer();
                          for (int i = 0; i < m; ++i)
                            for (int j = 0; j < len; ++j)
                              g[static_cast<size_t>(i) * n + start + j] +=
                                  dout[static_cast<size_t>(i) * len + j];
                        });
}

Tensor transpose(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(t.shape()));
  const int m = t.dim(0), n = t.dim(1);
  std::vector<double> out(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<size_t>(j) * m + i] = t.data()[static_cast<size_t>(i) * n + j];
  NodePtr in = t.node();
  return make_op_output({n, m}, std::move(out), {t}, [in, m, n](const std::vector<double>& dout) {
    if (!in->requires_grad) return;
    auto& g = in->grad_buffer();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) g[static_cast<size_t>(i) * n + j] += dout[static_cast<size_t>(j) * m + i];
  });
}

Tensor reshape(const Tensor& t, Shape shape) {
  check_positive_dims("reshape", shape);
  if (shape_numel(shape) != t.numel())
    throw ShapeError("reshape: element count mismatch " + shape_str(t.shape()) + " -> " +
                     shape_str(shape));
  NodePtr in = t.node();
  return make_op_output(std::move(shape), t.data(), {t}, [in](const std::vector<double>& dout) {
    if (in->requires_grad) in->accumulate(dout);
  });
}

Tensor sum_all(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v;
  NodePtr in = t.node();
  return make_op_output({1}, {s}, {t}, [in](const std::vector<double>& dout) {
    if (!in->requires_grad) return;
    auto& g = in->grad_buffer();
    for (double& v : g) v += dout[0];
  });
}

Tensor mean_all(const Tensor& t) {
  const double inv = 1.0 / static_cast<double>(t.numel());
  double s = 0.0;
  for (double v : t.data()) s += v;
  NodePtr in = t.node();
  return make_op_output({1}, {s * inv}, {t}, [in, inv](const std::vector<double>& dout) {
    if (!in->requires_grad) return;
    auto& g = in->grad_buffer();
    for (double& v : g) v += dout[0] * inv;
  });
}

namespace {

Tensor axis_reduce(const Tensor& t, int axis, bool mean) {
  if (t.rank() != 2) throw ShapeError("sum/mean axis: expected rank 2, got " + shape_str(t.shape()));
  if (axis != 0 && axis != 1) throw ShapeError("sum/mean axis: axis must be 0 or 1");
  const int m = t.dim(0), n = t.dim(1);
  const double inv = mean ? (axis == 0 ? 1.0 / m : 1.0 / n) : 1.0;
  std::vector<double> out(axis == 0 ? n : m, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[axis == 0 ? j : i] += t.data()[static_cast<size_t>(i) * n + j];
  for (double& v : out) v *= inv;
  NodePtr in = t.node();
  return make_op_output({axis == 0 ? n : m}, std::move(out), {t},
                        [in, m, n, axis, inv](const std::vector<double>& dout) {
                          if (!in->requires_grad) return;
                          auto& g = in->grad_buffer();
                          for (int i = 0; i < m; ++i)
                            for (int j = 0; j < n; ++j)
                              g[static_cast<size_t>(i) * n + j] += dout[axis == 0 ? j : i] * inv;
                        });
}

}  // namespace

Tensor sum_axis(const Tensor& t, int axis) { return axis_reduce(t, axis, false); }
Tensor mean_axis(const Tensor& t, int axis) { return axis_reduce(t, axis, true); }

namespace {

Tensor segment_reduce(const Tensor& t, int group, bool mean) {
  if (t.rank() != 2) throw ShapeError("segment reduce: expected rank 2, got " + shape_str(t.shape()));
  const int m = t.dim(0), n = t.dim(1);
  if (group <= 0 || m % group != 0)
    throw ShapeError("segment reduce: group " + std::to_string(group) + " does not divide rows of " +
                     shape_str(t.shape()));
  const int out_rows = m / group;
  const double inv = mean ? 1.0 / group : 1.0;
  std::vector<double> out(static_cast<size_t>(out_rows) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    const int o = i / group;
    for (int j = 0; j < n; ++j)
      out[static_cast<size_t>(o) * n + j] += t.data()[static_cast<size_t>(i) * n + j] * inv;
  }
  NodePtr in = t.node();
  return make_op_output({out_rows, n}, std::move(out), {t},
                        [in, m, n, group, inv](const std::vector<double>& dout) {
                          if (!in->requires_grad) return;
                          auto& g = in->grad_buffer();
                          for (int i = 0; i < m; ++i) {
                            const int o = i / group;
                            for (int j = 0; j < n; ++j)
                              g[static_cast<size_t>(i) * n + j] +=
                                  dout[static_cast<size_t>(o) * n + j] * inv;
                          }
                        });
}

}  // namespace

Tensor segment_sum_rows(const Tensor& t, int group) { return segment_reduce(t, group, false); }
Tensor segment_mean_rows(const Tensor& t, int group) { return segment_reduce(t, group, true); }

Tensor relu(const Tensor& t) {
  return unary_map(
      "relu", t, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& t) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary_map(
      "gelu", t,
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        const double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return phi + x * pdf;
      });
}

Tensor sigmoid(const Tensor& t) {
  return unary_map(
      "sigmoid", t,
      [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor log(const Tensor& t) {
  return unary_map(
      "log", t, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor abs(const Tensor& t) {
  return unary_map(
      "abs", t, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor atan2(const Tensor& y, const Tensor& x) {
  check_shape(y.shape() == x.shape(), "atan2", y.shape(), x.shape());
  std::vector<double> out(y.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::atan2(y.data()[i], x.data()[i]);
  NodePtr ny = y.node(), nx = x.node();
  return make_op_output(y.shape(), std::move(out), {y, x},
                        [ny, nx](const std::vector<double>& dout) {
                          for (size_t i = 0; i < dout.size(); ++i) {
                            const double yv = ny->data[i], xv = nx->data[i];
                            const double denom = xv * xv + yv * yv + 1e-12;
                            if (ny->requires_grad) ny->grad_buffer()[i] += dout[i] * xv / denom;
                            if (nx->requires_grad) nx->grad_buffer()[i] -= dout[i] * yv / denom;
                          }
                        });
}

Tensor wrap_angle(const Tensor& t) {
  return unary_map(
      "wrap_angle", t, [](double x) { return ::bevplan::wrap_angle(x); },
      [](double, double) { return 1.0; });
}

Tensor clamp(const Tensor& t, double lo, double hi) {
  return unary_map(
      "clamp", t, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor softmax_rows(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("softmax: expected rank 2, got " + shape_str(t.shape()));
  const int m = t.dim(0), n = t.dim(1);
  std::vector<double> out(t.data().size());
  for (int i = 0; i < m; ++i) {
    const double* row = t.data().data() + static_cast<size_t>(i) * n;
    double* orow = out.data() + static_cast<size_t>(i) * n;
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < n; ++j) orow[j] *= inv;
  }
  NodePtr in = t.node();
  std::vector<double> saved = out;
  return make_op_output({m, n}, std::move(out), {t},
                        [in, saved, m, n](const std::vector<double>& dout) {
                          if (!in->requires_grad) return;
                          auto& g = in->grad_buffer();
                          for (int i = 0; i < m; ++i) {
                            const double* y = saved.data() + static_cast<size_t>(i) * n;
                            const double* dy = dout.data() + static_cast<size_t>(i) * n;
                            double dot = 0.0;
                            for (int j = 0; j < n; ++j) dot += y[j] * dy[j];
                            for (int j = 0; j < n; ++j)
                              g[static_cast<size_t>(i) * n + j] += y[j] * (dy[j] - dot);
                          }
                        });
}

Tensor layer_norm_rows(const Tensor& t, const Tensor& gamma, const Tensor& beta) {
  if (t.rank() != 2) throw ShapeError("layer_norm: expected rank 2, got " + shape_str(t.shape()));
  const int m = t.dim(0), n = t.dim(1);
  check_shape(gamma.rank() == 1 && gamma.dim(0) == n, "layer_norm", t.shape(), gamma.shape());
  check_shape(beta.rank() == 1 && beta.dim(0) == n, "layer_norm", t.shape(), beta.shape());
  constexpr double kEps = 1e-5;
  std::vector<double> out(t.data().size());
  std::vector<double> xhat(t.data().size());
  std::vector<double> inv_sigma(m);
  for (int i = 0; i < m; ++i) {
    const double* row = t.data().data() + static_cast<size_t>(i) * n;
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += row[j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= n;
    const double is = 1.0 / std::sqrt(var + kEps);
    inv_sigma[i] = is;
    for (int j = 0; j < n; ++j) {
      const size_t idx = static_cast<size_t>(i) * n + j;
      xhat[idx] = (row[j] - mu) * is;
      out[idx] = gamma.data()[j] * xhat[idx] + beta.data()[j];
    }
  }
  NodePtr nt = t.node(), ng = gamma.node(), nb = beta.node();
  return make_op_output(
      {m, n}, std::move(out), {t, gamma, beta},
      [nt, ng, nb, xhat, inv_sigma, m, n](const std::vector<double>& dout) {
        if (nb->requires_grad) {
          auto& g = nb->grad_buffer();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) g[j] += dout[static_cast<size_t>(i) * n + j];
        }
        if (ng->requires_grad) {
          auto& g = ng->grad_buffer();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
              g[j] += dout[static_cast<size_t>(i) * n + j] * xhat[static_cast<size_t>(i) * n + j];
        }
        if (nt->requires_grad) {
          auto& g = nt->grad_buffer();
          for (int i = 0; i < m; ++i) {
            const double* dy = dout.data() + static_cast<size_t>(i) * n;
            const double* xh = xhat.data() + static_cast<size_t>(i) * n;
            double mean_dyg = 0.0, mean_dyg_xh = 0.0;
            for (int j = 0; j < n; ++j) {
              const double dyg = dy[j] * ng->data[j];
              mean_dyg += dyg;
              mean_dyg_xh += dyg * xh[j];
            }
            mean_dyg /= n;
            mean_dyg_xh /= n;
            for (int j = 0; j < n; ++j) {
              const double dyg = dy[j] * ng->data[j];
              g[static_cast<size_t>(i) * n + j] +=
                  inv_sigma[i] * (dyg - mean_dyg - xh[j] * mean_dyg_xh);
            }
          }
        }
      });
}

Tensor embedding(const Tensor& table, const std::vector<int>& indices) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be rank 2, got " + shape_str(table.shape()));
  const int rows = table.dim(0), cols = table.dim(1);
  for (int idx : indices)
    if (idx < 0 || idx >= rows)
      throw ShapeError("embedding: index " + std::to_string(idx) + " out of range [0, " +
                       std::to_string(rows) + ")");
  const int n = static_cast<int>(indices.size());
  std::vector<double> out(static_cast<size_t>(n) * cols);
  for (int i = 0; i < n; ++i)
    std::copy_n(table.data().data() + static_cast<size_t>(indices[i]) * cols, cols,
                out.data() + static_cast<size_t>(i) * cols);
  NodePtr nt = table.node();
  return make_op_output({n, cols}, std::move(out), {table},
                        [nt, indices, cols](const std::vector<double>& dout) {
                          if (!nt->requires_grad) return;
                          auto& g = nt->grad_buffer();
                          for (size_t i = 0; i < indices.size(); ++i)
                            for (int j = 0; j < cols; ++j)
                              g[static_cast<size_t>(indices[i]) * cols + j] +=
                                  dout[i * cols + j];
                        });
}

Tensor bilinear_sample(const Tensor& grid, const Tensor& points) {
  if (grid.rank() != 3)
    throw ShapeError("bilinear_sample: grid must be [H x W x C], got " + shape_str(grid.shape()));
  if (points.rank() != 2 || points.dim(1) != 2)
    throw ShapeError("bilinear_sample: points must be [n x 2], got " + shape_str(points.shape()));
  const int H = grid.dim(0), W = grid.dim(1), C = grid.dim(2);
  const int n = points.dim(0);
  std::vector<double> out(static_cast<size_t>(n) * C);

  struct Corner {
    int r0, c0, r1, c1;
    double fr, fc;
    bool r_active, c_active;  // false when clamped: zero point-gradient
  };
  std::vector<Corner> corners(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double pr = points.data()[static_cast<size_t>(i) * 2];
    const double pc = points.data()[static_cast<size_t>(i) * 2 + 1];
    Corner k;
    const double rc = std::clamp(pr, 0.0, static_cast<double>(H - 1));
    const double cc = std::clamp(pc, 0.0, static_cast<double>(W - 1));
    k.r0 = std::min(static_cast<int>(std::floor(rc)), H - 1);
    k.c0 = std::min(static_cast<int>(std::floor(cc)), W - 1);
    k.r1 = std::min(k.r0 + 1, H - 1);
    k.c1 = std::min(k.c0 + 1, W - 1);
    k.fr = rc - k.r0;
    k.fc = cc - k.c0;
    k.r_active = pr > 0.0 && pr < H - 1;
    k.c_active = pc > 0.0 && pc < W - 1;
    corners[static_cast<size_t>(i)] = k;
    const double* g00 = grid.data().data() + (static_cast<size_t>(k.r0) * W + k.c0) * C;
    const double* g01 = grid.data().data() + (static_cast<size_t>(k.r0) * W + k.c1) * C;
    const double* g10 = grid.data().data() + (static_cast<size_t>(k.r1) * W + k.c0) * C;
    const double* g11 = grid.data().data() + (static_cast<size_t>(k.r1) * W + k.c1) * C;
    const double w00 = (1 - k.fr) * (1 - k.fc), w01 = (1 - k.fr) * k.fc;
    const double w10 = k.fr * (1 - k.fc), w11 = k.fr * k.fc;
    double* o = out.data() + static_cast<size_t>(i) * C;
    for (int ch = 0; ch < C; ++ch)
      o[ch] = w00 * g00[ch] + w01 * g01[ch] + w10 * g10[ch] + w11 * g11[ch];
  }
  NodePtr ngrid = grid.node(), npts = points.node();
  return make_op_output(
      {n, C}, std::move(out), {grid, points},
      [ngrid, npts, corners, W, C](const std::vector<double>& dout) {
        const int n_pts = static_cast<int>(corners.size());
        for (int i = 0; i < n_pts; ++i) {
          const Corner& k = corners[static_cast<size_t>(i)];
          const double w00 = (1 - k.fr) * (1 - k.fc), w01 = (1 - k.fr) * k.fc;
          const double w10 = k.fr * (1 - k.fc), w11 = k.fr * k.fc;
          const size_t i00 = (static_cast<size_t>(k.r0) * W + k.c0) * C;
          const size_t i01 = (static_cast<size_t>(k.r0) * W + k.c1) * C;
          const size_t i10 = (static_cast<size_t>(k.r1) * W + k.c0) * C;
          const size_t i11 = (static_cast<size_t>(k.r1) * W + k.c1) * C;
          const double* d = dout.data() + static_cast<size_t>(i) * C;
          if (ngrid->requires_grad) {
            auto& g = ngrid->grad_buffer();
            for (int ch = 0; ch < C; ++ch) {
              g[i00 + ch] += w00 * d[ch];
              g[i01 + ch] += w01 * d[ch];
              g[i10 + ch] += w10 * d[ch];
              g[i11 + ch] += w11 * d[ch];
            }
          }
          if (npts->requires_grad) {
            auto& g = npts->grad_buffer();
            double dr = 0.0, dc = 0.0;
            const double* gd = ngrid->data.data();
            for (int ch = 0; ch < C; ++ch) {
              const double g00 = gd[i00 + ch], g01 = gd[i01 + ch];
              const double g10 = gd[i10 + ch], g11 = gd[i11 + ch];
              dr += d[ch] * ((1 - k.fc) * (g10 - g00) + k.fc * (g11 - g01));
              dc += d[ch] * ((1 - k.fr) * (g01 - g00) + k.fr * (g11 - g10));
            }
            if (k.r_active) g[static_cast<size_t>(i) * 2] += dr;
            if (k.c_active) g[static_cast<size_t>(i) * 2 + 1] += dc;
          }
        }
      });
}

Tensor pad_hw(const Tensor& grid, int pad) {
  if (grid.rank() != 3) throw ShapeError("pad_hw: grid must be [H x W x C], got " + shape_str(grid.shape()));
  if (pad < 0) throw ShapeError("pad_hw: negative pad");
  const int H = grid.dim(0), W = grid.dim(1), C = grid.dim(2);
  const int Hp = H + 2 * pad, Wp = W + 2 * pad;
  std::vector<double> out(static_cast<size_t>(Hp) * Wp * C, 0.0);
  for (int r = 0; r < H; ++r)
    std::copy_n(grid.data().data() + static_cast<size_t>(r) * W * C, static_cast<size_t>(W) * C,
                out.data() + ((static_cast<size_t>(r + pad) * Wp) + pad) * C);
  NodePtr in = grid.node();
  return make_op_output({Hp, Wp, C}, std::move(out), {grid},
                        [in, H, W, C, pad, Wp](const std::vector<double>& dout) {
                          if (!in->requires_grad) return;
                          auto& g = in->grad_buffer();
                          for (int r = 0; r < H; ++r) {
                            const size_t src = ((static_cast<size_t>(r + pad) * Wp) + pad) * C;
                            const size_t dst = static_cast<size_t>(r) * W * C;
                            for (size_t i = 0; i < static_cast<size_t>(W) * C; ++i)
                              g[dst + i] += dout[src + i];
                          }
                        });
}

Tensor primitive_forward(std::string_view kind, const std::vector<Tensor>& inputs) {
  auto want = [&](size_t n) {
    if (inputs.size() != n)
      throw ShapeError(std::string(kind) + ": expected " + std::to_string(n) + " inputs, got " +
                       std::to_string(inputs.size()));
  };
  if (kind == "matmul") {
    want(2);
    return matmul(inputs[0], inputs[1]);
  }
  if (kind == "add") {
    want(2);
    return add(inputs[0], inputs[1]);
  }
  if (kind == "subtract") {
    want(2);
    return sub(inputs[0], inputs[1]);
  }
  if (kind == "multiply") {
    want(2);
    return mul(inputs[0], inputs[1]);
  }
  if (kind == "scalar-scale") {
    want(2);
    return scale(inputs[0], inputs[1].item());
  }
  if (kind == "concat") {
    if (inputs.empty()) throw ShapeError("concat: no inputs");
    return concat(inputs, 0);
  }
  if (kind == "slice") {
    want(3);
    return slice_rows(inputs[0], static_cast<int>(inputs[1].item()),
                      static_cast<int>(inputs[2].item()));
  }
  if (kind == "transpose") {
    want(1);
    return transpose(inputs[0]);
  }
  if (kind == "sum") {
    want(1);
    return sum_all(inputs[0]);
  }
  if (kind == "mean") {
    want(1);
    return mean_all(inputs[0]);
  }
  if (kind == "relu") {
    want(1);
    return relu(inputs[0]);
  }
  if (kind == "gelu") {
    want(1);
    return gelu(inputs[0]);
  }
  if (kind == "sigmoid") {
    want(1);
    return sigmoid(inputs[0]);
  }
  if (kind == "softmax") {
    want(1);
    return softmax_rows(inputs[0]);
  }
  if (kind == "layer-norm") {
    want(3);
    return layer_norm_rows(inputs[0], inputs[1], inputs[2]);
  }
  if (kind == "embedding-lookup") {
    want(2);
    std::vector<int> idx(inputs[1].data().size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(inputs[1].data()[i]);
    return embedding(inputs[0], idx);
  }
  throw ConfigError("unknown primitive id: " + std::string(kind));
}

}  // namespace ops

}  // namespace bevplan
