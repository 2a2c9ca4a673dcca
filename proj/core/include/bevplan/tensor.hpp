#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "bevplan/common.hpp"

namespace bevplan {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until first accumulation

  void accumulate(const std::vector<double>& g);
  std::vector<double>& grad_buffer();
};

}  // namespace detail

// A dense row-major tensor. Values are computed in 64-bit floats; the
// training path keeps parameters representable in 32 bits so checkpoints
// roundtrip bitwise (see ParameterSet).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from_data(Shape shape, std::vector<double> data);
  static Tensor scalar(double value);
  // A gradient-tracked leaf (parameter or differentiable input).
  static Tensor leaf(Shape shape, std::vector<double> data, bool requires_grad = true);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return shape_numel(node_->shape); }

  const std::vector<double>& data() const { return node_->data; }
  // In-place mutation is only legal for leaves outside any recorded graph
  // (parameter loading, optimizer updates).
  std::vector<double>& mutable_data() { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<double>& grad() const;
  void zero_grad();

  double item() const;

  // A copy that shares no graph history and never requires grad.
  Tensor detach() const;

  std::shared_ptr<detail::TensorNode> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::TensorNode> node_;
  friend class Tape;
  friend Tensor make_op_output(Shape, std::vector<double>, const std::vector<Tensor>&,
                               std::function<void(const std::vector<double>&)>);
};

// Define-by-run tape. One tape per thread of execution; independent tapes may
// run on different threads. While a TapeScope is alive, primitives whose
// inputs require grad are recorded.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Reverse sweep from a scalar loss. Accumulates into every reachable
  // requires_grad leaf. Returns the number of leaves that received gradient.
  // strict: throw if the loss is detached from this tape.
  int backward(const Tensor& loss, bool strict = true);

  size_t size() const { return nodes_.size(); }
  void clear();

 private:
  friend class TapeScope;
  friend Tensor make_op_output(Shape, std::vector<double>, const std::vector<Tensor>&,
                               std::function<void(const std::vector<double>&)>);
  struct Record {
    std::vector<std::shared_ptr<detail::TensorNode>> inputs;
    std::shared_ptr<detail::TensorNode> output;
    std::function<void(const std::vector<double>&)> backward;  // takes d(out)
  };
  std::vector<Record> nodes_;
  bool consumed_ = false;
};

struct TapeScope {
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
};

Tape* active_tape();

// Low-level constructor for custom differentiable ops: creates the output
// tensor and, when a tape is active and an input requires grad, records the
// backward closure (called with d(out), expected to accumulate into inputs).
Tensor make_op_output(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                      std::function<void(const std::vector<double>&)> backward);

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// [m x n] + row vector [n]
Tensor add_rowvec(const Tensor& a, const Tensor& v);
// [m x n] * column vector [m x 1], broadcast across columns
Tensor mul_colvec(const Tensor& a, const Tensor& v);
// k * t + b with scalar constants
Tensor affine(const Tensor& t, double k, double b);
Tensor scale(const Tensor& t, double k);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice_rows(const Tensor& t, int start, int len);
Tensor slice_cols(const Tensor& t, int start, int len);
Tensor transpose(const Tensor& t);
Tensor reshape(const Tensor& t, Shape shape);

Tensor sum_all(const Tensor& t);
Tensor mean_all(const Tensor& t);
// axis 0: [m x n] -> [n]; axis 1: [m x n] -> [m]
Tensor sum_axis(const Tensor& t, int axis);
Tensor mean_axis(const Tensor& t, int axis);
// Sum/mean of consecutive row groups: [g*G x n] -> [G x n]
Tensor segment_sum_rows(const Tensor& t, int group);
Tensor segment_mean_rows(const Tensor& t, int group);

Tensor relu(const Tensor& t);
Tensor gelu(const Tensor& t);
Tensor sigmoid(const Tensor& t);
Tensor log(const Tensor& t);
Tensor abs(const Tensor& t);
Tensor atan2(const Tensor& y, const Tensor& x);
// Wraps each element to (-pi, pi]; gradient passes through unchanged.
Tensor wrap_angle(const Tensor& t);
// Clamp to [lo, hi]; gradient is zero outside the interval.
Tensor clamp(const Tensor& t, double lo, double hi);

// Rows sum to one; max-subtracted for stability.
Tensor softmax_rows(const Tensor& t);
// Normalization over the last axis, epsilon 1e-5, learnable affine.
Tensor layer_norm_rows(const Tensor& t, const Tensor& gamma, const Tensor& beta);

// Row gather: out[i] = table[indices[i]]. Backward scatter-adds into table.
Tensor embedding(const Tensor& table, const std::vector<int>& indices);

// grid: [H x W x C], points: [n x 2] continuous (row, col). Out-of-range
// points clamp to the border. Differentiable w.r.t. grid and points.
Tensor bilinear_sample(const Tensor& grid, const Tensor& points);

// Zero-pads the two leading spatial dims of [H x W x C].
Tensor pad_hw(const Tensor& grid, int pad);

// Dispatch by primitive id; the ids cover the baseline primitive set.
// Unknown ids raise ConfigError.
Tensor primitive_forward(std::string_view kind, const std::vector<Tensor>& inputs);

}  // namespace ops

}  // namespace bevplan
