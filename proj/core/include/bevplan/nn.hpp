#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bevplan/rng.hpp"
#include "bevplan/tensor.hpp"

namespace bevplan {

// f32r keeps every parameter value exactly representable in 32 bits (values
// pass through a float round after init and after each optimizer step), so
// the 32-bit checkpoint payload roundtrips bitwise. f64 is for gradient
// checking, where finite differences need full precision.
enum class Precision { f32r, f64 };

struct Init {
  enum Kind { kZero, kConstant, kXavier, kNormal } kind = kZero;
  double value = 0.0;  // constant value or normal stddev

  static Init zero() { return {kZero, 0.0}; }
  static Init constant(double v) { return {kConstant, v}; }
  static Init xavier() { return {kXavier, 0.0}; }
  static Init normal(double stddev) { return {kNormal, stddev}; }
};

// Named map of trainable tensors. Iteration is lexicographic, which fixes
// the order of optimizer updates and serialization.
class ParameterSet {
 public:
  explicit ParameterSet(Precision precision = Precision::f32r) : precision_(precision) {}

  Tensor create(const std::string& name, Shape shape, Init init, Rng& rng,
                bool requires_grad = true);
  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) != 0; }
  const std::map<std::string, Tensor>& all() const { return params_; }
  std::map<std::string, Tensor>& all() { return params_; }

  void zero_grads();
  int64_t scalar_count() const;
  Precision precision() const { return precision_; }

  static double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

 private:
  std::map<std::string, Tensor> params_;
  Precision precision_;
};

namespace nn {

// Per-coordinate interleaved sin/cos over a geometric frequency ladder
// (base 10000). coords: [n x c], d_model must be divisible by 2c.
// Differentiable with respect to coords.
Tensor sinusoidal_positional_encoding(const Tensor& coords, int d_model);

struct Linear {
  Tensor w;  // [in x out]
  Tensor b;  // [out]

  static Linear create(ParameterSet& ps, const std::string& name, int in, int out, Rng& rng,
                       Init weight_init = Init::xavier());
  Tensor operator()(const Tensor& x) const;
  int out_features() const { return w.dim(1); }
};

struct Mlp {
  Linear l1, l2;

  static Mlp create(ParameterSet& ps, const std::string& name, int in, int hidden, int out,
                    Rng& rng, Init out_init = Init::xavier());
  Tensor operator()(const Tensor& x) const;
};

struct LayerNorm {
  Tensor gamma, beta;

  static LayerNorm create(ParameterSet& ps, const std::string& name, int dim, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

// Scaled dot-product attention with per-head column splits and an output
// projection; no projection biases. Empty key-value context is an error;
// callers with possibly-empty contexts must substitute a fallback.
struct MultiheadCrossAttention {
  Tensor wq, wk, wv, wo;  // all [d x d]
  int heads = 1;

  static MultiheadCrossAttention create(ParameterSet& ps, const std::string& name, int d,
                                        int heads, Rng& rng);
  Tensor operator()(const Tensor& query, const Tensor& key_value) const;
};

// Residual cross-attention block: LN(x + Attn(x, kv)).
struct CrossAttnBlock {
  MultiheadCrossAttention attn;
  LayerNorm ln;

  static CrossAttnBlock create(ParameterSet& ps, const std::string& name, int d, int heads,
                               Rng& rng);
  Tensor operator()(const Tensor& x, const Tensor& kv) const;
};

// Residual feed-forward block: LN(x + MLP(x)).
struct FeedForwardBlock {
  Mlp mlp;
  LayerNorm ln;

  static FeedForwardBlock create(ParameterSet& ps, const std::string& name, int d, int hidden,
                                 Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

// 3x3 convolution over [H x W x Cin] with zero padding 1, realized as nine
// row gathers plus one matmul. weight: [9*Cin x Cout].
struct Conv3x3 {
  Tensor w;
  Tensor b;
  int stride = 1;

  static Conv3x3 create(ParameterSet& ps, const std::string& name, int cin, int cout, int stride,
                        Rng& rng, Init weight_init = Init::xavier());
  Tensor operator()(const Tensor& grid) const;
  int out_channels() const { return w.dim(1); }
};

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  int64_t checked = 0;
  bool finite = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;
  bool numerically_unstable = false;

  double max_rel_err() const;
  bool passed() const;
};

// Compares tape gradients of a scalar-valued fragment against central finite
// differences (step 1e-5, scaled by parameter magnitude). Parameters with
// requires_grad = false are excluded. max_entries 0 checks every element;
// otherwise a deterministic stride subsample per tensor.
GradCheckReport grad_check(const std::function<Tensor()>& fragment, ParameterSet& params,
                           double tolerance, int64_t max_entries = 0);

}  // namespace nn

}  // namespace bevplan
