#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bevplan/nn.hpp"

namespace bevplan {

struct OptimizerConfig {
  double lr = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;  // decoupled
};

// Adam with bias correction and decoupled weight decay. In f32r precision
// parameters are rounded through float after each update so checkpoints
// roundtrip bitwise.
class AdamW {
 public:
  AdamW(ParameterSet& params, OptimizerConfig config);

  // Applies the update and clears gradients. strict: a trainable parameter
  // without gradient raises ContractError.
  void step(bool strict = false);

  int64_t step_count() const { return step_count_; }
  const OptimizerConfig& config() const { return config_; }

  struct Moments {
    std::vector<double> m, v;
  };
  const std::map<std::string, Moments>& moments() const { return moments_; }
  std::map<std::string, Moments>& moments() { return moments_; }
  void set_step_count(int64_t n) { step_count_ = n; }

 private:
  ParameterSet& params_;
  OptimizerConfig config_;
  std::map<std::string, Moments> moments_;
  int64_t step_count_ = 0;
};

}  // namespace bevplan
