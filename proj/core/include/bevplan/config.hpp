#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "bevplan/losses.hpp"
#include "bevplan/model_config.hpp"
#include "bevplan/optimizer.hpp"
#include "bevplan/scene.hpp"

namespace bevplan {

// Training-loop settings parsed from the config file.
struct TrainSettings {
  int epochs_stage1 = 4;
  int epochs_stage2 = 10;
  int batch_size = 16;
  bool freeze_perception = false;
  OptimizerConfig opt;
  LossWeights weights;
};

// Closed-loop/evaluation knobs that are configurable rather than frozen.
struct EvalSettings {
  double ec_threshold = 0.5;   // m, mean L2 over the 7 overlapping points
  double replan_period = 0.5;  // s
  double episode_horizon = 12.0;  // s
};

// UTF-8 key = value configuration with '#' comments. Unknown keys are
// rejected. The digest is a 64-bit FNV-1a over the canonicalized (sorted)
// text, so it is stable under key reordering; seeds and paths are CLI flags
// and never enter the digest.
class RunConfig {
 public:
  static RunConfig defaults();
  static RunConfig from_file(const std::string& path);
  static RunConfig from_text(const std::string& text);

  std::string canonical_text() const;
  uint64_t digest() const;

  const std::string& str(const std::string& key) const;
  double number(const std::string& key) const;
  int integer(const std::string& key) const;
  bool flag(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  ModelConfig model() const;
  GenConfig gen() const;
  TrainSettings train() const;
  EvalSettings eval() const;

 private:
  std::map<std::string, std::string> values_;
};

uint64_t fnv1a64(const std::string& text);

}  // namespace bevplan
