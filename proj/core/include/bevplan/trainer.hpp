#pragma once

#include <functional>
#include <ostream>
#include <vector>

#include "bevplan/config.hpp"
#include "bevplan/optimizer.hpp"
#include "bevplan/planner.hpp"

namespace bevplan {

// Two-stage optimization: stage 1 trains perception only; stage 2 trains
// planning end to end (perception stays trainable unless frozen in the
// settings). Single-threaded and deterministic in (dataset, seed).
class Trainer {
 public:
  Trainer(Planner& planner, const TrainSettings& settings, uint64_t seed,
          std::ostream* metrics_log = nullptr);

  struct Result {
    double first_loss = 0.0;
    double final_loss = 0.0;
    int64_t steps = 0;
  };

  Result run_stage1(const std::vector<SceneSample>& scenes);
  Result run_stage2(const std::vector<SceneSample>& scenes);

  AdamW& optimizer() { return opt_; }
  // Progress callback, called once per optimizer step with (step, loss).
  void set_progress(std::function<void(int64_t, double)> cb) { progress_ = std::move(cb); }

 private:
  Result run_epochs(const std::vector<SceneSample>& scenes, int epochs, int stage);

  Planner& planner_;
  TrainSettings settings_;
  uint64_t seed_;
  std::ostream* log_;
  AdamW opt_;
  std::function<void(int64_t, double)> progress_;
};

}  // namespace bevplan
