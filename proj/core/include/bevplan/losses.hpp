#pragma once

#include "bevplan/backbone.hpp"
#include "bevplan/scene.hpp"
#include "bevplan/tensor.hpp"
#include "bevplan/trajectory.hpp"

namespace bevplan {

// Loss weights; defaults are the fixed training configuration.
struct LossWeights {
  double w_seg = 14.0;
  double w_type = 10.0;
  double w_box = 1.0;
  double w_cls = 10.0;
  double w_reg = 8.0;
  double w_pro = 12.0;
  double w_ref = 12.0;
  double w_perc = 1.0;
};

// Winner-takes-all: argmin of summed L1 distance over (x, y) points; ties
// break toward the lowest index. candidates: [K x 16] meters.
int wta_select(const Tensor& candidates, const Trajectory& target);

// Derives per-point headings from a flattened [n x 16] trajectory tensor by
// forward differences (last point copies the previous); stays on the tape.
Tensor headings_from_flat(const Tensor& flat_xy);

// Summed L1 over (x, y, heading), heading differences wrapped to (-pi, pi].
// winner_flat: [1 x 16] meters.
Tensor reg_loss(const Tensor& winner_flat, const Trajectory& target);

// Binary cross-entropy against a one-hot winner over all K candidates.
// Probabilities are clamped to [1e-7, 1 - 1e-7]. probs: [K x 1].
Tensor cls_loss(const Tensor& probs, int winner);

struct PlanningLoss {
  Tensor total;
  int winner = -1;
  double reg_value = 0.0;
  double cls_value = 0.0;
};

// w_reg * L_reg + w_cls * L_cls with the winner chosen on the stage's own
// candidates.
PlanningLoss planning_loss(const Tensor& candidates_flat, const Tensor& probs,
                           const Trajectory& target, const LossWeights& weights);

// Ground-truth per-cell labels from the raster planes, priority
// vehicle > centerline > walkway > road; cells with no plane bit are
// excluded from the segmentation loss (label 255).
std::vector<uint8_t> seg_targets(const RasterStack& raster);

Tensor seg_loss(const Tensor& seg_logits, const std::vector<uint8_t>& targets);

struct PerceptionLoss {
  Tensor total;
  double seg_value = 0.0;
  double type_value = 0.0;
  double box_value = 0.0;
};

PerceptionLoss perception_loss(const Tensor& seg_logits, const DetOutput& det,
                               const SceneSample& scene, const LossWeights& weights);

// w_pro * proposal + w_ref * refine + w_perc * perception.
Tensor total_loss(const Tensor& proposal_loss, const Tensor& refine_loss,
                  const Tensor& perception_loss, const LossWeights& weights);

}  // namespace bevplan
