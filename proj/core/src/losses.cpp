#include "bevplan/losses.hpp"

#include <cmath>
#include <limits>

namespace bevplan {

namespace {

constexpr double kProbClamp = 1e-7;

Tensor target_xy_tensor(const Trajectory& target) {
  std::vector<double> data(kHorizonSteps * 2);
  for (int i = 0; i < kHorizonSteps; ++i) {
    data[static_cast<size_t>(2 * i)] = target.points[static_cast<size_t>(i)].x;
    data[static_cast<size_t>(2 * i + 1)] = target.points[static_cast<size_t>(i)].y;
  }
  return Tensor::from_data({1, kHorizonSteps * 2}, std::move(data));
}

}  // namespace

int wta_select(const Tensor& candidates, const Trajectory& target) {
  if (candidates.rank() != 2 || candidates.dim(1) != kHorizonSteps * 2)
    throw ShapeError("wta_select: candidates must be [K x 16], got " +
                     shape_str(candidates.shape()));
  const int k = candidates.dim(0);
  if (k < 1) throw ContractError("wta_select: need at least one candidate");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int c = 0; c < k; ++c) {
    double d = 0.0;
    for (int i = 0; i < kHorizonSteps; ++i) {
      d += std::abs(candidates.data()[static_cast<size_t>(c) * 16 + 2 * i] -
                    target.points[static_cast<size_t>(i)].x);
      d += std::abs(candidates.data()[static_cast<size_t>(c) * 16 + 2 * i + 1] -
                    target.points[static_cast<size_t>(i)].y);
    }
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

Tensor headings_from_flat(const Tensor& flat_xy) {
  const int n = flat_xy.dim(0);
  Tensor pts = ops::reshape(flat_xy, {n * kHorizonSteps, 2});
  std::vector<Tensor> headings;
  headings.reserve(static_cast<size_t>(n));
  for (int r = 0; r < n; ++r) {
    Tensor p = ops::slice_rows(pts, r * kHorizonSteps, kHorizonSteps);
    Tensor d = ops::sub(ops::slice_rows(p, 1, kHorizonSteps - 1),
                        ops::slice_rows(p, 0, kHorizonSteps - 1));
    Tensor h = ops::atan2(ops::slice_cols(d, 1, 1), ops::slice_cols(d, 0, 1));
    Tensor last = ops::slice_rows(h, kHorizonSteps - 2, 1);
    headings.push_back(ops::reshape(ops::concat({h, last}, 0), {1, kHorizonSteps}));
  }
  return n == 1 ? headings[0] : ops::concat(headings, 0);
}

Tensor reg_loss(const Tensor& winner_flat, const Trajectory& target) {
  Tensor xy_err = ops::abs(ops::sub(winner_flat, target_xy_tensor(target)));
  Tensor pred_headings = headings_from_flat(winner_flat);  // [1 x 8]
  std::vector<double> th(kHorizonSteps);
  for (int i = 0; i < kHorizonSteps; ++i) th[static_cast<size_t>(i)] = target.points[static_cast<size_t>(i)].heading;
  Tensor target_h = Tensor::from_data({1, kHorizonSteps}, std::move(th));
  Tensor h_err = ops::abs(ops::wrap_angle(ops::sub(pred_headings, target_h)));
  return ops::add(ops::sum_all(xy_err), ops::sum_all(h_err));
}

Tensor cls_loss(const Tensor& probs, int winner) {
  const int k = probs.dim(0);
  if (winner < 0 || winner >= k) throw ContractError("cls_loss: winner index out of range");
  std::vector<double> onehot(static_cast<size_t>(k), 0.0);
  onehot[static_cast<size_t>(winner)] = 1.0;
  Tensor hot = Tensor::from_data({k, 1}, std::move(onehot));
  Tensor p = ops::clamp(probs, kProbClamp, 1.0 - kProbClamp);
  Tensor pos = ops::mul(hot, ops::log(p));
  Tensor neg = ops::mul(ops::affine(hot, -1.0, 1.0), ops::log(ops::affine(p, -1.0, 1.0)));
  return ops::scale(ops::sum_all(ops::add(pos, neg)), -1.0);
}

PlanningLoss planning_loss(const Tensor& candidates_flat, const Tensor& probs,
                           const Trajectory& target, const LossWeights& weights) {
  PlanningLoss out;
  out.winner = wta_select(candidates_flat, target);
  Tensor reg = reg_loss(ops::slice_rows(candidates_flat, out.winner, 1), target);
  Tensor cls = cls_loss(probs, out.winner);
  out.reg_value = reg.item();
  out.cls_value = cls.item();
  out.total = ops::add(ops::scale(reg, weights.w_reg), ops::scale(cls, weights.w_cls));
  return out;
}

std::vector<uint8_t> seg_targets(const RasterStack& raster) {
  std::vector<uint8_t> labels(static_cast<size_t>(kGridSize) * kGridSize, 255);
  for (int r = 0; r < kGridSize; ++r)
    for (int c = 0; c < kGridSize; ++c) {
      const size_t idx = static_cast<size_t>(r) * kGridSize + c;
      if (raster[kPlaneVehicle].at(r, c)) labels[idx] = kPlaneVehicle;
      else if (raster[kPlaneCenterline].at(r, c)) labels[idx] = kPlaneCenterline;
      else if (raster[kPlaneWalkway].at(r, c)) labels[idx] = kPlaneWalkway;
      else if (raster[kPlaneRoad].at(r, c)) labels[idx] = kPlaneRoad;
    }
  return labels;
}

Tensor seg_loss(const Tensor& seg_logits, const std::vector<uint8_t>& targets) {
  const int n = seg_logits.dim(0), c = seg_logits.dim(1);
  if (targets.size() != static_cast<size_t>(n))
    throw ShapeError("seg_loss: target count mismatch");
  std::vector<double> onehot(static_cast<size_t>(n) * c, 0.0);
  int labeled = 0;
  for (int i = 0; i < n; ++i) {
    if (targets[static_cast<size_t>(i)] == 255) continue;
    onehot[static_cast<size_t>(i) * c + targets[static_cast<size_t>(i)]] = 1.0;
    ++labeled;
  }
  if (labeled == 0) return Tensor::scalar(0.0);
  Tensor hot = Tensor::from_data({n, c}, std::move(onehot));
  Tensor logp = ops::log(ops::clamp(ops::softmax_rows(seg_logits), 1e-12, 1.0));
  return ops::scale(ops::sum_all(ops::mul(hot, logp)), -1.0 / labeled);
}

PerceptionLoss perception_loss(const Tensor& seg_logits, const DetOutput& det,
                               const SceneSample& scene, const LossWeights& weights) {
  PerceptionLoss out;
  Tensor seg = seg_loss(seg_logits, seg_targets(scene.raster));

  const DetMatch match = Backbone::greedy_match(det, scene.agents);
  const int n_tokens = det.existence_logits.dim(0);
  const int n_classes = det.class_logits.dim(1);

  // Existence BCE over every token.
  std::vector<double> exist(static_cast<size_t>(n_tokens), 0.0);
  for (int t = 0; t < n_tokens; ++t)
    if (match.agent_of_token[static_cast<size_t>(t)] >= 0) exist[static_cast<size_t>(t)] = 1.0;
  Tensor exist_target = Tensor::from_data({n_tokens, 1}, std::move(exist));
  Tensor p = ops::clamp(ops::sigmoid(det.existence_logits), kProbClamp, 1.0 - kProbClamp);
  Tensor bce = ops::add(
      ops::mul(exist_target, ops::log(p)),
      ops::mul(ops::affine(exist_target, -1.0, 1.0), ops::log(ops::affine(p, -1.0, 1.0))));
  Tensor type = ops::scale(ops::mean_all(bce), -1.0);

  // Class cross-entropy and box L1 over matched tokens.
  Tensor box = Tensor::scalar(0.0);
  int n_matched = 0;
  std::vector<double> class_hot(static_cast<size_t>(n_tokens) * n_classes, 0.0);
  for (int t = 0; t < n_tokens; ++t) {
    const int a = match.agent_of_token[static_cast<size_t>(t)];
    if (a < 0) continue;
    ++n_matched;
    class_hot[static_cast<size_t>(t) * n_classes + static_cast<int>(scene.agents[static_cast<size_t>(a)].cls)] = 1.0;
    const AgentState& agent = scene.agents[static_cast<size_t>(a)];
    Tensor center = ops::slice_rows(det.centers, t, 1);
    Tensor target = Tensor::from_data({1, 2}, {agent.pos.x, agent.pos.y});
    Tensor heading = ops::slice_rows(det.headings, t, 1);
    Tensor h_target = Tensor::from_data({1, 1}, {agent.heading});
    Tensor err = ops::sum_all(ops::abs(ops::sub(center, target)));
    Tensor herr = ops::sum_all(ops::abs(ops::wrap_angle(ops::sub(heading, h_target))));
    box = ops::add(box, ops::add(err, herr));
  }
  if (n_matched > 0) {
    box = ops::scale(box, 1.0 / n_matched);
    Tensor hot = Tensor::from_data({n_tokens, n_classes}, std::move(class_hot));
    Tensor logp = ops::log(ops::clamp(ops::softmax_rows(det.class_logits), 1e-12, 1.0));
    Tensor cls_ce = ops::scale(ops::sum_all(ops::mul(hot, logp)), -1.0 / n_matched);
    type = ops::add(type, cls_ce);
  }

  out.seg_value = seg.item();
  out.type_value = type.item();
  out.box_value = box.item();
  out.total = ops::add(ops::add(ops::scale(seg, weights.w_seg), ops::scale(type, weights.w_type)),
                       ops::scale(box, weights.w_box));
  return out;
}

Tensor total_loss(const Tensor& proposal_loss, const Tensor& refine_loss,
                  const Tensor& perception_loss, const LossWeights& weights) {
  return ops::add(ops::add(ops::scale(proposal_loss, weights.w_pro),
                           ops::scale(refine_loss, weights.w_ref)),
                  ops::scale(perception_loss, weights.w_perc));
}

}  // namespace bevplan
