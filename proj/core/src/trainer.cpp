#include "bevplan/trainer.hpp"

#include <cmath>

#include "bevplan/losses.hpp"

namespace bevplan {

Trainer::Trainer(Planner& planner, const TrainSettings& settings, uint64_t seed,
                 std::ostream* metrics_log)
    : planner_(planner), settings_(settings), seed_(seed), log_(metrics_log),
      opt_(planner.params(), settings.opt) {}

Trainer::Result Trainer::run_stage1(const std::vector<SceneSample>& scenes) {
  return run_epochs(scenes, settings_.epochs_stage1, 1);
}

Trainer::Result Trainer::run_stage2(const std::vector<SceneSample>& scenes) {
  if (settings_.freeze_perception) planner_.set_perception_trainable(false);
  Result result = run_epochs(scenes, settings_.epochs_stage2, 2);
  if (settings_.freeze_perception) planner_.set_perception_trainable(true);
  return result;
}

Trainer::Result Trainer::run_epochs(const std::vector<SceneSample>& scenes, int epochs,
                                    int stage) {
  if (scenes.empty()) throw ContractError("trainer: empty dataset");
  Result result;
  Rng rng(seed_ ^ (stage == 1 ? 0x57a6e1ull : 0x57a6e2ull));
  const LossWeights& w = settings_.weights;
  const int batch = std::max(1, settings_.batch_size);

  std::vector<size_t> order(scenes.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  int in_batch = 0;
  double batch_loss = 0.0, batch_pro = 0.0, batch_ref = 0.0, batch_perc = 0.0;
  bool first_recorded = false;

  auto flush_batch = [&]() {
    if (in_batch == 0) return;
    opt_.step();
    ++result.steps;
    const double mean_loss = batch_loss / in_batch;
    if (!std::isfinite(mean_loss))
      throw NumericError("trainer: non-finite loss at step " + std::to_string(result.steps));
    if (!first_recorded) {
      result.first_loss = mean_loss;
      first_recorded = true;
    }
    result.final_loss = mean_loss;
    if (log_ != nullptr)
      (*log_) << "step=" << result.steps << " stage=" << stage << " loss=" << mean_loss
              << " loss_pro=" << batch_pro / in_batch << " loss_ref=" << batch_ref / in_batch
              << " loss_perc=" << batch_perc / in_batch << " lr=" << settings_.opt.lr << "\n";
    if (progress_) progress_(result.steps, mean_loss);
    in_batch = 0;
    batch_loss = batch_pro = batch_ref = batch_perc = 0.0;
  };

  for (int epoch = 0; epoch < epochs; ++epoch) {
    // Deterministic Fisher-Yates shuffle per epoch.
    for (size_t i = order.size(); i > 1; --i) {
      const size_t j = rng.uniform_index(i);
      std::swap(order[i - 1], order[j]);
    }
    for (size_t idx : order) {
      const SceneSample& scene = scenes[idx];
      Tape tape;
      {
        TapeScope scope(tape);
        Planner::TrainForward fwd =
            planner_.train_forward(scene, rng, /*perception_only=*/stage == 1);
        PerceptionLoss perc = perception_loss(fwd.seg_logits, fwd.det, scene, w);
        Tensor loss;
        if (stage == 1 || !fwd.has_planning) {
          loss = perc.total;
          batch_perc += perc.total.item();
        } else {
          PlanningLoss pro = planning_loss(fwd.proposals_meters, fwd.proposal.scores,
                                           scene.expert, w);
          Tensor ref_total = Tensor::scalar(0.0);
          if (planner_.config().use_refiner) {
            PlanningLoss ref = planning_loss(fwd.refined_meters, fwd.refined.confidences,
                                             scene.expert, w);
            ref_total = ref.total;
          }
          loss = total_loss(pro.total, ref_total, perc.total, w);
          batch_pro += pro.total.item();
          batch_ref += ref_total.item();
          batch_perc += perc.total.item();
        }
        batch_loss += loss.item();
        // Average gradients over the batch.
        tape.backward(ops::scale(loss, 1.0 / batch));
      }
      if (++in_batch == batch) flush_batch();
    }
    flush_batch();  // epoch remainder
  }
  return result;
}

}  // namespace bevplan
