#pragma once

#include <memory>
#include <vector>

#include "bevplan/backbone.hpp"
#include "bevplan/diffusion.hpp"
#include "bevplan/proposal.hpp"

namespace bevplan {

// Full coarse-to-fine pipeline: backbone -> proposal decoder -> diffusion
// refiner, sharing one parameter set.
class Planner {
 public:
  Planner(const ModelConfig& cfg, AnchorVocabulary vocab, uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  const AnchorVocabulary& vocab() const { return vocab_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const Backbone& backbone() const { return *backbone_; }
  const DenoiseDecoder& decoder() const { return *decoder_; }

  struct TrainForward {
    Tensor seg_logits;
    DetOutput det;
    TokenSet tokens;
    ProposalDecoder::Output proposal;
    RefinedOutput refined;
    Tensor proposals_meters;  // [K x 16]
    Tensor refined_meters;    // [K x 16]
    int timestep = 0;
    RegionSet regions;
    bool has_planning = true;
  };

  // Training-mode forward through every stage; timestep and noise are drawn
  // from rng. perception_only skips both planning stages (stage-1 training).
  TrainForward train_forward(const SceneSample& scene, Rng& rng,
                             bool perception_only = false) const;

  struct Plan {
    Trajectory best;
    int best_index = 0;
    std::vector<Trajectory> candidates;
    std::vector<double> confidences;
    Trajectory proposal_best;
    int proposal_best_index = 0;
    std::vector<Trajectory> proposal_candidates;
    std::vector<double> proposal_scores;
  };

  // Inference; steps selects the DDIM step count (>= 1). With the refiner
  // disabled the proposal stage's argmax-score candidate is the final plan.
  // The pure-noise variant draws its start from noise_rng (required then).
  Plan plan(const SceneSample& scene, int steps, Rng* noise_rng = nullptr) const;

  // Freeze/unfreeze perception weights (stage-2 variant).
  void set_perception_trainable(bool trainable);

 private:
  Tensor normalized(const Tensor& meters) const;
  Tensor denormalized(const Tensor& norm) const;

  ModelConfig cfg_;
  AnchorVocabulary vocab_;
  ParameterSet params_;
  NoiseSchedule schedule_;
  std::unique_ptr<Backbone> backbone_;
  std::unique_ptr<ProposalDecoder> proposal_;
  std::unique_ptr<DenoiseDecoder> decoder_;
  Tensor anchor_points_;  // [K x 16], constant
};

// Trajectories from a flattened [K x 16] meter tensor, headings by forward
// differences.
std::vector<Trajectory> trajectories_from_flat(const Tensor& flat_meters);

}  // namespace bevplan
