#pragma once

#include "bevplan/anchors.hpp"
#include "bevplan/model_config.hpp"
#include "bevplan/tensor.hpp"

namespace bevplan {

// Flattened [K x 16] anchor tensor in meters, order (x0, y0, x1, y1, ...).
Tensor anchors_tensor(const AnchorVocabulary& vocab);

// Stage one: adjusts the anchor vocabulary into coarse proposals with
// scores. One cross-attention layer against the planning token plus two
// parallel heads; deliberately lightweight.
class ProposalDecoder {
 public:
  ProposalDecoder(ParameterSet& ps, const ModelConfig& cfg, Rng& rng);

  // Per-point sinusoidal encoding, concatenated over the 8 points, projected
  // to d, then cross-attended against the planning token (single key-value).
  Tensor encode_anchor_queries(const Tensor& anchor_points, const Tensor& planning_token) const;

  struct Output {
    Tensor offsets;       // [K x 16]
    Tensor score_logits;  // [K x 1]
    Tensor scores;        // [K x 1], sigmoid
    Tensor proposals;     // [K x 16] = anchors + offsets, meters
  };
  Output decode(const Tensor& queries, const Tensor& anchor_points) const;

  Output operator()(const Tensor& anchor_points, const Tensor& planning_token) const {
    return decode(encode_anchor_queries(anchor_points, planning_token), anchor_points);
  }

 private:
  ModelConfig cfg_;
  nn::Mlp anchor_mlp_;
  nn::CrossAttnBlock context_;
  nn::Mlp offset_head_;
  nn::Mlp score_head_;
};

// Shared by both stages: [K x 16] trajectories -> per-point encoding
// concatenated to [K x 8*point_enc_dim].
Tensor encode_trajectory_points(const Tensor& flat_xy, int point_enc_dim);

}  // namespace bevplan
