#pragma once

#include <vector>

#include "bevplan/model_config.hpp"
#include "bevplan/scene.hpp"
#include "bevplan/tensor.hpp"

namespace bevplan {

struct TokenSet {
  Tensor planning;  // [1 x d]
  Tensor agents;    // [n_agent_tokens x d]
};

struct DetOutput {
  Tensor existence_logits;  // [n x 1]
  Tensor centers;           // [n x 2], meters
  Tensor headings;          // [n x 1]
  Tensor class_logits;      // [n x num_classes]
};

// token <-> ground-truth agent pairing used by the detection loss.
struct DetMatch {
  std::vector<int> agent_of_token;  // -1 for "no object"
};

// Encodes the rasterized scene and ego status into BEV features, semantics,
// detections, and planning/agent tokens.
class Backbone {
 public:
  Backbone(ParameterSet& ps, const ModelConfig& cfg, Rng& rng);

  // [16 x 16 x d] feature grid.
  Tensor encode_bev(const RasterStack& raster, const EgoStatus& ego) const;
  Tensor ego_embedding(const EgoStatus& ego) const;  // [1 x d]

  // Per-cell class logits over the full raster: [kGridSize^2 x 4].
  Tensor seg_logits(const Tensor& f_bev) const;

  // kv rows for the token decoder: positionally encoded BEV cells plus the
  // embedded ego status (last row).
  Tensor build_token_kv(const Tensor& f_bev, const EgoStatus& ego) const;
  TokenSet decode_tokens_from(const Tensor& kv) const;
  TokenSet token_decoder(const Tensor& f_bev, const EgoStatus& ego) const;

  DetOutput det_head(const Tensor& agent_tokens) const;

  static std::vector<uint8_t> argmax_labels(const Tensor& seg_logits);

  // Greedy nearest-center matching within the gate; ground-truth agents left
  // over are bootstrapped onto the nearest free token so the box loss always
  // has a signal.
  static DetMatch greedy_match(const DetOutput& det, const std::vector<AgentState>& agents,
                               double gate_m = 2.0);

  static Tensor raster_tensor(const RasterStack& raster);
  static Tensor ego_vector(const EgoStatus& ego);  // [1 x 5]

 private:
  ModelConfig cfg_;
  nn::Conv3x3 conv1_, conv2_, conv3_;
  nn::Mlp ego_mlp_;
  nn::Linear seg_proj_;
  Tensor queries_;  // [(1 + n_agent_tokens) x d]
  std::vector<nn::CrossAttnBlock> token_attn_;
  std::vector<nn::FeedForwardBlock> token_ffn_;
  nn::Mlp det_mlp_;
  Tensor cell_pos_enc_;  // constant [256 x d]
  Tensor upsample_points_;  // constant [kGridSize^2 x 2] feature coords
};

}  // namespace bevplan
