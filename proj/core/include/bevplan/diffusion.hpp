#pragma once

#include <array>
#include <optional>
#include <vector>

#include "bevplan/model_config.hpp"
#include "bevplan/scene.hpp"
#include "bevplan/tensor.hpp"

namespace bevplan {

// Linear-beta schedule; alpha_bar[0] = 1 by convention, index t in [0, T].
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> beta;       // beta[t], t in [1, T]; beta[0] unused
  std::vector<double> alpha_bar;  // cumulative products, 64-bit accumulation

  static NoiseSchedule linear(int steps, double beta_lo = 1e-4, double beta_hi = 2e-2);
  double alpha_bar_at(int t) const;
};

// y_t = sqrt(abar_t) * y0 + sqrt(1 - abar_t) * eps, on normalized coords.
// Inputs with |coord| > 4 are rejected as unnormalized.
Tensor forward_noise(const Tensor& y0_norm, double alpha_bar_t, const Tensor& eps);

// Inverse of the forward equation given the true noise.
Tensor reconstruct_clean(const Tensor& y_t, const Tensor& eps, double alpha_bar_t);

// eps_hat derived analytically from an x0 prediction.
Tensor derive_epsilon(const Tensor& y_t, const Tensor& tau0, double alpha_bar_t);

// Connected semantic regions for one category, mapped onto the feature grid.
struct Region {
  std::vector<int> raster_cells;   // indices into the 64x64 label plane
  std::vector<int> feature_cells;  // indices into the 16x16 grid, capped
};

struct CategoryRegions {
  std::vector<Region> regions;
  std::vector<int> gather_cells;           // all regions' feature cells, concatenated
  std::array<uint8_t, kFeatGridSize * kFeatGridSize> mask16{};
  bool empty() const { return gather_cells.empty(); }
};

struct RegionSet {
  CategoryRegions drivable;      // road + centerline labels
  CategoryRegions participants;  // vehicle label (all dynamic agents)
};

// 4-connected components over the argmax label plane; each region's cells
// map to the feature grid by membership max-pool, capped by uniform
// subsampling.
RegionSet extract_regions(const std::vector<uint8_t>& labels, int region_cell_cap = 64);

// Maps [K x 16] normalized trajectories to continuous feature-grid
// reference coordinates [K*8 x 2]; differentiable.
Tensor trajectory_feature_points(const Tensor& y_norm, double coord_norm);

// Global cross-attention over region features, local deformable attention
// with trajectory-adaptive references, sigmoid-gated fusion. The local path
// samples the full feature grid with values zeroed outside the category
// mask; with no regions it falls back to raw features and bypasses the gate.
class SemanticInteractionBlock {
 public:
  SemanticInteractionBlock() = default;
  SemanticInteractionBlock(ParameterSet& ps, const std::string& name, const ModelConfig& cfg,
                           Rng& rng);

  struct Paths {
    Tensor global_path;  // Q_c
    Tensor local_path;   // Q_d
    Tensor gate;         // sigmoid output, defined unless bypassed
    Tensor fused;        // block output
    bool gate_bypassed = false;
  };

  Paths forward_paths(const Tensor& queries, const Tensor& f_bev,
                      const CategoryRegions& regions, const Tensor& ref_points) const;
  Tensor operator()(const Tensor& queries, const Tensor& f_bev, const CategoryRegions& regions,
                    const Tensor& ref_points) const {
    return forward_paths(queries, f_bev, regions, ref_points).fused;
  }

  // Local deformable path over an arbitrary (possibly masked) grid.
  Tensor deform_attend(const Tensor& queries, const Tensor& grid, const Tensor& ref_points) const;

 private:
  ModelConfig cfg_;
  nn::MultiheadCrossAttention global_attn_;
  Tensor value_w_;   // [d x d], per-head column slices
  Tensor offset_w_;  // [d x heads*8*points*2], zero-initialized
  Tensor weight_w_;  // [d x heads*8*points]
  Tensor gate_w_;    // [2d x d]
  Tensor gate_b_;    // [d]
};

struct RefinedOutput {
  Tensor traj_norm;     // [K x 16] x0 prediction, normalized coords
  Tensor conf_logits;   // [K x 1]
  Tensor confidences;   // [K x 1], sigmoid
};

struct ConditioningBundle {
  Tensor f_bev;  // [16 x 16 x d]
  const RegionSet* regions = nullptr;
  Tensor planning_token;  // [1 x d]
  Tensor agent_tokens;    // [n_agent_tokens x d]
  Tensor ego_embed;       // [1 x d]
};

// Fine-grained denoising decoder: timestep embedding, spatial modulation,
// two semantic interaction stages (drivable then participants), agent and
// ego cross-attention, parallel trajectory/confidence heads.
class DenoiseDecoder {
 public:
  DenoiseDecoder(ParameterSet& ps, const ModelConfig& cfg, Rng& rng);

  Tensor encode_refiner_queries(const Tensor& y_norm) const;
  Tensor bev_modulation(const Tensor& queries, const Tensor& f_bev, const Tensor& y_norm) const;

  RefinedOutput forward(const Tensor& y_norm, int t, const ConditioningBundle& cond) const;

  const SemanticInteractionBlock& drivable_block() const { return sib_drivable_; }
  const SemanticInteractionBlock& participant_block() const { return sib_participants_; }

 private:
  ModelConfig cfg_;
  nn::Mlp query_mlp_;
  nn::Mlp modulation_mlp_;
  nn::LayerNorm mod_ln_;
  SemanticInteractionBlock sib_drivable_;
  SemanticInteractionBlock sib_participants_;
  nn::LayerNorm sib_drivable_ln_;
  nn::LayerNorm sib_participants_ln_;
  nn::CrossAttnBlock agent_attn_;
  nn::CrossAttnBlock ego_attn_;
  nn::FeedForwardBlock ffn_;
  nn::Mlp traj_head_;
  nn::Mlp conf_head_;
};

// Deterministic DDIM (eta = 0). Inference starts from the proposals without
// added noise at t_start; steps > 1 walks an evenly spaced sub-schedule down
// to 0, deriving eps_hat analytically from each x0 prediction.
RefinedOutput ddim_sample(const DenoiseDecoder& decoder, const NoiseSchedule& schedule,
                          const Tensor& start_norm, int t_start, int steps,
                          const ConditioningBundle& cond);

}  // namespace bevplan
