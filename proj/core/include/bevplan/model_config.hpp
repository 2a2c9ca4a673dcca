#pragma once

#include "bevplan/nn.hpp"

namespace bevplan {

// Structural hyperparameters shared by every learned module. Fields map 1:1
// onto config-file keys (see config.hpp); the digest of these keys gates
// checkpoint/dataset compatibility.
struct ModelConfig {
  int d_model = 64;
  int heads = 4;
  int n_agent_tokens = 8;
  int k = 20;  // trajectory candidates; must equal the vocabulary size
  int token_layers = 2;
  int conv_c1 = 16;
  int conv_c2 = 32;
  int point_enc_dim = 16;  // per-point sinusoidal width (x and y)

  // Diffusion schedule: linear beta over T steps.
  int diffusion_steps = 50;
  double beta_lo = 1e-4;
  double beta_hi = 2e-2;
  // Effective starting timestep when inference begins from noise-free
  // proposals (round(T/5) by default; exposed as a config knob).
  int t_start = 10;
  double coord_norm = 32.0;  // meters; trajectory normalization before noising

  int deform_points = 4;    // sampling points per reference point and head
  int region_cell_cap = 64;

  // Ablation wiring.
  bool use_refiner = true;
  bool use_proposal = true;  // false: pure-noise initialization variant
  bool use_fgsim = true;     // semantic interaction blocks
  bool use_modulation = true;

  Precision precision = Precision::f32r;

  int num_classes = 2;  // vehicle, pedestrian
};

}  // namespace bevplan
