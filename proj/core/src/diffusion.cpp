#include "bevplan/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace bevplan {

NoiseSchedule NoiseSchedule::linear(int steps, double beta_lo, double beta_hi) {
  if (steps < 1) throw ConfigError("noise schedule: T must be >= 1");
  NoiseSchedule s;
  s.steps = steps;
  s.beta.assign(static_cast<size_t>(steps) + 1, 0.0);
  s.alpha_bar.assign(static_cast<size_t>(steps) + 1, 1.0);
  double prod = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
    const double beta = beta_lo + (beta_hi - beta_lo) * frac;
    s.beta[static_cast<size_t>(t)] = beta;
    prod *= 1.0 - beta;
    s.alpha_bar[static_cast<size_t>(t)] = prod;
  }
  return s;
}

double NoiseSchedule::alpha_bar_at(int t) const {
  if (t < 0 || t > steps)
    throw ContractError("noise schedule: t " + std::to_string(t) + " outside [0, " +
                        std::to_string(steps) + "]");
  return alpha_bar[static_cast<size_t>(t)];
}

namespace {

void check_normalized(const Tensor& y, const char* op) {
  for (double v : y.data())
    if (std::abs(v) > 4.0)
      throw ContractError(std::string(op) + ": input looks unnormalized (|coord| > 4)");
}

}  // namespace

Tensor forward_noise(const Tensor& y0_norm, double alpha_bar_t, const Tensor& eps) {
  if (y0_norm.shape() != eps.shape())
    throw ShapeError("forward_noise: shape mismatch " + shape_str(y0_norm.shape()) + " vs " +
                     shape_str(eps.shape()));
  check_normalized(y0_norm, "forward_noise");
  const double a = std::sqrt(alpha_bar_t);
  const double b = std::sqrt(1.0 - alpha_bar_t);
  return ops::add(ops::scale(y0_norm, a), ops::scale(eps, b));
}

Tensor reconstruct_clean(const Tensor& y_t, const Tensor& eps, double alpha_bar_t) {
  const double a = std::sqrt(alpha_bar_t);
  const double b = std::sqrt(1.0 - alpha_bar_t);
  return ops::scale(ops::sub(y_t, ops::scale(eps, b)), 1.0 / a);
}

Tensor derive_epsilon(const Tensor& y_t, const Tensor& tau0, double alpha_bar_t) {
  const double a = std::sqrt(alpha_bar_t);
  const double b = std::sqrt(1.0 - alpha_bar_t);
  return ops::scale(ops::sub(y_t, ops::scale(tau0, a)), 1.0 / b);
}

RegionSet extract_regions(const std::vector<uint8_t>& labels, int region_cell_cap) {
  if (labels.size() != static_cast<size_t>(kGridSize) * kGridSize)
    throw ShapeError("extract_regions: label plane must have " +
                     std::to_string(kGridSize * kGridSize) + " cells");

  auto extract_category = [&](auto in_category) {
    CategoryRegions out;
    std::vector<uint8_t> visited(labels.size(), 0);
    for (int start = 0; start < kGridSize * kGridSize; ++start) {
      if (visited[static_cast<size_t>(start)] || !in_category(labels[static_cast<size_t>(start)]))
        continue;
      // 4-connected flood fill from this cell.
      Region region;
      std::deque<int> frontier{start};
      visited[static_cast<size_t>(start)] = 1;
      while (!frontier.empty()) {
        const int cell = frontier.front();
        frontier.pop_front();
        region.raster_cells.push_back(cell);
        const int r = cell / kGridSize, c = cell % kGridSize;
        const int nbr[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
        for (const auto& n : nbr) {
          if (n[0] < 0 || n[0] >= kGridSize || n[1] < 0 || n[1] >= kGridSize) continue;
          const int idx = n[0] * kGridSize + n[1];
          if (visited[static_cast<size_t>(idx)] || !in_category(labels[static_cast<size_t>(idx)]))
            continue;
          visited[static_cast<size_t>(idx)] = 1;
          frontier.push_back(idx);
        }
      }
      // Membership max-pool onto the 16x16 grid.
      std::array<uint8_t, kFeatGridSize * kFeatGridSize> seen{};
      std::vector<int> feat;
      const int ratio = kGridSize / kFeatGridSize;
      for (int cell : region.raster_cells) {
        const int fr = (cell / kGridSize) / ratio;
        const int fc = (cell % kGridSize) / ratio;
        const int fidx = fr * kFeatGridSize + fc;
        if (!seen[static_cast<size_t>(fidx)]) {
          seen[static_cast<size_t>(fidx)] = 1;
          feat.push_back(fidx);
          out.mask16[static_cast<size_t>(fidx)] = 1;
        }
      }
      std::sort(feat.begin(), feat.end());
      if (static_cast<int>(feat.size()) > region_cell_cap) {
        // Uniform subsample, deterministic.
        std::vector<int> capped;
        capped.reserve(static_cast<size_t>(region_cell_cap));
        const double stride = static_cast<double>(feat.size()) / region_cell_cap;
        for (int i = 0; i < region_cell_cap; ++i)
          capped.push_back(feat[static_cast<size_t>(std::floor(i * stride))]);
        feat = std::move(capped);
      }
      region.feature_cells = feat;
      out.gather_cells.insert(out.gather_cells.end(), feat.begin(), feat.end());
      out.regions.push_back(std::move(region));
    }
    return out;
  };

  RegionSet set;
  set.drivable = extract_category(
      [](uint8_t label) { return label == kPlaneRoad || label == kPlaneCenterline; });
  set.participants = extract_category([](uint8_t label) { return label == kPlaneVehicle; });
  return set;
}

Tensor trajectory_feature_points(const Tensor& y_norm, double coord_norm) {
  const int k = y_norm.dim(0);
  Tensor pts = ops::reshape(y_norm, {k * kHorizonSteps, 2});
  Tensor x_m = ops::scale(ops::slice_cols(pts, 0, 1), coord_norm);
  Tensor y_m = ops::scale(ops::slice_cols(pts, 1, 1), coord_norm);
  const double half = kFeatGridSize * kFeatCellSize / 2.0;
  // row = x / cell - 0.5, col = (half - y) / cell - 0.5
  Tensor row = ops::affine(x_m, 1.0 / kFeatCellSize, -0.5);
  Tensor col = ops::affine(y_m, -1.0 / kFeatCellSize, half / kFeatCellSize - 0.5);
  return ops::concat({row, col}, 1);
}

SemanticInteractionBlock::SemanticInteractionBlock(ParameterSet& ps, const std::string& name,
                                                   const ModelConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  const int d = cfg.d_model;
  global_attn_ = nn::MultiheadCrossAttention::create(ps, name + ".global", d, cfg.heads, rng);
  value_w_ = ps.create(name + ".value", {d, d}, Init::xavier(), rng);
  const int per_query = cfg.heads * kHorizonSteps * cfg.deform_points;
  offset_w_ = ps.create(name + ".offset", {d, per_query * 2}, Init::zero(), rng);
  weight_w_ = ps.create(name + ".weight", {d, per_query}, Init::xavier(), rng);
  gate_w_ = ps.create(name + ".gate.w", {2 * d, d}, Init::zero(), rng);
  gate_b_ = ps.create(name + ".gate.b", {d}, Init::zero(), rng);
}

Tensor SemanticInteractionBlock::deform_attend(const Tensor& queries, const Tensor& grid,
                                               const Tensor& ref_points) const {
  const int k = queries.dim(0);
  const int d = cfg_.d_model;
  const int heads = cfg_.heads;
  const int dh = d / heads;
  const int pts = cfg_.deform_points;
  const int refs = kHorizonSteps;

  Tensor flat = ops::reshape(grid, {grid.dim(0) * grid.dim(1), d});
  Tensor values = ops::matmul(flat, value_w_);  // [cells x d]

  Tensor offsets = ops::matmul(queries, offset_w_);  // [k x heads*refs*pts*2]
  Tensor weights = ops::matmul(queries, weight_w_);  // [k x heads*refs*pts]

  // Repeat each reference point for its sampling locations.
  std::vector<int> repeat_idx(static_cast<size_t>(k) * refs * pts);
  for (int i = 0; i < k * refs; ++i)
    for (int p = 0; p < pts; ++p) repeat_idx[static_cast<size_t>(i) * pts + p] = i;

  std::vector<Tensor> head_outs;
  head_outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor value_grid =
        ops::reshape(ops::slice_cols(values, h * dh, dh), {grid.dim(0), grid.dim(1), dh});
    Tensor off_h = ops::reshape(
        ops::slice_cols(offsets, h * refs * pts * 2, refs * pts * 2), {k * refs * pts, 2});
    Tensor base = ops::embedding(ref_points, repeat_idx);  // [k*refs*pts x 2]
    Tensor sample_pts = ops::add(base, off_h);
    Tensor samples = ops::bilinear_sample(value_grid, sample_pts);  // [k*refs*pts x dh]
    Tensor w_h = ops::reshape(ops::slice_cols(weights, h * refs * pts, refs * pts),
                              {k * refs, pts});
    Tensor w_soft = ops::reshape(ops::softmax_rows(w_h), {k * refs * pts, 1});
    Tensor weighted = ops::segment_sum_rows(ops::mul_colvec(samples, w_soft), pts);
    head_outs.push_back(ops::segment_mean_rows(weighted, refs));  // [k x dh]
  }
  return ops::concat(head_outs, 1);
}

SemanticInteractionBlock::Paths SemanticInteractionBlock::forward_paths(
    const Tensor& queries, const Tensor& f_bev, const CategoryRegions& regions,
    const Tensor& ref_points) const {
  Paths paths;
  const int d = cfg_.d_model;
  if (regions.empty()) {
    // No regions of this category: local path over raw features, gate bypassed.
    paths.local_path = deform_attend(queries, f_bev, ref_points);
    paths.fused = paths.local_path;
    paths.gate_bypassed = true;
    return paths;
  }

  Tensor flat = ops::reshape(f_bev, {f_bev.dim(0) * f_bev.dim(1), d});
  Tensor region_feats = ops::embedding(flat, regions.gather_cells);
  paths.global_path = global_attn_(queries, region_feats);

  // Values outside the category mask are zeroed for the local path.
  std::vector<double> mask(static_cast<size_t>(kFeatGridSize) * kFeatGridSize);
  for (size_t i = 0; i < mask.size(); ++i) mask[i] = regions.mask16[i] ? 1.0 : 0.0;
  Tensor mask_col = Tensor::from_data({kFeatGridSize * kFeatGridSize, 1}, std::move(mask));
  Tensor masked_grid = ops::reshape(ops::mul_colvec(flat, mask_col),
                                    {kFeatGridSize, kFeatGridSize, d});
  paths.local_path = deform_attend(paths.global_path, masked_grid, ref_points);

  Tensor cat = ops::concat({paths.global_path, paths.local_path}, 1);
  paths.gate = ops::sigmoid(ops::add_rowvec(ops::matmul(cat, gate_w_), gate_b_));
  Tensor one_minus = ops::affine(paths.gate, -1.0, 1.0);
  paths.fused = ops::add(ops::mul(paths.global_path, paths.gate),
                         ops::mul(paths.local_path, one_minus));
  return paths;
}

DenoiseDecoder::DenoiseDecoder(ParameterSet& ps, const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  const int d = cfg.d_model;
  const int enc = kHorizonSteps * cfg.point_enc_dim;
  query_mlp_ = nn::Mlp::create(ps, "refiner.enc", enc, d, d, rng);
  // Zero-initialized aggregation: modulation starts as the identity.
  modulation_mlp_ = nn::Mlp::create(ps, "refiner.mod", kHorizonSteps * d, d, d, rng, Init::zero());
  mod_ln_ = nn::LayerNorm::create(ps, "refiner.mod_ln", d, rng);
  if (cfg.use_fgsim) {
    sib_drivable_ = SemanticInteractionBlock(ps, "refiner.sib_drv", cfg, rng);
    sib_participants_ = SemanticInteractionBlock(ps, "refiner.sib_par", cfg, rng);
    sib_drivable_ln_ = nn::LayerNorm::create(ps, "refiner.sib_drv_ln", d, rng);
    sib_participants_ln_ = nn::LayerNorm::create(ps, "refiner.sib_par_ln", d, rng);
  }
  agent_attn_ = nn::CrossAttnBlock::create(ps, "refiner.agent", d, cfg.heads, rng);
  ego_attn_ = nn::CrossAttnBlock::create(ps, "refiner.ego", d, cfg.heads, rng);
  ffn_ = nn::FeedForwardBlock::create(ps, "refiner.ffn", d, 2 * d, rng);
  traj_head_ = nn::Mlp::create(ps, "refiner.traj", d, 2 * d, kHorizonSteps * 2, rng);
  conf_head_ = nn::Mlp::create(ps, "refiner.conf", d, d, 1, rng);
}

Tensor DenoiseDecoder::encode_refiner_queries(const Tensor& y_norm) const {
  // Shares the proposal encoding convention: meters into the frequency ladder.
  Tensor meters = ops::scale(y_norm, cfg_.coord_norm);
  const int k = y_norm.dim(0);
  Tensor pts = ops::reshape(meters, {k * kHorizonSteps, 2});
  Tensor enc = nn::sinusoidal_positional_encoding(pts, cfg_.point_enc_dim);
  return query_mlp_(ops::reshape(enc, {k, kHorizonSteps * cfg_.point_enc_dim}));
}

Tensor DenoiseDecoder::bev_modulation(const Tensor& queries, const Tensor& f_bev,
                                      const Tensor& y_norm) const {
  const int k = queries.dim(0);
  Tensor pts = trajectory_feature_points(y_norm, cfg_.coord_norm);
  Tensor feats = ops::bilinear_sample(f_bev, pts);  // [k*8 x d]
  Tensor agg = modulation_mlp_(ops::reshape(feats, {k, kHorizonSteps * cfg_.d_model}));
  return ops::add(queries, agg);
}

RefinedOutput DenoiseDecoder::forward(const Tensor& y_norm, int t,
                                      const ConditioningBundle& cond) const {
  Tensor q = encode_refiner_queries(y_norm);

  // Timestep embedding broadcast onto every candidate query.
  Tensor t_coord = Tensor::from_data({1, 1}, {static_cast<double>(t)});
  Tensor t_embed = nn::sinusoidal_positional_encoding(t_coord, cfg_.d_model);
  q = ops::add_rowvec(q, t_embed);

  if (cfg_.use_modulation) q = mod_ln_(bev_modulation(q, cond.f_bev, y_norm));

  if (cfg_.use_fgsim) {
    if (cond.regions == nullptr)
      throw ContractError("denoise decoder: conditioning lacks a region set");
    Tensor refs = trajectory_feature_points(y_norm, cfg_.coord_norm);
    q = sib_drivable_ln_(
        ops::add(q, sib_drivable_(q, cond.f_bev, cond.regions->drivable, refs)));
    q = sib_participants_ln_(
        ops::add(q, sib_participants_(q, cond.f_bev, cond.regions->participants, refs)));
  }

  q = agent_attn_(q, cond.agent_tokens);
  q = ego_attn_(q, ops::concat({cond.planning_token, cond.ego_embed}, 0));
  q = ffn_(q);

  RefinedOutput out;
  out.traj_norm = traj_head_(q);
  out.conf_logits = conf_head_(q);
  out.confidences = ops::sigmoid(out.conf_logits);
  for (double v : out.traj_norm.data())
    if (!std::isfinite(v)) throw NumericError("denoise decoder: non-finite trajectory head output");
  return out;
}

RefinedOutput ddim_sample(const DenoiseDecoder& decoder, const NoiseSchedule& schedule,
                          const Tensor& start_norm, int t_start, int steps,
                          const ConditioningBundle& cond) {
  if (steps < 1) throw ConfigError("ddim_sample: steps must be >= 1");
  if (t_start < 1 || t_start > schedule.steps)
    throw ConfigError("ddim_sample: t_start outside the schedule");

  // Evenly spaced sub-schedule from t_start down to 0.
  std::vector<int> ladder;
  for (int i = 0; i <= steps; ++i)
    ladder.push_back(static_cast<int>(std::lround(
        static_cast<double>(t_start) * (steps - i) / static_cast<double>(steps))));

  Tensor y = start_norm;
  RefinedOutput out;
  for (int i = 0; i < steps; ++i) {
    const int t_now = ladder[static_cast<size_t>(i)];
    const int t_next = ladder[static_cast<size_t>(i + 1)];
    out = decoder.forward(y, t_now, cond);
    if (t_next == 0) {
      y = out.traj_norm;
    } else {
      Tensor eps_hat = derive_epsilon(y, out.traj_norm, schedule.alpha_bar_at(t_now));
      y = forward_noise(ops::clamp(out.traj_norm, -4.0, 4.0), schedule.alpha_bar_at(t_next),
                        eps_hat);
    }
  }
  return out;
}

}  // namespace bevplan
