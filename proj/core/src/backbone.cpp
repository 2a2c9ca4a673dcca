#include "bevplan/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bevplan {

Backbone::Backbone(ParameterSet& ps, const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  const int d = cfg.d_model;
  conv1_ = nn::Conv3x3::create(ps, "backbone.conv1", kNumPlanes, cfg.conv_c1, 2, rng);
  conv2_ = nn::Conv3x3::create(ps, "backbone.conv2", cfg.conv_c1, cfg.conv_c2, 2, rng);
  conv3_ = nn::Conv3x3::create(ps, "backbone.conv3", cfg.conv_c2, d, 1, rng);
  ego_mlp_ = nn::Mlp::create(ps, "backbone.ego", 5, d, d, rng);
  seg_proj_ = nn::Linear::create(ps, "backbone.seg", d, kNumPlanes, rng);
  queries_ = ps.create("backbone.queries", {1 + cfg.n_agent_tokens, d}, Init::normal(0.5), rng);
  for (int l = 0; l < cfg.token_layers; ++l) {
    token_attn_.push_back(
        nn::CrossAttnBlock::create(ps, "backbone.tok" + std::to_string(l), d, cfg.heads, rng));
    token_ffn_.push_back(
        nn::FeedForwardBlock::create(ps, "backbone.ffn" + std::to_string(l), d, 2 * d, rng));
  }
  det_mlp_ = nn::Mlp::create(ps, "backbone.det", d, d, 1 + 2 + 1 + cfg.num_classes, rng);

  // Constant positional encodings of feature-cell centers (meters).
  {
    std::vector<double> coords(static_cast<size_t>(kFeatGridSize) * kFeatGridSize * 2);
    for (int r = 0; r < kFeatGridSize; ++r)
      for (int c = 0; c < kFeatGridSize; ++c) {
        const double half = kFeatGridSize * kFeatCellSize / 2.0;
        const double x = (r + 0.5) * kFeatCellSize;
        const double y = half - (c + 0.5) * kFeatCellSize;
        coords[(static_cast<size_t>(r) * kFeatGridSize + c) * 2] = x;
        coords[(static_cast<size_t>(r) * kFeatGridSize + c) * 2 + 1] = y;
      }
    cell_pos_enc_ = nn::sinusoidal_positional_encoding(
                        Tensor::from_data({kFeatGridSize * kFeatGridSize, 2}, std::move(coords)), d)
                        .detach();
  }
  // Constant sampling locations for the 4x bilinear upsample of the seg head.
  {
    std::vector<double> pts(static_cast<size_t>(kGridSize) * kGridSize * 2);
    for (int r = 0; r < kGridSize; ++r)
      for (int c = 0; c < kGridSize; ++c) {
        const Vec2 f = GridFrame::world_to_feature_coords(GridFrame::cell_center(r, c));
        pts[(static_cast<size_t>(r) * kGridSize + c) * 2] = f.x;
        pts[(static_cast<size_t>(r) * kGridSize + c) * 2 + 1] = f.y;
      }
    upsample_points_ = Tensor::from_data({kGridSize * kGridSize, 2}, std::move(pts));
  }
}

Tensor Backbone::raster_tensor(const RasterStack& raster) {
  std::vector<double> data(static_cast<size_t>(kGridSize) * kGridSize * kNumPlanes);
  for (int r = 0; r < kGridSize; ++r)
    for (int c = 0; c < kGridSize; ++c)
      for (int p = 0; p < kNumPlanes; ++p)
        data[(static_cast<size_t>(r) * kGridSize + c) * kNumPlanes + p] =
            raster[p].at(r, c) ? 1.0 : 0.0;
  return Tensor::from_data({kGridSize, kGridSize, kNumPlanes}, std::move(data));
}

Tensor Backbone::ego_vector(const EgoStatus& ego) {
  std::vector<double> v(5, 0.0);
  v[0] = ego.speed;
  v[1] = ego.accel;
  v[2 + static_cast<size_t>(ego.command)] = 1.0;
  return Tensor::from_data({1, 5}, std::move(v));
}

Tensor Backbone::ego_embedding(const EgoStatus& ego) const { return ego_mlp_(ego_vector(ego)); }

Tensor Backbone::encode_bev(const RasterStack& raster, const EgoStatus& ego) const {
  Tensor x = raster_tensor(raster);
  x = ops::relu(conv1_(x));
  x = ops::relu(conv2_(x));
  x = conv3_(x);  // [16 x 16 x d]
  // Ego status is broadcast-added over all cells.
  Tensor flat = ops::reshape(x, {kFeatGridSize * kFeatGridSize, cfg_.d_model});
  flat = ops::add_rowvec(flat, ego_embedding(ego));
  return ops::reshape(flat, {kFeatGridSize, kFeatGridSize, cfg_.d_model});
}

Tensor Backbone::seg_logits(const Tensor& f_bev) const {
  Tensor up = ops::bilinear_sample(f_bev, upsample_points_);  // [4096 x d]
  return seg_proj_(up);
}

Tensor Backbone::build_token_kv(const Tensor& f_bev, const EgoStatus& ego) const {
  Tensor flat = ops::reshape(f_bev, {kFeatGridSize * kFeatGridSize, cfg_.d_model});
  Tensor keys = ops::add(flat, cell_pos_enc_);
  return ops::concat({keys, ego_embedding(ego)}, 0);  // [257 x d]
}

TokenSet Backbone::decode_tokens_from(const Tensor& kv) const {
  Tensor q = queries_;
  for (size_t l = 0; l < token_attn_.size(); ++l) {
    q = token_attn_[l](q, kv);
    q = token_ffn_[l](q);
  }
  TokenSet tokens;
  tokens.planning = ops::slice_rows(q, 0, 1);
  tokens.agents = ops::slice_rows(q, 1, cfg_.n_agent_tokens);
  return tokens;
}

TokenSet Backbone::token_decoder(const Tensor& f_bev, const EgoStatus& ego) const {
  return decode_tokens_from(build_token_kv(f_bev, ego));
}

DetOutput Backbone::det_head(const Tensor& agent_tokens) const {
  Tensor out = det_mlp_(agent_tokens);
  DetOutput det;
  det.existence_logits = ops::slice_cols(out, 0, 1);
  det.centers = ops::slice_cols(out, 1, 2);
  det.headings = ops::slice_cols(out, 3, 1);
  det.class_logits = ops::slice_cols(out, 4, cfg_.num_classes);
  return det;
}

std::vector<uint8_t> Backbone::argmax_labels(const Tensor& logits) {
  const int n = logits.dim(0), c = logits.dim(1);
  std::vector<uint8_t> labels(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    int best = 0;
    double bv = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j) {
      const double v = logits.data()[static_cast<size_t>(i) * c + j];
      if (v > bv) {  // ties keep the lowest index
        bv = v;
        best = j;
      }
    }
    labels[static_cast<size_t>(i)] = static_cast<uint8_t>(best);
  }
  return labels;
}

DetMatch Backbone::greedy_match(const DetOutput& det, const std::vector<AgentState>& agents,
                                double gate_m) {
  const int n_tokens = det.centers.dim(0);
  DetMatch match;
  match.agent_of_token.assign(static_cast<size_t>(n_tokens), -1);
  std::vector<bool> token_used(static_cast<size_t>(n_tokens), false);
  std::vector<bool> agent_used(agents.size(), false);

  auto dist = [&](int t, size_t a) {
    const double dx = det.centers.data()[static_cast<size_t>(t) * 2] - agents[a].pos.x;
    const double dy = det.centers.data()[static_cast<size_t>(t) * 2 + 1] - agents[a].pos.y;
    return std::hypot(dx, dy);
  };

  // Repeatedly take the globally nearest (token, agent) pair within the gate.
  while (true) {
    double best = gate_m;
    int bt = -1;
    size_t ba = 0;
    for (int t = 0; t < n_tokens; ++t) {
      if (token_used[static_cast<size_t>(t)]) continue;
      for (size_t a = 0; a < agents.size(); ++a) {
        if (agent_used[a]) continue;
        const double d = dist(t, a);
        if (d <= best) {
          best = d;
          bt = t;
          ba = a;
        }
      }
    }
    if (bt < 0) break;
    token_used[static_cast<size_t>(bt)] = true;
    agent_used[ba] = true;
    match.agent_of_token[static_cast<size_t>(bt)] = static_cast<int>(ba);
  }
  // Bootstrap: any ground-truth agent still unmatched takes the nearest free
  // token regardless of the gate.
  for (size_t a = 0; a < agents.size(); ++a) {
    if (agent_used[a]) continue;
    double best = std::numeric_limits<double>::infinity();
    int bt = -1;
    for (int t = 0; t < n_tokens; ++t) {
      if (token_used[static_cast<size_t>(t)]) continue;
      const double d = dist(t, a);
      if (d < best) {
        best = d;
        bt = t;
      }
    }
    if (bt < 0) break;  // more agents than tokens
    token_used[static_cast<size_t>(bt)] = true;
    match.agent_of_token[static_cast<size_t>(bt)] = static_cast<int>(a);
  }
  return match;
}

}  // namespace bevplan
