#include "bevplan/proposal.hpp"

namespace bevplan {

Tensor anchors_tensor(const AnchorVocabulary& vocab) {
  std::vector<double> data(static_cast<size_t>(vocab.k) * kHorizonSteps * 2);
  for (int c = 0; c < vocab.k; ++c)
    for (int i = 0; i < kHorizonSteps; ++i) {
      data[(static_cast<size_t>(c) * kHorizonSteps + i) * 2] =
          vocab.anchors[static_cast<size_t>(c)][static_cast<size_t>(i)].x;
      data[(static_cast<size_t>(c) * kHorizonSteps + i) * 2 + 1] =
          vocab.anchors[static_cast<size_t>(c)][static_cast<size_t>(i)].y;
    }
  return Tensor::from_data({vocab.k, kHorizonSteps * 2}, std::move(data));
}

Tensor encode_trajectory_points(const Tensor& flat_xy, int point_enc_dim) {
  const int k = flat_xy.dim(0);
  Tensor points = ops::reshape(flat_xy, {k * kHorizonSteps, 2});
  Tensor enc = nn::sinusoidal_positional_encoding(points, point_enc_dim);
  return ops::reshape(enc, {k, kHorizonSteps * point_enc_dim});
}

ProposalDecoder::ProposalDecoder(ParameterSet& ps, const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  const int d = cfg.d_model;
  const int enc = kHorizonSteps * cfg.point_enc_dim;
  anchor_mlp_ = nn::Mlp::create(ps, "proposal.enc", enc, d, d, rng);
  context_ = nn::CrossAttnBlock::create(ps, "proposal.ctx", d, cfg.heads, rng);
  // Zero-initialized output layers: proposals start exactly at the anchors
  // and scores start at 0.5.
  offset_head_ = nn::Mlp::create(ps, "proposal.offset", d, 2 * d, kHorizonSteps * 2, rng,
                                 Init::zero());
  score_head_ = nn::Mlp::create(ps, "proposal.score", d, d, 1, rng, Init::zero());
}

Tensor ProposalDecoder::encode_anchor_queries(const Tensor& anchor_points,
                                              const Tensor& planning_token) const {
  Tensor q = anchor_mlp_(encode_trajectory_points(anchor_points, cfg_.point_enc_dim));
  return context_(q, planning_token);
}

ProposalDecoder::Output ProposalDecoder::decode(const Tensor& queries,
                                                const Tensor& anchor_points) const {
  Output out;
  out.offsets = offset_head_(queries);
  out.score_logits = score_head_(queries);
  out.scores = ops::sigmoid(out.score_logits);
  out.proposals = ops::add(anchor_points, out.offsets);
  return out;
}

}  // namespace bevplan
