#include "bevplan/planner.hpp"

#include <algorithm>
#include <cmath>

namespace bevplan {

Planner::Planner(const ModelConfig& cfg, AnchorVocabulary vocab, uint64_t init_seed)
    : cfg_(cfg), vocab_(std::move(vocab)), params_(cfg.precision) {
  if (vocab_.k != cfg_.k)
    throw ConfigError("planner: vocabulary K " + std::to_string(vocab_.k) +
                      " does not match configured k " + std::to_string(cfg_.k));
  schedule_ = NoiseSchedule::linear(cfg_.diffusion_steps, cfg_.beta_lo, cfg_.beta_hi);
  Rng rng(init_seed ^ 0x9bde1ull);
  backbone_ = std::make_unique<Backbone>(params_, cfg_, rng);
  proposal_ = std::make_unique<ProposalDecoder>(params_, cfg_, rng);
  if (cfg_.use_refiner) decoder_ = std::make_unique<DenoiseDecoder>(params_, cfg_, rng);
  anchor_points_ = anchors_tensor(vocab_);
}

Tensor Planner::normalized(const Tensor& meters) const {
  return ops::scale(meters, 1.0 / cfg_.coord_norm);
}

Tensor Planner::denormalized(const Tensor& norm) const {
  return ops::scale(norm, cfg_.coord_norm);
}

Planner::TrainForward Planner::train_forward(const SceneSample& scene, Rng& rng,
                                             bool perception_only) const {
  TrainForward out;
  Tensor f_bev = backbone_->encode_bev(scene.raster, scene.ego);
  out.seg_logits = backbone_->seg_logits(f_bev);
  out.tokens = backbone_->token_decoder(f_bev, scene.ego);
  out.det = backbone_->det_head(out.tokens.agents);
  if (perception_only) {
    out.has_planning = false;
    return out;
  }

  out.proposal = (*proposal_)(anchor_points_, out.tokens.planning);
  out.proposals_meters = out.proposal.proposals;

  if (!cfg_.use_refiner) {
    out.has_planning = true;
    return out;
  }

  // Regions come from the predicted semantics (argmax labels, detached).
  out.regions = extract_regions(Backbone::argmax_labels(out.seg_logits), cfg_.region_cell_cap);

  const int k = cfg_.k;
  std::vector<double> eps(static_cast<size_t>(k) * kHorizonSteps * 2);
  for (auto& v : eps) v = rng.normal();
  Tensor noise = Tensor::from_data({k, kHorizonSteps * 2}, std::move(eps));
  out.timestep = 1 + static_cast<int>(rng.uniform_index(
                         static_cast<uint64_t>(cfg_.diffusion_steps)));

  // The pure-noise variant trains by noising the static anchors; the default
  // path noises the offset-corrected proposals with gradients flowing back.
  Tensor clean_norm = cfg_.use_proposal ? normalized(out.proposal.proposals)
                                        : normalized(anchor_points_).detach();
  Tensor noisy = forward_noise(ops::clamp(clean_norm, -4.0, 4.0),
                               schedule_.alpha_bar_at(out.timestep), noise);

  ConditioningBundle cond;
  cond.f_bev = f_bev;
  cond.regions = &out.regions;
  cond.planning_token = out.tokens.planning;
  cond.agent_tokens = out.tokens.agents;
  cond.ego_embed = backbone_->ego_embedding(scene.ego);
  out.refined = decoder_->forward(noisy, out.timestep, cond);
  out.refined_meters = denormalized(out.refined.traj_norm);
  return out;
}

std::vector<Trajectory> trajectories_from_flat(const Tensor& flat_meters) {
  const int k = flat_meters.dim(0);
  std::vector<Trajectory> out;
  out.reserve(static_cast<size_t>(k));
  for (int c = 0; c < k; ++c) {
    std::array<Vec2, kHorizonSteps> xy{};
    for (int i = 0; i < kHorizonSteps; ++i)
      xy[static_cast<size_t>(i)] = {flat_meters.data()[static_cast<size_t>(c) * 16 + 2 * i],
                                    flat_meters.data()[static_cast<size_t>(c) * 16 + 2 * i + 1]};
    out.push_back(Trajectory::from_xy(xy));
  }
  return out;
}

Planner::Plan Planner::plan(const SceneSample& scene, int steps, Rng* noise_rng) const {
  if (steps < 1) throw ConfigError("plan: steps must be >= 1");
  Plan plan;

  Tensor f_bev = backbone_->encode_bev(scene.raster, scene.ego);
  TokenSet tokens = backbone_->token_decoder(f_bev, scene.ego);
  ProposalDecoder::Output prop = (*proposal_)(anchor_points_, tokens.planning);

  plan.proposal_candidates = trajectories_from_flat(prop.proposals);
  plan.proposal_scores.assign(prop.scores.data().begin(), prop.scores.data().end());
  plan.proposal_best_index = 0;
  for (size_t i = 1; i < plan.proposal_scores.size(); ++i)
    if (plan.proposal_scores[i] > plan.proposal_scores[static_cast<size_t>(plan.proposal_best_index)])
      plan.proposal_best_index = static_cast<int>(i);
  plan.proposal_best = plan.proposal_candidates[static_cast<size_t>(plan.proposal_best_index)];

  if (!cfg_.use_refiner) {
    plan.best = plan.proposal_best;
    plan.best_index = plan.proposal_best_index;
    plan.candidates = plan.proposal_candidates;
    plan.confidences = plan.proposal_scores;
    return plan;
  }

  Tensor seg = backbone_->seg_logits(f_bev);
  RegionSet regions = extract_regions(Backbone::argmax_labels(seg), cfg_.region_cell_cap);
  ConditioningBundle cond;
  cond.f_bev = f_bev;
  cond.regions = &regions;
  cond.planning_token = tokens.planning;
  cond.agent_tokens = tokens.agents;
  cond.ego_embed = backbone_->ego_embedding(scene.ego);

  Tensor start;
  int t_start = cfg_.t_start;
  if (cfg_.use_proposal) {
    // Inference starts from the proposals directly, without added noise.
    start = normalized(prop.proposals);
  } else {
    if (noise_rng == nullptr)
      throw ContractError("plan: the pure-noise variant needs a noise source");
    std::vector<double> eps(static_cast<size_t>(cfg_.k) * kHorizonSteps * 2);
    for (auto& v : eps) v = noise_rng->normal();
    start = Tensor::from_data({cfg_.k, kHorizonSteps * 2}, std::move(eps));
    t_start = cfg_.diffusion_steps;
  }

  RefinedOutput refined = ddim_sample(*decoder_, schedule_, start, t_start, steps, cond);
  Tensor meters = denormalized(refined.traj_norm);
  plan.candidates = trajectories_from_flat(meters);
  plan.confidences.assign(refined.confidences.data().begin(), refined.confidences.data().end());
  plan.best_index = 0;
  for (size_t i = 1; i < plan.confidences.size(); ++i)
    if (plan.confidences[i] > plan.confidences[static_cast<size_t>(plan.best_index)])
      plan.best_index = static_cast<int>(i);
  plan.best = plan.candidates[static_cast<size_t>(plan.best_index)];
  return plan;
}

void Planner::set_perception_trainable(bool trainable) {
  for (auto& [name, t] : params_.all())
    if (name.rfind("backbone.", 0) == 0) t.set_requires_grad(trainable);
}

}  // namespace bevplan
