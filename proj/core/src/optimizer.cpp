#include "bevplan/optimizer.hpp"

#include <cmath>

namespace bevplan {

AdamW::AdamW(ParameterSet& params, OptimizerConfig config) : params_(params), config_(config) {
  for (const auto& [name, t] : params_.all()) {
    if (!t.requires_grad()) continue;
    Moments m;
    m.m.assign(static_cast<size_t>(t.numel()), 0.0);
    m.v.assign(static_cast<size_t>(t.numel()), 0.0);
    moments_.emplace(name, std::move(m));
  }
}

void AdamW::step(bool strict) {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  const bool round_f32 = params_.precision() == Precision::f32r;

  for (auto& [name, t] : params_.all()) {
    if (!t.requires_grad()) continue;
    if (!t.has_grad()) {
      if (strict) throw ContractError("optimizer: missing gradient on trainable parameter " + name);
      continue;
    }
    auto it = moments_.find(name);
    if (it == moments_.end()) throw ContractError("optimizer: unknown parameter " + name);
    auto& mom = it->second;
    const auto& g = t.grad();
    auto& data = t.mutable_data();
    for (size_t i = 0; i < data.size(); ++i) {
      mom.m[i] = config_.beta1 * mom.m[i] + (1.0 - config_.beta1) * g[i];
      mom.v[i] = config_.beta2 * mom.v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = mom.m[i] / bc1;
      const double v_hat = mom.v[i] / bc2;
      double p = data[i];
      p -= config_.lr * (m_hat / (std::sqrt(v_hat) + config_.eps) + config_.weight_decay * p);
      data[i] = round_f32 ? ParameterSet::round_f32(p) : p;
    }
    t.zero_grad();
  }
}

}  // namespace bevplan
