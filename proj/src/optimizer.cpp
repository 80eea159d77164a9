#include "xsent/optimizer.hpp"

#include <cmath>
#include <string>

namespace xsent {

LinearWarmupSchedule::LinearWarmupSchedule(double base_lr, std::size_t total_steps, double warmup_ratio)
    : base_(base_lr), total_(total_steps) {
  if (!(warmup_ratio >= 0.0 && warmup_ratio <= 1.0)) throw ConfigError("warmup ratio must lie in [0, 1]");
  warmup_ = static_cast<std::size_t>(std::ceil(warmup_ratio * static_cast<double>(total_steps)));
}

double LinearWarmupSchedule::lr_at(std::size_t step) const {
  if (step < warmup_) return base_ * static_cast<double>(step) / static_cast<double>(warmup_);
  if (step >= total_) return 0.0;
  return base_ * static_cast<double>(total_ - step) / static_cast<double>(total_ - warmup_);
}

double global_norm(const ParameterBlocks& grads) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double v : g.values()) sq += v * v;
  }
  return std::sqrt(sq);
}

double clip_global_norm(ParameterBlocks& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& g : grads) {
      for (double& v : g.values()) v *= scale;
    }
  }
  return norm;
}

AdamW::AdamW(const AdamWConfig& config, const ParameterBlocks& shapes)
    : config_(config), m_(zeros_like(shapes)), v_(zeros_like(shapes)) {}

double AdamW::step(ParameterBlocks& params, ParameterBlocks& grads, double lr) {
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    if (!grads[b].same_shape(params[b])) {
      throw DimensionError("optimizer: gradient for " + std::string(kBlockNames[b]) + " has shape " +
                           shape_string(grads[b].shape()) + ", parameter has " + shape_string(params[b].shape()));
    }
    for (double v : grads[b].values()) {
      if (!std::isfinite(v)) throw RuntimeError("non-finite gradient in block " + std::string(kBlockNames[b]));
    }
  }
  const double norm = clip_global_norm(grads, config_.max_grad_norm);

  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const double decay = 1.0 - lr * config_.weight_decay;
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    double* p = params[b].data();
    const double* g = grads[b].data();
    double* m = m_[b].data();
    double* v = v_[b].data();
    for (std::size_t i = 0; i < params[b].numel(); ++i) {
      p[i] *= decay;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
  return norm;
}

}  // namespace xsent
