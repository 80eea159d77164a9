#pragma once

#include <cstddef>
#include <cstdint>

#include "xsent/model.hpp"

namespace xsent {

struct AdamWConfig {
  double lr = 2e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double max_grad_norm = 1.0;  // <= 0 disables clipping
};

/// Linear warmup from 0 over the first `warmup_steps`, then linear decay to
/// 0 at `total_steps`. Steps are 0-based optimizer step indices.
class LinearWarmupSchedule {
 public:
  LinearWarmupSchedule(double base_lr, std::size_t total_steps, double warmup_ratio);

  double lr_at(std::size_t step) const;
  std::size_t warmup_steps() const { return warmup_; }
  std::size_t total_steps() const { return total_; }

 private:
  double base_;
  std::size_t total_;
  std::size_t warmup_;
};

double global_norm(const ParameterBlocks& grads);

/// Scales gradients in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(ParameterBlocks& grads, double max_norm);

/// AdamW with decoupled weight decay and bias correction.
class AdamW {
 public:
  AdamW(const AdamWConfig& config, const ParameterBlocks& shapes);

  /// Clips `grads` (in place), then updates `params` with learning rate `lr`.
  /// Throws RuntimeError naming the block if any gradient is not finite.
  /// Returns the pre-clip gradient norm.
  double step(ParameterBlocks& params, ParameterBlocks& grads, double lr);

  std::uint64_t steps() const { return t_; }
  const ParameterBlocks& first_moment() const { return m_; }
  const ParameterBlocks& second_moment() const { return v_; }
  const AdamWConfig& config() const { return config_; }

 private:
  AdamWConfig config_;
  ParameterBlocks m_;
  ParameterBlocks v_;
  std::uint64_t t_ = 0;
};

}  // namespace xsent
