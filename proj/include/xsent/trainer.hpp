#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "xsent/corpus.hpp"
#include "xsent/evaluation.hpp"
#include "xsent/model.hpp"
#include "xsent/optimizer.hpp"

namespace xsent {

enum class TrainMode {
  Baseline,          // rating loss only, lambda pinned at 0
  LossReversal,      // one backward pass on L_rating - l1 L_domain - l2 L_lang
  GradientReversal,  // heads minimise their own loss, encoder sees reversed gradients
};

std::string_view to_string(TrainMode m);
std::optional<TrainMode> parse_train_mode(std::string_view s);

struct LossBreakdown {
  double rating = 0.0;
  double domain = 0.0;
  double language = 0.0;
  double total = 0.0;  // rating - lambda1 * domain - lambda2 * language
};

/// A minibatch with all three label channels as class indices.
struct Batch {
  Tensor features;  // B x hash_dim
  std::vector<std::size_t> rating;
  std::vector<std::size_t> domain;
  std::vector<std::size_t> language;

  std::size_t size() const { return features.rows(); }
};

/// Features and labels of a dataset, computed once.
struct EncodedDataset {
  std::vector<SparseFeatures> features;
  std::vector<std::size_t> rating;
  std::vector<std::size_t> domain;
  std::vector<std::size_t> language;

  std::size_t size() const { return features.size(); }
};

EncodedDataset encode_dataset(const Dataset& ds, const ModelConfig& config);
Batch make_batch(const EncodedDataset& data, std::span<const std::size_t> indices, std::size_t hash_dim);

struct LossAndGrads {
  LossBreakdown losses;
  ParameterBlocks grads;
};

/**
 * Forward and backward pass for one batch.
 *
 * LossReversal differentiates L_total directly, so the adversarial heads
 * receive -lambda times the gradient of their own loss. GradientReversal
 * gives the heads +grad of their own loss and reverses (scales by -lambda)
 * the gradient that flows from each adversarial head into the encoder.
 * Baseline is LossReversal with both lambdas fixed at 0.
 */
LossAndGrads combined_loss(const ModelParameters& params, const Batch& batch, double lambda1, double lambda2,
                           TrainMode mode, Mode dropout_mode, Rng& rng);

struct MetaConfig {
  double lambda_init = 0.5;
  double meta_lr = 0.01;
  double lambda_min = 0.0;
  double lambda_max = 2.0;
  std::size_t interval = 100;    // optimizer steps between updates
  std::size_t batch_size = 32;   // validation minibatch per update
};

struct MetaState {
  double lambda1 = 0.5;
  double lambda2 = 0.5;
  std::size_t updates = 0;
};

struct MetaUpdateResult {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double hypergrad1 = 0.0;  // dL_meta / dlambda1
  double hypergrad2 = 0.0;
  double meta_loss = 0.0;   // validation rating loss after the virtual step
};

/// lambda <- clamp(lambda - meta_lr * hypergrad, lambda_min, lambda_max).
double meta_step(double lambda, double hypergrad, const MetaConfig& config);

/**
 * First-order hypergradient step on the adversarial coefficients.
 *
 * A virtual step theta' = theta - alpha * d(theta, lambda) is taken along
 * the training update direction d on `train`. The meta-loss is the rating
 * loss on `valid` at theta'. Since d depends on lambda_k only through
 * -grad L_k (restricted to the encoder in GradientReversal mode),
 *   dL_meta/dlambda_k = alpha * <grad L_meta(theta'), grad L_k(theta)>.
 * All passes run in evaluation mode. `params` is not modified.
 */
MetaUpdateResult meta_update(const ModelParameters& params, const MetaState& state, const MetaConfig& config,
                             const Batch& train, const Batch& valid, double step_size, TrainMode mode);

/// Stops after `patience` consecutive epochs without a strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Records one epoch's metric; returns true when it is a new best.
  bool update(double metric);
  bool should_stop() const { return since_best_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }  // 1-based, 0 before any update
  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t epochs_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_ = 0.0;
};

struct TrainConfig {
  TrainMode mode = TrainMode::LossReversal;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 5;
  std::size_t patience = 3;
  std::uint64_t seed = 42;
  double warmup_ratio = 0.1;
  ModelConfig model;
  AdamWConfig optimizer;
  MetaConfig meta;
};

struct StepRecord {
  std::size_t step = 0;  // 1-based optimizer step
  std::size_t epoch = 0;
  LossBreakdown losses;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;  // before clipping
};

struct MetaRecord {
  std::size_t step = 0;
  MetaUpdateResult result;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t last_step = 0;
  double val_accuracy = 0.0;
  double val_f1 = 0.0;
  bool improved = false;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<MetaRecord> meta;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool early_stopped = false;
};

/// Chronological JSON-lines: step records, meta records right after the step
/// that triggered them, an epoch record after each epoch's last step.
void write_log_jsonl(const TrainLog& log, std::ostream& out);

struct TrainResult {
  ModelParameters best;
  TrainLog log;
  MetaState meta;
};

TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& valid_set);

/// Eval-mode predictions for every record of `ds`.
std::vector<int> predict(const ModelParameters& params, const Dataset& ds);

MetricsReport evaluate_model(const ModelParameters& params, const Dataset& ds, const ReportOptions& options = {});

}  // namespace xsent
