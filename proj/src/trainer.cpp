#include "xsent/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include "json.hpp"

namespace xsent {

std::string_view to_string(TrainMode m) {
  switch (m) {
    case TrainMode::Baseline: return "baseline";
    case TrainMode::LossReversal: return "loss-reversal";
    case TrainMode::GradientReversal: return "gradient-reversal";
  }
  return "?";
}

std::optional<TrainMode> parse_train_mode(std::string_view s) {
  if (s == "baseline") return TrainMode::Baseline;
  if (s == "loss-reversal") return TrainMode::LossReversal;
  if (s == "gradient-reversal") return TrainMode::GradientReversal;
  return std::nullopt;
}

EncodedDataset encode_dataset(const Dataset& ds, const ModelConfig& config) {
  EncodedDataset out;
  out.features.reserve(ds.size());
  for (const auto& r : ds.records) {
    out.features.push_back(featurize_sparse(r.title, r.text, config.hash_dim, config.max_tokens));
    out.rating.push_back(rating_to_class(r.rating));
    out.domain.push_back(index_of(r.domain));
    out.language.push_back(index_of(r.language));
  }
  return out;
}

Batch make_batch(const EncodedDataset& data, std::span<const std::size_t> indices, std::size_t hash_dim) {
  std::vector<const SparseFeatures*> rows;
  Batch b;
  for (auto i : indices) {
    rows.push_back(&data.features.at(i));
    b.rating.push_back(data.rating[i]);
    b.domain.push_back(data.domain[i]);
    b.language.push_back(data.language[i]);
  }
  b.features = to_dense_batch(rows, hash_dim);
  return b;
}

namespace {

void check_batch(const Batch& batch) {
  const std::size_t n = batch.size();
  if (n == 0) throw DataError("empty batch");
  if (batch.rating.size() != n) throw DataError("batch is missing rating labels");
  if (batch.domain.size() != n) throw DataError("batch is missing domain labels");
  if (batch.language.size() != n) throw DataError("batch is missing language labels");
}

struct Losses {
  Var rating, domain, language;
};

Losses build_losses(const BoundParameters& bound, const ModelConfig& config, const Batch& batch, Mode mode,
                    Rng& rng, const HeadGradientScales& scales) {
  const HeadOutputs out = forward(bound, config, Var::constant(batch.features), mode, rng, scales);
  return {softmax_cross_entropy(out.rating, batch.rating), softmax_cross_entropy(out.domain, batch.domain),
          softmax_cross_entropy(out.language, batch.language)};
}

}  // namespace

LossAndGrads combined_loss(const ModelParameters& params, const Batch& batch, double lambda1, double lambda2,
                           TrainMode mode, Mode dropout_mode, Rng& rng) {
  check_batch(batch);
  if (mode == TrainMode::Baseline) lambda1 = lambda2 = 0.0;

  const BoundParameters bound(params);
  HeadGradientScales scales;
  std::vector<std::pair<double, Var>> terms;
  Losses l;
  if (mode == TrainMode::GradientReversal) {
    scales.domain = -lambda1;
    scales.language = -lambda2;
    l = build_losses(bound, params.config, batch, dropout_mode, rng, scales);
    terms = {{1.0, l.rating}, {1.0, l.domain}, {1.0, l.language}};
  } else {
    l = build_losses(bound, params.config, batch, dropout_mode, rng, scales);
    terms = {{1.0, l.rating}, {-lambda1, l.domain}, {-lambda2, l.language}};
  }
  const Var root = scale_and_sum(terms);
  backward(root);

  LossAndGrads out;
  out.losses.rating = l.rating.value()[0];
  out.losses.domain = l.domain.value()[0];
  out.losses.language = l.language.value()[0];
  double total = 0.0;
  total += 1.0 * out.losses.rating;
  total += -lambda1 * out.losses.domain;
  total += -lambda2 * out.losses.language;
  out.losses.total = total;
  out.grads = bound.gradients();
  return out;
}

namespace {

double dot(const ParameterBlocks& a, const ParameterBlocks& b, bool encoder_only) {
  double s = 0.0;
  for (std::size_t k = 0; k < kNumBlocks; ++k) {
    if (encoder_only && !is_encoder_block(k)) continue;
    const double* x = a[k].data();
    const double* y = b[k].data();
    for (std::size_t i = 0; i < a[k].numel(); ++i) s += x[i] * y[i];
  }
  return s;
}

}  // namespace

double meta_step(double lambda, double hypergrad, const MetaConfig& config) {
  return std::clamp(lambda - config.meta_lr * hypergrad, config.lambda_min, config.lambda_max);
}

MetaUpdateResult meta_update(const ModelParameters& params, const MetaState& state, const MetaConfig& config,
                             const Batch& train, const Batch& valid, double step_size, TrainMode mode) {
  check_batch(train);
  if (valid.size() == 0) throw DataError("meta_update: empty validation batch");
  check_batch(valid);

  MetaUpdateResult result;
  result.lambda1 = state.lambda1;
  result.lambda2 = state.lambda2;
  if (mode == TrainMode::Baseline) {
    result.lambda1 = result.lambda2 = 0.0;
    return result;
  }

  // Separate gradients of the three losses at theta.
  Rng unused(0);
  const BoundParameters bound(params);
  const Losses l = build_losses(bound, params.config, train, Mode::Eval, unused, {});
  auto grad_of = [&](const Var& loss) {
    for (Var v : bound.vars) v.zero_grad();
    backward(loss);
    return bound.gradients();
  };
  const ParameterBlocks g_rating = grad_of(l.rating);
  const ParameterBlocks g_domain = grad_of(l.domain);
  const ParameterBlocks g_language = grad_of(l.language);

  // Virtual step along the training direction.
  const bool reversal_heads = mode == TrainMode::GradientReversal;
  ModelParameters lookahead = params;
  for (std::size_t k = 0; k < kNumBlocks; ++k) {
    double* p = lookahead.blocks[k].data();
    const double* gr = g_rating[k].data();
    const double* gd = g_domain[k].data();
    const double* gl = g_language[k].data();
    const bool head_only = reversal_heads && !is_encoder_block(k);
    for (std::size_t i = 0; i < lookahead.blocks[k].numel(); ++i) {
      const double d = head_only ? gr[i] + gd[i] + gl[i]
                                 : gr[i] - state.lambda1 * gd[i] - state.lambda2 * gl[i];
      p[i] -= step_size * d;
    }
  }

  const BoundParameters ahead(lookahead);
  const Losses lv = build_losses(ahead, lookahead.config, valid, Mode::Eval, unused, {});
  backward(lv.rating);
  const ParameterBlocks g_meta = ahead.gradients();
  result.meta_loss = lv.rating.value()[0];

  result.hypergrad1 = step_size * dot(g_meta, g_domain, reversal_heads);
  result.hypergrad2 = step_size * dot(g_meta, g_language, reversal_heads);
  result.lambda1 = meta_step(state.lambda1, result.hypergrad1, config);
  result.lambda2 = meta_step(state.lambda2, result.hypergrad2, config);
  return result;
}

bool EarlyStopping::update(double metric) {
  ++epochs_;
  if (best_epoch_ == 0 || metric > best_) {
    best_ = metric;
    best_epoch_ = epochs_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

namespace {

nlohmann::ordered_json losses_json(const LossBreakdown& l) {
  nlohmann::ordered_json j;
  j["rating"] = l.rating;
  j["domain"] = l.domain;
  j["language"] = l.language;
  j["total"] = l.total;
  return j;
}

}  // namespace

void write_log_jsonl(const TrainLog& log, std::ostream& out) {
  std::size_t s = 0;
  std::size_t m = 0;
  for (const auto& e : log.epochs) {
    for (; s < log.steps.size() && log.steps[s].step <= e.last_step; ++s) {
      const auto& r = log.steps[s];
      nlohmann::ordered_json j;
      j["type"] = "step";
      j["step"] = r.step;
      j["epoch"] = r.epoch;
      j["losses"] = losses_json(r.losses);
      j["lambda1"] = r.lambda1;
      j["lambda2"] = r.lambda2;
      j["lr"] = r.lr;
      j["grad_norm"] = r.grad_norm;
      out << j.dump() << '\n';
      for (; m < log.meta.size() && log.meta[m].step == r.step; ++m) {
        const auto& mr = log.meta[m];
        nlohmann::ordered_json k;
        k["type"] = "meta";
        k["step"] = mr.step;
        k["hypergrad1"] = mr.result.hypergrad1;
        k["hypergrad2"] = mr.result.hypergrad2;
        k["meta_loss"] = mr.result.meta_loss;
        k["lambda1"] = mr.result.lambda1;
        k["lambda2"] = mr.result.lambda2;
        out << k.dump() << '\n';
      }
    }
    nlohmann::ordered_json j;
    j["type"] = "epoch";
    j["epoch"] = e.epoch;
    j["last_step"] = e.last_step;
    j["val_accuracy"] = e.val_accuracy;
    j["val_f1"] = e.val_f1;
    j["improved"] = e.improved;
    out << j.dump() << '\n';
  }
  nlohmann::ordered_json j;
  j["type"] = "summary";
  j["best_epoch"] = log.best_epoch;
  j["early_stopped"] = log.early_stopped;
  out << j.dump() << '\n';
}

std::vector<int> predict(const ModelParameters& params, const Dataset& ds) {
  std::vector<SparseFeatures> features;
  features.reserve(ds.size());
  for (const auto& r : ds.records) {
    features.push_back(featurize_sparse(r.title, r.text, params.config.hash_dim, params.config.max_tokens));
  }
  return predict_ratings(params, features);
}

MetricsReport evaluate_model(const ModelParameters& params, const Dataset& ds, const ReportOptions& options) {
  return build_report(ds.records, predict(params, ds), options);
}

TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& valid_set) {
  if (train_set.empty()) throw DataError("train: empty training split");
  if (valid_set.empty()) throw DataError("train: empty validation split");
  if (config.batch_size == 0) throw ConfigError("batch size must be positive");
  if (config.max_epochs == 0) throw ConfigError("max epochs must be positive");
  if (config.meta.interval == 0) throw ConfigError("meta interval must be positive");
  if (config.meta.lambda_min > config.meta.lambda_max) throw ConfigError("lambda bounds are inverted");

  const EncodedDataset train_data = encode_dataset(train_set, config.model);
  const EncodedDataset valid_data = encode_dataset(valid_set, config.model);
  std::vector<int> valid_gold;
  for (const auto& r : valid_set.records) valid_gold.push_back(r.rating);

  TrainResult result;
  ModelParameters params = init_parameters(config.model, config.seed);
  result.best = params;
  AdamW optimizer(config.optimizer, params.blocks);

  const std::size_t n = train_data.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const LinearWarmupSchedule schedule(config.optimizer.lr, steps_per_epoch * config.max_epochs, config.warmup_ratio);

  Rng shuffle_rng = make_stream(config.seed, 1);
  Rng dropout_rng = make_stream(config.seed, 2);
  Rng meta_rng = make_stream(config.seed, 3);

  MetaState meta;
  if (config.mode == TrainMode::Baseline) {
    meta.lambda1 = meta.lambda2 = 0.0;
  } else {
    meta.lambda1 = std::clamp(config.meta.lambda_init, config.meta.lambda_min, config.meta.lambda_max);
    meta.lambda2 = meta.lambda1;
  }

  EarlyStopping stopper(config.patience);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> valid_pool(valid_data.size());
  std::iota(valid_pool.begin(), valid_pool.end(), std::size_t{0});

  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle<std::size_t>(order, shuffle_rng);
    for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
      const std::size_t end = std::min(n, begin + config.batch_size);
      const Batch batch = make_batch(train_data, std::span(order).subspan(begin, end - begin), config.model.hash_dim);

      const double lr = schedule.lr_at(step);
      LossAndGrads lg = combined_loss(params, batch, meta.lambda1, meta.lambda2, config.mode, Mode::Train, dropout_rng);
      const double norm = optimizer.step(params.blocks, lg.grads, lr);
      ++step;
      result.log.steps.push_back({step, epoch, lg.losses, meta.lambda1, meta.lambda2, lr, norm});

      if (config.mode != TrainMode::Baseline && step % config.meta.interval == 0) {
        // Fresh validation minibatch: partial Fisher-Yates over the pool.
        const std::size_t k = std::min(config.meta.batch_size, valid_pool.size());
        for (std::size_t i = 0; i < k; ++i) {
          const auto j = i + static_cast<std::size_t>(uniform_index(meta_rng, valid_pool.size() - i));
          std::swap(valid_pool[i], valid_pool[j]);
        }
        const Batch valid_batch =
            make_batch(valid_data, std::span(valid_pool).subspan(0, k), config.model.hash_dim);
        const MetaUpdateResult mr = meta_update(params, meta, config.meta, batch, valid_batch, lr, config.mode);
        meta.lambda1 = mr.lambda1;
        meta.lambda2 = mr.lambda2;
        ++meta.updates;
        result.log.meta.push_back({step, mr});
      }
    }

    const std::vector<int> pred = predict_ratings(params, valid_data.features);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.last_step = step;
    rec.val_accuracy = accuracy(valid_gold, pred);
    rec.val_f1 = macro_f1(valid_gold, pred);
    rec.improved = stopper.update(rec.val_f1);
    if (rec.improved) result.best = params;
    result.log.epochs.push_back(rec);
    if (stopper.should_stop()) {
      result.log.early_stopped = epoch < config.max_epochs;
      break;
    }
  }
  result.log.best_epoch = stopper.best_epoch();
  result.meta = meta;
  return result;
}

}  // namespace xsent
