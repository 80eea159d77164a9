#include <cmath>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "xsent/datagen.hpp"
#include "xsent/trainer.hpp"

using namespace xsent;

namespace {

ModelConfig small_model() { return {64, 8, 128, 0.1}; }

Batch random_batch(std::size_t n, std::size_t dim, Rng& rng) {
  Batch b;
  b.features = Tensor({n, dim});
  for (double& v : b.features.values()) v = uniform01(rng) < 0.2 ? uniform01(rng) : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    b.rating.push_back(uniform_index(rng, 4));
    b.domain.push_back(uniform_index(rng, 3));
    b.language.push_back(uniform_index(rng, 2));
  }
  return b;
}

// Gradient of one head's loss alone, from its own graph.
ParameterBlocks single_loss_grad(const ModelParameters& p, const Batch& b, int which) {
  const BoundParameters bound(p);
  Rng rng(0);
  const HeadOutputs out = forward(bound, p.config, Var::constant(b.features), Mode::Eval, rng);
  const Var loss = which == 0   ? softmax_cross_entropy(out.rating, b.rating)
                   : which == 1 ? softmax_cross_entropy(out.domain, b.domain)
                                : softmax_cross_entropy(out.language, b.language);
  backward(loss);
  return bound.gradients();
}

Dataset tiny_corpus(std::uint64_t seed, std::size_t per_cell) {
  GenConfig g;
  g.seed = seed;
  g.per_cell = per_cell;
  g.rho_train = 0.5;
  return generate(g);
}

TrainConfig tiny_config(TrainMode mode) {
  TrainConfig c;
  c.mode = mode;
  c.model = small_model();
  c.batch_size = 8;
  c.optimizer.lr = 1e-2;
  return c;
}

}  // namespace

TEST_CASE("train mode names") {
  for (TrainMode m : {TrainMode::Baseline, TrainMode::LossReversal, TrainMode::GradientReversal}) {
    CHECK(parse_train_mode(to_string(m)) == m);
  }
  CHECK_FALSE(parse_train_mode("grl").has_value());
}

TEST_CASE("combined_loss: loss identity and lambda = 0") {
  Rng rng(1);
  const auto p = init_parameters(small_model(), 2);
  const Batch b = random_batch(6, 64, rng);
  Rng d(0);
  const auto lr = combined_loss(p, b, 0.5, 0.25, TrainMode::LossReversal, Mode::Train, d);
  CHECK(std::abs(lr.losses.total - (lr.losses.rating - 0.5 * lr.losses.domain - 0.25 * lr.losses.language)) <= 1e-12);
  CHECK(lr.losses.rating >= 0.0);
  CHECK(lr.losses.domain >= 0.0);

  const auto zero = combined_loss(p, b, 0.0, 0.0, TrainMode::LossReversal, Mode::Eval, d);
  CHECK(zero.losses.total == zero.losses.rating);
  for (std::size_t k = 0; k < kNumBlocks; ++k) {
    if (!is_adversarial_block(k)) continue;
    for (double g : zero.grads[k].values()) CHECK(g == 0.0);
  }
  const auto base = combined_loss(p, b, 0.5, 0.5, TrainMode::Baseline, Mode::Eval, d);
  CHECK(base.losses.total == base.losses.rating);
  CHECK(base.grads == zero.grads);
}

TEST_CASE("combined_loss: loss reversal and gradient reversal") {
  Rng rng(2);
  const auto p = init_parameters(small_model(), 3);
  const Batch b = random_batch(5, 64, rng);
  const auto gr_rating = single_loss_grad(p, b, 0);
  const auto gr_domain = single_loss_grad(p, b, 1);
  const auto gr_lang = single_loss_grad(p, b, 2);
  Rng d(0);
  const double l1 = 0.5, l2 = 0.5;
  const auto lr = combined_loss(p, b, l1, l2, TrainMode::LossReversal, Mode::Eval, d);
  const auto gr = combined_loss(p, b, l1, l2, TrainMode::GradientReversal, Mode::Eval, d);

  const auto dw = block_index(Block::DomainWeight);
  const auto lw = block_index(Block::LanguageWeight);
  const auto rw = block_index(Block::RatingWeight);
  for (std::size_t i = 0; i < lr.grads[dw].numel(); ++i) {
    CHECK(lr.grads[dw][i] == -l1 * gr_domain[dw][i]);
    CHECK(gr.grads[dw][i] == gr_domain[dw][i]);
  }
  for (std::size_t i = 0; i < lr.grads[lw].numel(); ++i) {
    CHECK(lr.grads[lw][i] == -l2 * gr_lang[lw][i]);
    CHECK(gr.grads[lw][i] == gr_lang[lw][i]);
  }
  CHECK(lr.grads[rw] == gr_rating[rw]);
  // Shared encoder sees the same gradient in both modes.
  CHECK(lr.grads[block_index(Block::EncoderWeight)] == gr.grads[block_index(Block::EncoderWeight)]);
  CHECK(lr.grads[block_index(Block::EncoderBias)] == gr.grads[block_index(Block::EncoderBias)]);
  CHECK(lr.losses.total == gr.losses.total);
}

TEST_CASE("combined_loss: missing labels") {
  Rng rng(3);
  const auto p = init_parameters(small_model(), 3);
  Batch b = random_batch(4, 64, rng);
  b.domain.clear();
  Rng d(0);
  CHECK_THROWS_AS(combined_loss(p, b, 0.5, 0.5, TrainMode::LossReversal, Mode::Eval, d), DataError);
}

TEST_CASE("meta_step clamps to the configured range") {
  MetaConfig cfg;
  CHECK(meta_step(0.005, 1.0, cfg) == 0.0);
  CHECK(meta_step(1.995, -1.0, cfg) == 2.0);
  CHECK(meta_step(0.5, 10.0, cfg) == doctest::Approx(0.4));
  CHECK(meta_step(0.0, 3.0, cfg) == 0.0);
}

TEST_CASE("meta_update") {
  Rng rng(4);
  auto p = init_parameters(small_model(), 5);
  const Batch train = random_batch(8, 64, rng);
  const Batch valid = random_batch(8, 64, rng);
  const ModelParameters before = p;
  MetaConfig cfg;
  MetaState state;
  const auto r = meta_update(p, state, cfg, train, valid, 0.05, TrainMode::LossReversal);
  CHECK(p == before);
  CHECK(r.lambda1 == doctest::Approx(0.5 - 0.01 * r.hypergrad1));
  CHECK(r.meta_loss > 0.0);

  // Central differences of the same virtual-step recipe over lambda1.
  auto meta_loss = [&](double l1) {
    Rng d(0);
    const auto g = combined_loss(p, train, l1, state.lambda2, TrainMode::LossReversal, Mode::Eval, d);
    ModelParameters q = p;
    for (std::size_t k = 0; k < kNumBlocks; ++k) {
      for (std::size_t i = 0; i < q.blocks[k].numel(); ++i) q.blocks[k][i] -= 0.05 * g.grads[k][i];
    }
    return combined_loss(q, valid, 0.0, 0.0, TrainMode::Baseline, Mode::Eval, d).losses.rating;
  };
  const double eps = 1e-4;
  const double fd = (meta_loss(0.5 + eps) - meta_loss(0.5 - eps)) / (2 * eps);
  CHECK(std::abs(fd - r.hypergrad1) / std::max({std::abs(fd), std::abs(r.hypergrad1), 1e-12}) < 1e-3);

  // No domain signal reaches the encoder: lambda1 stays put.
  p[Block::DomainWeight].fill(0.0);
  p[Block::DomainBias].fill(0.0);
  const auto z = meta_update(p, state, cfg, train, valid, 0.05, TrainMode::LossReversal);
  CHECK(z.hypergrad1 == 0.0);
  CHECK(z.lambda1 == state.lambda1);

  Batch empty;
  empty.features = Tensor({1, 64});
  empty.rating = {0};
  CHECK_THROWS_AS(meta_update(p, state, cfg, train, empty, 0.05, TrainMode::LossReversal), DataError);
}

TEST_CASE("early stopping with patience 3") {
  EarlyStopping s(3);
  CHECK(s.update(60));
  CHECK_FALSE(s.update(59));
  CHECK_FALSE(s.update(58));
  CHECK_FALSE(s.should_stop());
  CHECK_FALSE(s.update(57));
  CHECK(s.should_stop());
  CHECK(s.best_epoch() == 1);
  CHECK(s.best() == 60);

  EarlyStopping t(3);
  t.update(10);
  t.update(10);  // ties are not improvements
  CHECK(t.best_epoch() == 1);
}

TEST_CASE("train: schedule of meta updates, lambda bounds, determinism") {
  const Dataset ds = tiny_corpus(1, 40);
  const Dataset tr = ds.filter(Split::Train), va = ds.filter(Split::Valid);
  const TrainConfig cfg = tiny_config(TrainMode::LossReversal);
  const TrainResult a = train(cfg, tr, va);
  // 240 records / batch 8 = 30 steps per epoch.
  REQUIRE_FALSE(a.log.steps.empty());
  CHECK(a.log.steps.front().lambda1 == 0.5);
  CHECK(a.log.steps.front().lambda2 == 0.5);
  for (const auto& m : a.log.meta) CHECK(m.step % 100 == 0);
  if (a.log.steps.size() >= 100) CHECK(a.log.meta.front().step == 100);
  CHECK(a.log.meta.size() == a.log.steps.size() / 100);
  for (const auto& s : a.log.steps) {
    CHECK(s.lambda1 >= 0.0);
    CHECK(s.lambda1 <= 2.0);
    CHECK(std::abs(s.losses.total - (s.losses.rating - s.lambda1 * s.losses.domain - s.lambda2 * s.losses.language)) <=
          1e-12);
  }
  CHECK(a.log.best_epoch >= 1);

  const TrainResult b = train(cfg, tr, va);
  std::ostringstream la, lb;
  write_log_jsonl(a.log, la);
  write_log_jsonl(b.log, lb);
  CHECK(la.str() == lb.str());
  CHECK(a.best == b.best);

  // Log lines are in chronological order.
  std::istringstream in(la.str());
  std::string line;
  std::size_t last_step = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j["type"] == "step") {
      CHECK(j["step"].get<std::size_t>() == last_step + 1);
      last_step = j["step"];
    } else if (j["type"] == "meta" || j["type"] == "epoch") {
      CHECK(j[j["type"] == "meta" ? "step" : "last_step"].get<std::size_t>() == last_step);
    }
  }
}

TEST_CASE("train: baseline keeps lambda at 0 and ignores auxiliary labels") {
  const Dataset ds = tiny_corpus(2, 20);
  Dataset tr = ds.filter(Split::Train);
  const Dataset va = ds.filter(Split::Valid);
  const TrainConfig cfg = tiny_config(TrainMode::Baseline);
  const TrainResult a = train(cfg, tr, va);
  CHECK(a.log.meta.empty());
  for (const auto& s : a.log.steps) {
    CHECK(s.lambda1 == 0.0);
    CHECK(s.lambda2 == 0.0);
  }
  for (auto& r : tr.records) {
    r.domain = static_cast<Domain>((index_of(r.domain) + 1) % 3);
    r.language = r.language == Language::IT ? Language::RO : Language::IT;
  }
  const TrainResult b = train(cfg, tr, va);
  CHECK(a.best == b.best);
}

TEST_CASE("train: errors") {
  const Dataset ds = tiny_corpus(3, 4);
  CHECK_THROWS_AS(train(tiny_config(TrainMode::Baseline), Dataset{}, ds.filter(Split::Valid)), DataError);
  CHECK_THROWS_AS(train(tiny_config(TrainMode::Baseline), ds.filter(Split::Train), Dataset{}), DataError);
  auto cfg = tiny_config(TrainMode::Baseline);
  cfg.batch_size = 0;
  CHECK_THROWS_AS(train(cfg, ds.filter(Split::Train), ds.filter(Split::Valid)), ConfigError);
}

TEST_CASE("evaluate_model reports every cell") {
  const Dataset ds = tiny_corpus(4, 8);
  const auto p = init_parameters(small_model(), 1);
  const auto report = evaluate_model(p, ds.filter(Split::Test));
  for (const auto& row : report.cells) {
    for (const auto& c : row) {
      REQUIRE(c.has_value());
      CHECK(c->count == 8);
    }
  }
  CHECK(predict(p, ds).size() == ds.size());
}
