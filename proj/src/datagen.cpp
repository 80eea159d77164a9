#include "xsent/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "xsent/rng.hpp"

namespace xsent {
namespace {

constexpr std::size_t kGroups = kNumRatingClasses;

// Word k belongs to group k % 4.
std::size_t draw_from_group(Rng& rng, std::size_t vocab, std::size_t group) {
  const std::size_t members = (vocab - group + kGroups - 1) / kGroups;
  return group + kGroups * static_cast<std::size_t>(uniform_index(rng, members));
}

struct CellSpec {
  Language language;
  Domain domain;
  Split split;
  double rho;
  double mean_length;
};

class CellGenerator {
 public:
  CellGenerator(const GenConfig& cfg, const CellSpec& spec, Rng& rng) : cfg_(cfg), spec_(spec), rng_(rng) {
    lang_ = std::string(to_string(spec.language));
    domain_ = std::string(to_string(spec.domain));
  }

  Review make(int rating) {
    Review r;
    r.rating = rating;
    r.language = spec_.language;
    r.domain = spec_.domain;
    r.split = spec_.split;
    const std::size_t cls = rating_to_class(rating);
    if (uniform01(rng_) < cfg_.title_rate) {
      const auto n = geometric_trials(rng_, 1.0 / std::max(1.0, cfg_.mean_title_length));
      r.title = words(std::min<std::size_t>(n, cfg_.max_length), cls);
    }
    r.text = words(body_length(), cls);
    return r;
  }

 private:
  std::size_t body_length() {
    // Sum of `shape` geometrics: negative binomial with the configured mean.
    const double shape = static_cast<double>(cfg_.length_shape);
    const double p = std::min(1.0, shape / spec_.mean_length);
    std::size_t n = 0;
    for (std::size_t i = 0; i < cfg_.length_shape; ++i) n += geometric_trials(rng_, p);
    return std::clamp<std::size_t>(n, 1, cfg_.max_length);
  }

  std::string words(std::size_t n, std::size_t cls) {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
      if (i > 0) out += ' ';
      out += word(cls);
    }
    return out;
  }

  std::string word(std::size_t cls) {
    const double u = uniform01(rng_);
    double edge = cfg_.sentiment_rate;
    if (u < edge) {
      const std::size_t k = uniform01(rng_) < cfg_.sentiment_purity
                                ? draw_from_group(rng_, cfg_.sentiment_vocab, cls)
                                : static_cast<std::size_t>(uniform_index(rng_, cfg_.sentiment_vocab));
      return lang_ + "_s" + std::to_string(k);
    }
    edge += cfg_.domain_rate;
    if (u < edge) {
      std::size_t group = static_cast<std::size_t>(uniform_index(rng_, kGroups));
      if (uniform01(rng_) < std::abs(spec_.rho)) group = spec_.rho >= 0.0 ? cls : kGroups - 1 - cls;
      return domain_ + "_d" + std::to_string(draw_from_group(rng_, cfg_.domain_vocab, group));
    }
    edge += cfg_.language_rate;
    if (u < edge) return lang_ + "_w" + std::to_string(uniform_index(rng_, cfg_.language_vocab));
    return "n" + std::to_string(uniform_index(rng_, cfg_.noise_vocab));
  }

  const GenConfig& cfg_;
  CellSpec spec_;
  Rng& rng_;
  std::string lang_;
  std::string domain_;
};

void check_rate(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
}

}  // namespace

void validate(const GenConfig& cfg) {
  if (cfg.per_cell == 0) throw ConfigError("per-cell sample count must be positive");
  if (cfg.splits.empty()) throw ConfigError("no splits requested");
  if (cfg.sentiment_vocab < kGroups) throw ConfigError("sentiment vocabulary needs at least 4 words");
  if (cfg.domain_vocab < kGroups) throw ConfigError("domain vocabulary needs at least 4 words");
  if (cfg.language_vocab == 0) throw ConfigError("language vocabulary must be positive");
  if (cfg.noise_vocab == 0) throw ConfigError("noise vocabulary must be positive");
  if (!(std::abs(cfg.rho_train) <= 1.0)) throw ConfigError("rho_train must lie in [-1, 1]");
  if (!(std::abs(cfg.rho_test) <= 1.0)) throw ConfigError("rho_test must lie in [-1, 1]");
  if (!(cfg.mean_length_it >= 1.0) || !(cfg.mean_length_ro >= 1.0)) throw ConfigError("mean lengths must be >= 1");
  if (cfg.length_shape == 0) throw ConfigError("length shape must be positive");
  if (cfg.max_length == 0) throw ConfigError("max length must be positive");
  check_rate(cfg.sentiment_rate, "sentiment_rate");
  check_rate(cfg.domain_rate, "domain_rate");
  check_rate(cfg.language_rate, "language_rate");
  check_rate(cfg.sentiment_purity, "sentiment_purity");
  check_rate(cfg.title_rate, "title_rate");
  if (cfg.sentiment_rate + cfg.domain_rate + cfg.language_rate > 1.0 + 1e-12) {
    throw ConfigError("token source rates sum to more than 1");
  }
}

Dataset generate(const GenConfig& cfg) {
  validate(cfg);
  Dataset ds;
  ds.provenance = "synthetic:seed=" + std::to_string(cfg.seed);
  for (Split split : cfg.splits) {
    for (Language lang : kLanguages) {
      for (Domain domain : kDomains) {
        const CellSpec spec{lang, domain, split, split == Split::Test ? cfg.rho_test : cfg.rho_train,
                            lang == Language::IT ? cfg.mean_length_it : cfg.mean_length_ro};
        Rng rng = make_stream(cfg.seed, 1000 + 100 * index_of(split) + 10 * index_of(lang) + index_of(domain));
        std::vector<int> ratings(cfg.per_cell);
        for (std::size_t i = 0; i < ratings.size(); ++i) ratings[i] = kRatings[i % kGroups];
        shuffle<int>(ratings, rng);
        CellGenerator gen(cfg, spec, rng);
        for (int rating : ratings) ds.records.push_back(gen.make(rating));
      }
    }
  }
  return ds;
}

}  // namespace xsent
