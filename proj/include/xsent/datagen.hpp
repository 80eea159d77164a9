#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "xsent/corpus.hpp"

namespace xsent {

/**
 * Synthetic corpus with the same 2 x 3 x 4 cell layout as the real one.
 *
 * Every token of a record is drawn from one of four sources:
 *   - sentiment words "{lang}_s{k}": the concept index k is shared by both
 *     languages and carries the rating, the surface form does not;
 *   - language words "{lang}_w{k}": no signal beyond the language;
 *   - domain words "{domain}_d{k}": reveal the domain, and with probability
 *     |rho| their group follows the rating (mirrored for rho < 0);
 *   - noise words "n{k}".
 */
struct GenConfig {
  std::uint64_t seed = 42;
  std::size_t per_cell = 500;  // records per (language, domain, split)
  std::vector<Split> splits{Split::Train, Split::Valid, Split::Test};

  std::size_t sentiment_vocab = 200;  // concepts, split evenly over the 4 ratings
  std::size_t language_vocab = 500;   // per language
  std::size_t domain_vocab = 100;     // per domain, split evenly over 4 groups
  std::size_t noise_vocab = 1000;

  double rho_train = 0.0;  // confound strength in train and valid
  double rho_test = 0.0;

  double mean_length_it = 37.0;
  double mean_length_ro = 89.0;
  std::size_t length_shape = 1;  // 1 = geometric; larger values narrow the spread
  std::size_t max_length = 512;

  // Share of token positions per source; the remainder is noise.
  double sentiment_rate = 0.15;
  double domain_rate = 0.15;
  double language_rate = 0.35;
  double sentiment_purity = 0.6;  // chance a sentiment word comes from the rating's own group

  double title_rate = 0.55;
  double mean_title_length = 4.0;
};

/// Throws ConfigError for an invalid configuration.
void validate(const GenConfig& cfg);

/// Records ordered by split, language, domain. Each cell draws from its own
/// seeded stream, so cells do not depend on each other.
Dataset generate(const GenConfig& cfg);

}  // namespace xsent
