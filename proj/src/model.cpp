#include "xsent/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace xsent {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

bool is_token_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

void append_tokens(std::string_view text, std::vector<std::string_view>& out, std::size_t limit) {
  std::size_t i = 0;
  while (i < text.size() && out.size() < limit) {
    while (i < text.size() && is_token_space(text[i])) ++i;
    const std::size_t b = i;
    while (i < text.size() && !is_token_space(text[i])) ++i;
    if (i > b) out.push_back(text.substr(b, i - b));
  }
}

}  // namespace

SparseFeatures featurize_sparse(std::string_view title, std::string_view text, std::size_t hash_dim,
                                std::size_t max_tokens) {
  if (hash_dim == 0) throw ConfigError("featurize: hash dimension must be positive");
  std::vector<std::string_view> tokens;
  append_tokens(title, tokens, max_tokens);
  if (!tokens.empty() && tokens.size() < max_tokens) tokens.push_back(kSeparatorToken);
  append_tokens(text, tokens, max_tokens);

  std::vector<std::uint32_t> buckets;
  buckets.reserve(tokens.size());
  for (auto t : tokens) buckets.push_back(static_cast<std::uint32_t>(fnv1a64(t) % hash_dim));
  std::sort(buckets.begin(), buckets.end());

  SparseFeatures features;
  for (std::size_t i = 0; i < buckets.size();) {
    std::size_t j = i;
    while (j < buckets.size() && buckets[j] == buckets[i]) ++j;
    features.emplace_back(buckets[i], static_cast<double>(j - i));
    i = j;
  }
  double norm = 0.0;
  for (const auto& [_, v] : features) norm += v * v;
  norm = std::sqrt(norm);
  for (auto& [_, v] : features) v /= norm;
  return features;
}

std::vector<double> featurize(std::string_view title, std::string_view text, std::size_t hash_dim,
                              std::size_t max_tokens) {
  std::vector<double> dense(hash_dim, 0.0);
  for (const auto& [i, v] : featurize_sparse(title, text, hash_dim, max_tokens)) dense[i] = v;
  return dense;
}

Tensor to_dense_batch(std::span<const SparseFeatures* const> rows, std::size_t hash_dim) {
  Tensor batch({rows.size(), hash_dim});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (const auto& [i, v] : *rows[r]) {
      if (i >= hash_dim) throw DimensionError("feature index " + std::to_string(i) + " exceeds width " + std::to_string(hash_dim));
      batch.at(r, i) = v;
    }
  }
  return batch;
}

ParameterBlocks zeros_like(const ParameterBlocks& blocks) {
  ParameterBlocks out;
  for (std::size_t i = 0; i < kNumBlocks; ++i) out[i] = Tensor(blocks[i].shape());
  return out;
}

ModelParameters init_parameters(const ModelConfig& config, std::uint64_t seed) {
  if (config.hash_dim == 0 || config.hidden == 0) throw ConfigError("model dimensions must be positive");
  if (!(config.dropout >= 0.0 && config.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  ModelParameters p;
  p.config = config;
  const std::size_t h = config.hidden;
  const std::array<std::pair<std::size_t, std::size_t>, 4> layers{{
      {config.hash_dim, h}, {h, kNumRatingClasses}, {h, kNumDomains}, {h, kNumLanguages}}};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto [fan_in, fan_out] = layers[l];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Rng rng = make_stream(seed, 100 + l);
    Tensor w({fan_in, fan_out});
    for (auto& v : w.values()) v = uniform_real(rng, -bound, bound);
    p.blocks[2 * l] = std::move(w);
    p.blocks[2 * l + 1] = Tensor({fan_out});
  }
  return p;
}

BoundParameters::BoundParameters(const ModelParameters& p) {
  for (std::size_t i = 0; i < kNumBlocks; ++i) vars[i] = Var::parameter(p.blocks[i]);
}

ParameterBlocks BoundParameters::gradients() const {
  ParameterBlocks g;
  for (std::size_t i = 0; i < kNumBlocks; ++i) g[i] = vars[i].grad();
  return g;
}

HeadOutputs forward(const BoundParameters& params, const ModelConfig& config, const Var& features,
                    Mode mode, Rng& rng, const HeadGradientScales& scales) {
  const auto& w = params[Block::EncoderWeight].value();
  if (features.value().rank() != 2 || features.value().cols() != w.rows()) {
    throw DimensionError("forward: features of shape " + shape_string(features.shape()) +
                         " do not match encoder weights " + shape_string(w.shape()));
  }
  Var hidden = relu(add_bias(matmul(features, params[Block::EncoderWeight]), params[Block::EncoderBias]));

  auto head = [&](double scale, Block weight, Block bias) {
    Var h = scale_gradient(dropout(hidden, config.dropout, mode, rng), scale);
    return add_bias(matmul(h, params[weight]), params[bias]);
  };
  HeadOutputs out;
  out.rating = head(scales.rating, Block::RatingWeight, Block::RatingBias);
  out.domain = head(scales.domain, Block::DomainWeight, Block::DomainBias);
  out.language = head(scales.language, Block::LanguageWeight, Block::LanguageBias);
  return out;
}

namespace {

// Hidden activations for one sparse row; same accumulation order as matmul.
void hidden_from_sparse(const ModelParameters& p, const SparseFeatures& x, std::vector<double>& h) {
  const Tensor& w = p[Block::EncoderWeight];
  const Tensor& b = p[Block::EncoderBias];
  const std::size_t n = w.cols();
  h.assign(n, 0.0);
  for (const auto& [i, v] : x) {
    if (i >= w.rows()) throw DimensionError("feature index " + std::to_string(i) + " exceeds encoder width " + std::to_string(w.rows()));
    if (v == 0.0) continue;
    const double* row = w.data() + static_cast<std::size_t>(i) * n;
    for (std::size_t j = 0; j < n; ++j) h[j] += v * row[j];
  }
  for (std::size_t j = 0; j < n; ++j) {
    h[j] += b[j];
    h[j] = h[j] > 0.0 ? h[j] : 0.0;
  }
}

void rating_row(const ModelParameters& p, const std::vector<double>& h, double* out) {
  const Tensor& w = p[Block::RatingWeight];
  const Tensor& b = p[Block::RatingBias];
  const std::size_t c = w.cols();
  for (std::size_t j = 0; j < c; ++j) out[j] = 0.0;
  for (std::size_t k = 0; k < h.size(); ++k) {
    if (h[k] == 0.0) continue;
    for (std::size_t j = 0; j < c; ++j) out[j] += h[k] * w.at(k, j);
  }
  for (std::size_t j = 0; j < c; ++j) out[j] += b[j];
}

}  // namespace

Tensor rating_logits(const ModelParameters& params, const Tensor& features) {
  const auto& w = params[Block::EncoderWeight];
  if (features.rank() != 2 || features.cols() != w.rows()) {
    throw DimensionError("rating_logits: features of shape " + shape_string(features.shape()) +
                         " do not match encoder weights " + shape_string(w.shape()));
  }
  Tensor out({features.rows(), kNumRatingClasses});
  std::vector<double> h;
  SparseFeatures row;
  for (std::size_t r = 0; r < features.rows(); ++r) {
    row.clear();
    for (std::size_t i = 0; i < features.cols(); ++i) {
      if (features.at(r, i) != 0.0) row.emplace_back(static_cast<std::uint32_t>(i), features.at(r, i));
    }
    hidden_from_sparse(params, row, h);
    rating_row(params, h, out.data() + r * kNumRatingClasses);
  }
  return out;
}

std::vector<int> predict_ratings(const ModelParameters& params, std::span<const SparseFeatures> features) {
  std::vector<int> out;
  out.reserve(features.size());
  std::vector<double> h;
  std::array<double, kNumRatingClasses> logits{};
  for (const auto& x : features) {
    hidden_from_sparse(params, x, h);
    rating_row(params, h, logits.data());
    const auto best = std::max_element(logits.begin(), logits.end()) - logits.begin();
    out.push_back(class_to_rating(static_cast<std::size_t>(best)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'X', 'S', 'N', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("checkpoint: unexpected end of file");
  return v;
}

}  // namespace

void save_checkpoint(const ModelParameters& p, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, p.config.hash_dim);
  put<std::uint64_t>(out, p.config.hidden);
  put<std::uint64_t>(out, p.config.max_tokens);
  put<double>(out, p.config.dropout);
  put<std::uint32_t>(out, kNumBlocks);
  for (std::size_t i = 0; i < kNumBlocks; ++i) {
    const auto name = kBlockNames[i];
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Tensor& t = p.blocks[i];
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
}

void save_checkpoint(const ModelParameters& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeError("cannot write checkpoint " + path.string());
  save_checkpoint(p, out);
  if (!out) throw RuntimeError("write failed for checkpoint " + path.string());
}

ModelParameters load_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw DataError("checkpoint: bad magic");
  if (const auto v = get<std::uint32_t>(in); v != kVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(v));
  }
  ModelParameters p;
  p.config.hash_dim = get<std::uint64_t>(in);
  p.config.hidden = get<std::uint64_t>(in);
  p.config.max_tokens = get<std::uint64_t>(in);
  p.config.dropout = get<double>(in);
  if (get<std::uint32_t>(in) != kNumBlocks) throw DataError("checkpoint: wrong block count");

  const std::size_t h = p.config.hidden;
  const std::array<std::vector<std::size_t>, kNumBlocks> expected{{
      {p.config.hash_dim, h}, {h}, {h, kNumRatingClasses}, {kNumRatingClasses},
      {h, kNumDomains}, {kNumDomains}, {h, kNumLanguages}, {kNumLanguages}}};
  for (std::size_t i = 0; i < kNumBlocks; ++i) {
    const auto len = get<std::uint32_t>(in);
    if (len > 256) throw DataError("checkpoint: corrupt block name");
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in || name != kBlockNames[i]) throw DataError("checkpoint: expected block " + std::string(kBlockNames[i]));
    const auto rank = get<std::uint32_t>(in);
    if (rank > 2) throw DataError("checkpoint: block " + name + " has rank " + std::to_string(rank));
    std::vector<std::size_t> shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(get<std::uint64_t>(in));
    if (shape != expected[i]) {
      throw DataError("checkpoint: block " + name + " has shape " + shape_string(shape) + ", expected " +
                      shape_string(expected[i]));
    }
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!in) throw DataError("checkpoint: truncated block " + name);
    p.blocks[i] = std::move(t);
  }
  return p;
}

ModelParameters load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return load_checkpoint(in);
}

}  // namespace xsent
