#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "xsent/autodiff.hpp"
#include "xsent/rng.hpp"

namespace xsent {

struct ModelConfig {
  std::size_t hash_dim = 4096;
  std::size_t hidden = 256;
  std::size_t max_tokens = 128;
  double dropout = 0.1;

  bool operator==(const ModelConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Features

/// Separator placed between a non-empty title and the body.
inline constexpr std::string_view kSeparatorToken = "[SEP]";

std::uint64_t fnv1a64(std::string_view bytes);

/// Non-zero entries of one feature vector, sorted by index.
using SparseFeatures = std::vector<std::pair<std::uint32_t, double>>;

/// Hashed bag of words: whitespace tokens of title, separator and body,
/// truncated to `max_tokens`, counted into `hash_dim` buckets by FNV-1a and
/// scaled to unit L2 norm.
SparseFeatures featurize_sparse(std::string_view title, std::string_view text,
                                std::size_t hash_dim = 4096, std::size_t max_tokens = 128);

std::vector<double> featurize(std::string_view title, std::string_view text,
                              std::size_t hash_dim = 4096, std::size_t max_tokens = 128);

/// Dense (rows x hash_dim) batch matrix.
Tensor to_dense_batch(std::span<const SparseFeatures* const> rows, std::size_t hash_dim);

// ---------------------------------------------------------------------------
// Parameters

enum class Block : std::size_t {
  EncoderWeight,
  EncoderBias,
  RatingWeight,
  RatingBias,
  DomainWeight,
  DomainBias,
  LanguageWeight,
  LanguageBias,
};

inline constexpr std::size_t kNumBlocks = 8;
inline constexpr std::array<std::string_view, kNumBlocks> kBlockNames{
    "encoder.weight", "encoder.bias", "rating.weight",   "rating.bias",
    "domain.weight",  "domain.bias",  "language.weight", "language.bias"};

inline constexpr std::size_t block_index(Block b) { return static_cast<std::size_t>(b); }

inline constexpr bool is_encoder_block(std::size_t i) { return i <= block_index(Block::EncoderBias); }
inline constexpr bool is_adversarial_block(std::size_t i) { return i >= block_index(Block::DomainWeight); }

/// One tensor per Block, in Block order.
using ParameterBlocks = std::array<Tensor, kNumBlocks>;

struct ModelParameters {
  ModelConfig config;
  ParameterBlocks blocks;

  Tensor& operator[](Block b) { return blocks[block_index(b)]; }
  const Tensor& operator[](Block b) const { return blocks[block_index(b)]; }

  bool operator==(const ModelParameters&) const = default;
};

/// Zero tensors shaped like the parameters.
ParameterBlocks zeros_like(const ParameterBlocks& blocks);

/// Glorot-uniform weights, zero biases.
ModelParameters init_parameters(const ModelConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Forward pass

/// Graph leaves bound to one copy of the parameters.
struct BoundParameters {
  std::array<Var, kNumBlocks> vars;

  explicit BoundParameters(const ModelParameters& p);
  ParameterBlocks gradients() const;
  const Var& operator[](Block b) const { return vars[block_index(b)]; }
};

struct HeadOutputs {
  Var rating;    // B x 4, classes ordered (1, 2, 4, 5)
  Var domain;    // B x 3, (books, movies, music)
  Var language;  // B x 2, (it, ro)
};

/// Per-head gradient multipliers applied between the shared hidden layer and
/// each head (1 means a plain connection).
struct HeadGradientScales {
  double rating = 1.0;
  double domain = 1.0;
  double language = 1.0;
};

/// hidden = relu(x W + b); each head sees its own dropout of `hidden`.
/// Dropout masks are drawn in the order rating, domain, language.
HeadOutputs forward(const BoundParameters& params, const ModelConfig& config, const Var& features,
                    Mode mode, Rng& rng, const HeadGradientScales& scales = {});

/// Eval-mode rating logits, computed without building a graph.
Tensor rating_logits(const ModelParameters& params, const Tensor& features);

/// Predicted ratings (argmax, first maximum on ties).
std::vector<int> predict_ratings(const ModelParameters& params, std::span<const SparseFeatures> features);

// ---------------------------------------------------------------------------
// Checkpoints
//
// Little-endian binary layout:
//   magic "XSNTCKPT", u32 version (1),
//   u64 hash_dim, u64 hidden, u64 max_tokens, f64 dropout,
//   u32 block count, then per block:
//     u32 name length, name bytes, u32 rank, u64 dims[rank], f64 values[]

void save_checkpoint(const ModelParameters& p, std::ostream& out);
void save_checkpoint(const ModelParameters& p, const std::filesystem::path& path);
ModelParameters load_checkpoint(std::istream& in);
ModelParameters load_checkpoint(const std::filesystem::path& path);

}  // namespace xsent
