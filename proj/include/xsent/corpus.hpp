#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "xsent/types.hpp"

namespace xsent {

struct Review {
  std::string title;
  std::string text;
  int rating = 5;
  Language language = Language::IT;
  Domain domain = Domain::Books;
  Split split = Split::Train;

  bool operator==(const Review&) const = default;
};

struct Dataset {
  std::vector<Review> records;
  std::string provenance;

  bool operator==(const Dataset&) const = default;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  /// Records of one split, in their original order.
  Dataset filter(Split split) const;
};

// ---------------------------------------------------------------------------
// JSON-lines I/O

/// Parses one record. `line_no` is only used in diagnostics.
Review parse_review_line(std::string_view line, std::size_t line_no);
std::string format_review_line(const Review& r);

Dataset read_jsonl(std::istream& in, std::string provenance = "stream");
Dataset read_jsonl(const std::filesystem::path& path);
void write_jsonl(const Dataset& ds, std::ostream& out);
void write_jsonl(const Dataset& ds, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Cleaning

/// Applies normalize_text to title and text of every record.
Dataset normalize(const Dataset& ds);

struct DedupResult {
  Dataset dataset;
  std::size_t removed = 0;
};

/// Keeps the first record for every exact (title, text) pair.
DedupResult deduplicate(const Dataset& ds);

enum class QualityReason { LowConfidence, LanguageMismatch };

struct QualityFlag {
  std::size_t record_index = 0;
  QualityReason reason = QualityReason::LowConfidence;
  std::string detected_language;
  double confidence = 0.0;
};

std::string_view to_string(QualityReason r);

struct Detection {
  std::string language;  // "it", "ro", ...
  double confidence = 0.0;
};

/// Language identification provider. May throw on failure.
using LanguageDetector = std::function<Detection(std::string_view text)>;

inline constexpr double kMinLanguageConfidence = 0.95;

/// Flags language mismatches and detections below kMinLanguageConfidence.
/// A mismatch takes precedence when both apply.
std::vector<QualityFlag> verify_language(const Dataset& ds, const LanguageDetector& detector,
                                         double min_confidence = kMinLanguageConfidence);

/**
 * Deterministic detector for tests and offline runs. Scores a text by
 * counting frequent Italian and Romanian function words and diacritics,
 * plus the `it_` / `ro_` token prefixes emitted by the synthetic generator.
 */
Detection stub_detect_language(std::string_view text);

// ---------------------------------------------------------------------------
// Statistics

/// Number of maximal non-whitespace runs.
std::size_t count_tokens(std::string_view text);

struct TokenSummary {
  std::size_t count = 0;  // number of documents summarised
  double mean = 0.0;
  double median = 0.0;
  double stddev = 0.0;  // population standard deviation
  std::size_t min = 0;
  std::size_t max = 0;
};

TokenSummary summarize_counts(std::vector<std::size_t> counts);

struct CorpusStats {
  std::size_t total = 0;
  std::map<int, std::size_t> rating_histogram;  // always holds keys 1,2,4,5
  std::size_t titles_present = 0;
  TokenSummary text_tokens;
  TokenSummary title_tokens;
  std::array<TokenSummary, kNumLanguages> text_tokens_by_language{};
  std::array<TokenSummary, kNumDomains> text_tokens_by_domain{};
  std::array<TokenSummary, kNumLanguages> title_tokens_by_language{};
  std::array<TokenSummary, kNumDomains> title_tokens_by_domain{};
};

CorpusStats compute_stats(const Dataset& ds);

std::string stats_to_json(const CorpusStats& s);
std::string stats_to_table(const CorpusStats& s);

}  // namespace xsent
