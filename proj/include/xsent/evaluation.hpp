#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xsent/corpus.hpp"
#include "xsent/types.hpp"

namespace xsent {

/// Prediction value for an unparseable model answer. Allowed in predictions
/// only; it is scored as wrong and never counts as a false positive.
inline constexpr int kNoPrediction = 0;

/// 100 * correct / total.
double accuracy(std::span<const int> gold, std::span<const int> pred);

/// Unweighted mean of per-class F1 over {1,2,4,5}, as a percentage. A class
/// with no gold and no predicted instances contributes 0.
double macro_f1(std::span<const int> gold, std::span<const int> pred);

/// Per-class F1 (fractions), in class order (1, 2, 4, 5).
std::array<double, kNumRatingClasses> per_class_f1(std::span<const int> gold, std::span<const int> pred);

struct Score {
  double accuracy = 0.0;
  double f1 = 0.0;
  std::size_t count = 0;
};

/// How domain and language columns aggregate their cells.
enum class Aggregation {
  Pooled,    // metrics over the pooled predictions of the member cells
  Averaged,  // unweighted mean of the member cells' metrics
};

/// How the overall "Avg" column is formed.
enum class AverageOver {
  Cells,    // mean of the six language x domain cells
  Columns,  // mean of the five Books/Movies/Music/IT/RO columns
};

struct ReportOptions {
  Aggregation aggregation = Aggregation::Pooled;
  AverageOver average = AverageOver::Cells;
};

struct MetricsReport {
  // Indexed [language][domain]; nullopt when the cell has no examples.
  std::array<std::array<std::optional<Score>, kNumDomains>, kNumLanguages> cells{};
  std::array<std::optional<Score>, kNumDomains> by_domain{};
  std::array<std::optional<Score>, kNumLanguages> by_language{};
  std::optional<Score> average;
  Score overall;  // pooled over every example
  ReportOptions options;
};

MetricsReport build_report(const std::vector<Review>& gold, std::span<const int> predictions,
                           const ReportOptions& options = {});

std::string report_to_json(const MetricsReport& r);
/// Fixed-width table: Books | Movies | Music | IT | RO | Avg, each Acc. / F1.
std::string report_to_table(const MetricsReport& r, const std::string& row_label = "model");

}  // namespace xsent
