#include "xsent/evaluation.hpp"

#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace xsent {
namespace {

void check_lengths(std::span<const int> gold, std::span<const int> pred, const char* op) {
  if (gold.size() != pred.size()) {
    throw DataError(std::string(op) + ": " + std::to_string(gold.size()) + " gold labels but " +
                    std::to_string(pred.size()) + " predictions");
  }
  if (gold.empty()) throw DataError(std::string(op) + ": empty input");
}

std::optional<std::size_t> pred_class(int p) {
  if (p == kNoPrediction) return std::nullopt;
  if (!is_valid_rating(p)) throw DataError("unknown predicted label " + std::to_string(p));
  return rating_to_class(p);
}

std::size_t gold_class(int g) {
  if (!is_valid_rating(g)) throw DataError("unknown gold label " + std::to_string(g));
  return rating_to_class(g);
}

}  // namespace

double accuracy(std::span<const int> gold, std::span<const int> pred) {
  check_lengths(gold, pred, "accuracy");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    gold_class(gold[i]);
    pred_class(pred[i]);
    if (gold[i] == pred[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(gold.size());
}

std::array<double, kNumRatingClasses> per_class_f1(std::span<const int> gold, std::span<const int> pred) {
  check_lengths(gold, pred, "macro_f1");
  std::array<std::size_t, kNumRatingClasses> tp{}, fp{}, fn{};
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const std::size_t g = gold_class(gold[i]);
    const auto p = pred_class(pred[i]);
    if (p && *p == g) {
      ++tp[g];
    } else {
      ++fn[g];
      if (p) ++fp[*p];
    }
  }
  std::array<double, kNumRatingClasses> f1{};
  for (std::size_t c = 0; c < kNumRatingClasses; ++c) {
    const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
    f1[c] = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
  }
  return f1;
}

double macro_f1(std::span<const int> gold, std::span<const int> pred) {
  const auto f1 = per_class_f1(gold, pred);
  double sum = 0.0;
  for (double v : f1) sum += v;
  return 100.0 * sum / static_cast<double>(kNumRatingClasses);
}

namespace {

Score score(const std::vector<int>& gold, const std::vector<int>& pred) {
  return {accuracy(gold, pred), macro_f1(gold, pred), gold.size()};
}

std::optional<Score> mean_of(const std::vector<std::optional<Score>>& parts) {
  Score s;
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (!p) continue;
    s.accuracy += p->accuracy;
    s.f1 += p->f1;
    s.count += p->count;
    ++n;
  }
  if (n == 0) return std::nullopt;
  s.accuracy /= static_cast<double>(n);
  s.f1 /= static_cast<double>(n);
  return s;
}

}  // namespace

MetricsReport build_report(const std::vector<Review>& gold, std::span<const int> predictions,
                           const ReportOptions& options) {
  if (gold.size() != predictions.size()) {
    throw DataError("build_report: " + std::to_string(gold.size()) + " records but " +
                    std::to_string(predictions.size()) + " predictions");
  }
  if (gold.empty()) throw DataError("build_report: empty input");

  MetricsReport report;
  report.options = options;
  std::array<std::array<std::vector<int>, kNumDomains>, kNumLanguages> g{}, p{};
  std::vector<int> all_g, all_p;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto l = index_of(gold[i].language);
    const auto d = index_of(gold[i].domain);
    g[l][d].push_back(gold[i].rating);
    p[l][d].push_back(predictions[i]);
    all_g.push_back(gold[i].rating);
    all_p.push_back(predictions[i]);
  }
  report.overall = score(all_g, all_p);

  for (std::size_t l = 0; l < kNumLanguages; ++l) {
    for (std::size_t d = 0; d < kNumDomains; ++d) {
      if (!g[l][d].empty()) report.cells[l][d] = score(g[l][d], p[l][d]);
    }
  }

  for (std::size_t d = 0; d < kNumDomains; ++d) {
    if (options.aggregation == Aggregation::Pooled) {
      std::vector<int> gg, pp;
      for (std::size_t l = 0; l < kNumLanguages; ++l) {
        gg.insert(gg.end(), g[l][d].begin(), g[l][d].end());
        pp.insert(pp.end(), p[l][d].begin(), p[l][d].end());
      }
      if (!gg.empty()) report.by_domain[d] = score(gg, pp);
    } else {
      std::vector<std::optional<Score>> parts;
      for (std::size_t l = 0; l < kNumLanguages; ++l) parts.push_back(report.cells[l][d]);
      report.by_domain[d] = mean_of(parts);
    }
  }
  for (std::size_t l = 0; l < kNumLanguages; ++l) {
    if (options.aggregation == Aggregation::Pooled) {
      std::vector<int> gg, pp;
      for (std::size_t d = 0; d < kNumDomains; ++d) {
        gg.insert(gg.end(), g[l][d].begin(), g[l][d].end());
        pp.insert(pp.end(), p[l][d].begin(), p[l][d].end());
      }
      if (!gg.empty()) report.by_language[l] = score(gg, pp);
    } else {
      std::vector<std::optional<Score>> parts(report.cells[l].begin(), report.cells[l].end());
      report.by_language[l] = mean_of(parts);
    }
  }

  std::vector<std::optional<Score>> parts;
  if (options.average == AverageOver::Cells) {
    for (const auto& row : report.cells) parts.insert(parts.end(), row.begin(), row.end());
  } else {
    parts.insert(parts.end(), report.by_domain.begin(), report.by_domain.end());
    parts.insert(parts.end(), report.by_language.begin(), report.by_language.end());
  }
  report.average = mean_of(parts);
  if (report.average && options.average == AverageOver::Columns) report.average->count = gold.size();
  return report;
}

namespace {

nlohmann::ordered_json score_json(const std::optional<Score>& s) {
  if (!s) return nullptr;
  nlohmann::ordered_json j;
  j["accuracy"] = s->accuracy;
  j["f1"] = s->f1;
  j["count"] = s->count;
  return j;
}

}  // namespace

std::string report_to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["aggregation"] = r.options.aggregation == Aggregation::Pooled ? "pooled" : "averaged";
  j["average_over"] = r.options.average == AverageOver::Cells ? "cells" : "columns";
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (auto l : kLanguages) {
    for (auto d : kDomains) {
      nlohmann::ordered_json c;
      c["language"] = std::string(to_string(l));
      c["domain"] = std::string(to_string(d));
      c["score"] = score_json(r.cells[index_of(l)][index_of(d)]);
      cells.push_back(c);
    }
  }
  j["cells"] = cells;
  nlohmann::ordered_json dom;
  for (auto d : kDomains) dom[std::string(to_string(d))] = score_json(r.by_domain[index_of(d)]);
  j["by_domain"] = dom;
  nlohmann::ordered_json lang;
  for (auto l : kLanguages) lang[std::string(to_string(l))] = score_json(r.by_language[index_of(l)]);
  j["by_language"] = lang;
  j["average"] = score_json(r.average);
  j["overall"] = score_json(r.overall);
  return j.dump(2);
}

std::string report_to_table(const MetricsReport& r, const std::string& row_label) {
  std::ostringstream out;
  const int label_w = std::max<int>(8, static_cast<int>(row_label.size()) + 2);
  auto cell = [&](const std::optional<Score>& s) {
    if (!s) {
      out << std::setw(8) << "-" << std::setw(8) << "-";
    } else {
      out << std::fixed << std::setprecision(2) << std::setw(8) << s->accuracy << std::setw(8) << s->f1;
    }
    out << " |";
  };
  out << std::left << std::setw(label_w) << "" << std::right << '|';
  for (const char* h : {"Books", "Movies", "Music", "IT", "RO", "Avg."}) out << std::setw(16) << h << " |";
  out << '\n' << std::left << std::setw(label_w) << "" << std::right << '|';
  for (int i = 0; i < 6; ++i) out << std::setw(8) << "Acc." << std::setw(8) << "F1" << " |";
  out << '\n' << std::left << std::setw(label_w) << row_label << std::right << '|';
  for (auto d : kDomains) cell(r.by_domain[index_of(d)]);
  for (auto l : kLanguages) cell(r.by_language[index_of(l)]);
  cell(r.average);
  out << '\n';
  return out.str();
}

}  // namespace xsent
