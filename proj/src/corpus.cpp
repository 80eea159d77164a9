#include "xsent/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "json.hpp"
#include "xsent/normalize.hpp"

namespace xsent {

using ojson = nlohmann::ordered_json;

std::string_view to_string(Language l) { return l == Language::IT ? "it" : "ro"; }

std::string_view to_string(Domain d) {
  switch (d) {
    case Domain::Books: return "books";
    case Domain::Movies: return "movies";
    case Domain::Music: return "music";
  }
  return "?";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

std::string_view display_name(Language l) { return l == Language::IT ? "IT" : "RO"; }

std::string_view display_name(Domain d) {
  switch (d) {
    case Domain::Books: return "Books";
    case Domain::Movies: return "Movies";
    case Domain::Music: return "Music";
  }
  return "?";
}

std::optional<Language> parse_language(std::string_view s) {
  if (s == "it") return Language::IT;
  if (s == "ro") return Language::RO;
  return std::nullopt;
}

std::optional<Domain> parse_domain(std::string_view s) {
  if (s == "books") return Domain::Books;
  if (s == "movies") return Domain::Movies;
  if (s == "music") return Domain::Music;
  return std::nullopt;
}

std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "valid") return Split::Valid;
  if (s == "test") return Split::Test;
  return std::nullopt;
}

std::string_view to_string(QualityReason r) {
  return r == QualityReason::LowConfidence ? "low_confidence" : "language_mismatch";
}

Dataset Dataset::filter(Split split) const {
  Dataset out;
  out.provenance = provenance + ":" + std::string(to_string(split));
  for (const auto& r : records) {
    if (r.split == split) out.records.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON-lines

namespace {

[[noreturn]] void schema_error(std::size_t line_no, std::string_view field, std::string_view what) {
  std::ostringstream msg;
  msg << "line " << line_no << ": field \"" << field << "\": " << what;
  throw DataError(msg.str());
}

const std::string& require_string(const nlohmann::json& obj, const char* key, std::size_t line_no) {
  const auto it = obj.find(key);
  if (it == obj.end()) schema_error(line_no, key, "missing");
  if (!it->is_string()) schema_error(line_no, key, "expected a string");
  return it->get_ref<const std::string&>();
}

bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

}  // namespace

Review parse_review_line(std::string_view line, std::size_t line_no) {
  nlohmann::json obj;
  try {
    obj = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    std::ostringstream msg;
    msg << "line " << line_no << ": malformed JSON (" << e.what() << ")";
    throw DataError(msg.str());
  }
  if (!obj.is_object()) {
    throw DataError("line " + std::to_string(line_no) + ": expected a JSON object");
  }
  static const std::set<std::string> kKeys{"title", "text", "rating", "language", "domain", "split"};
  for (const auto& [key, _] : obj.items()) {
    if (!kKeys.contains(key)) schema_error(line_no, key, "unknown key");
  }

  Review r;
  r.title = require_string(obj, "title", line_no);
  r.text = require_string(obj, "text", line_no);

  const auto rating = obj.find("rating");
  if (rating == obj.end()) schema_error(line_no, "rating", "missing");
  if (!rating->is_number_integer()) schema_error(line_no, "rating", "expected an integer");
  const auto value = rating->get<long long>();
  if (value != 1 && value != 2 && value != 4 && value != 5) {
    schema_error(line_no, "rating", "value " + std::to_string(value) + " is outside {1,2,4,5}");
  }
  r.rating = static_cast<int>(value);

  const auto& lang = require_string(obj, "language", line_no);
  const auto language = parse_language(lang);
  if (!language) schema_error(line_no, "language", "unknown value \"" + lang + "\"");
  r.language = *language;

  const auto& dom = require_string(obj, "domain", line_no);
  const auto domain = parse_domain(dom);
  if (!domain) schema_error(line_no, "domain", "unknown value \"" + dom + "\"");
  r.domain = *domain;

  const auto& spl = require_string(obj, "split", line_no);
  const auto split = parse_split(spl);
  if (!split) schema_error(line_no, "split", "unknown value \"" + spl + "\"");
  r.split = *split;
  return r;
}

std::string format_review_line(const Review& r) {
  ojson obj;
  obj["title"] = r.title;
  obj["text"] = r.text;
  obj["rating"] = r.rating;
  obj["language"] = std::string(to_string(r.language));
  obj["domain"] = std::string(to_string(r.domain));
  obj["split"] = std::string(to_string(r.split));
  try {
    return obj.dump();
  } catch (const nlohmann::json::type_error& e) {
    throw DataError(std::string("cannot serialise record: ") + e.what());
  }
}

Dataset read_jsonl(std::istream& in, std::string provenance) {
  Dataset ds;
  ds.provenance = std::move(provenance);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    ds.records.push_back(parse_review_line(line, line_no));
  }
  return ds;
}

Dataset read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return read_jsonl(in, path.string());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_jsonl(const Dataset& ds, std::ostream& out) {
  for (const auto& r : ds.records) out << format_review_line(r) << '\n';
}

void write_jsonl(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  write_jsonl(ds, out);
  if (!out) throw DataError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Cleaning

Dataset normalize(const Dataset& ds) {
  Dataset out = ds;
  for (auto& r : out.records) {
    r.title = normalize_text(r.title);
    r.text = normalize_text(r.text);
  }
  return out;
}

DedupResult deduplicate(const Dataset& ds) {
  DedupResult result;
  result.dataset.provenance = ds.provenance;
  std::set<std::pair<std::string_view, std::string_view>> seen;
  for (const auto& r : ds.records) {
    if (seen.emplace(r.title, r.text).second) {
      result.dataset.records.push_back(r);
    } else {
      ++result.removed;
    }
  }
  return result;
}

std::vector<QualityFlag> verify_language(const Dataset& ds, const LanguageDetector& detector,
                                         double min_confidence) {
  std::vector<QualityFlag> flags;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const Review& r = ds.records[i];
    Detection d;
    try {
      std::string joined = r.title.empty() ? r.text : r.title + " " + r.text;
      d = detector(joined);
    } catch (const std::exception&) {
      flags.push_back({i, QualityReason::LowConfidence, "", 0.0});
      continue;
    }
    if (d.language != to_string(r.language)) {
      flags.push_back({i, QualityReason::LanguageMismatch, d.language, d.confidence});
    } else if (d.confidence < min_confidence) {
      flags.push_back({i, QualityReason::LowConfidence, d.language, d.confidence});
    }
  }
  return flags;
}

Detection stub_detect_language(std::string_view text) {
  static const std::unordered_set<std::string_view> kItalian{
      "il", "lo", "gli", "di", "che", "non", "per", "una", "sono", "molto", "con", "del",
      "della", "ma", "questo", "questa", "libro", "bello", "anche", "ho", "è", "perché"};
  static const std::unordered_set<std::string_view> kRomanian{
      "și", "şi", "că", "nu", "pe", "este", "cu", "din", "mai", "foarte", "pentru", "care",
      "acest", "această", "carte", "sunt", "am", "dar", "fost", "bine", "frumos", "îmi"};
  static constexpr std::string_view kItalianMarks[] = {"à", "è", "ì", "ò", "ù"};
  static constexpr std::string_view kRomanianMarks[] = {"ă", "â", "î", "ș", "ț", "ş", "ţ"};

  double it = 0;
  double ro = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t b = text.find_first_not_of(" \t\n\r", pos);
    if (b == std::string_view::npos) break;
    std::size_t e = text.find_first_of(" \t\n\r", b);
    if (e == std::string_view::npos) e = text.size();
    std::string token(text.substr(b, e - b));
    std::transform(token.begin(), token.end(), token.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (token.starts_with("it_")) it += 1;
    if (token.starts_with("ro_")) ro += 1;
    if (kItalian.contains(token)) it += 1;
    if (kRomanian.contains(token)) ro += 1;
    for (auto m : kItalianMarks) {
      if (token.find(m) != std::string::npos) it += 0.5;
    }
    for (auto m : kRomanianMarks) {
      if (token.find(m) != std::string::npos) ro += 0.5;
    }
    pos = e;
  }
  if (it + ro == 0) return {"und", 0.0};
  if (it >= ro) return {"it", it / (it + ro)};
  return {"ro", ro / (it + ro)};
}

// ---------------------------------------------------------------------------
// Statistics

std::size_t count_tokens(std::string_view text) {
  std::size_t n = 0;
  bool in_token = false;
  for (const char c : text) {
    const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
    if (!space && !in_token) ++n;
    in_token = !space;
  }
  return n;
}

TokenSummary summarize_counts(std::vector<std::size_t> counts) {
  TokenSummary s;
  s.count = counts.size();
  if (counts.empty()) return s;
  std::sort(counts.begin(), counts.end());
  double sum = 0;
  for (auto c : counts) sum += static_cast<double>(c);
  s.mean = sum / static_cast<double>(counts.size());
  double sq = 0;
  for (auto c : counts) sq += (static_cast<double>(c) - s.mean) * (static_cast<double>(c) - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(counts.size()));
  const std::size_t mid = counts.size() / 2;
  s.median = counts.size() % 2 == 1
                 ? static_cast<double>(counts[mid])
                 : (static_cast<double>(counts[mid - 1]) + static_cast<double>(counts[mid])) / 2.0;
  s.min = counts.front();
  s.max = counts.back();
  return s;
}

CorpusStats compute_stats(const Dataset& ds) {
  if (ds.empty()) throw DataError("compute_stats: empty dataset");
  CorpusStats s;
  s.total = ds.size();
  for (int r : kRatings) s.rating_histogram[r] = 0;

  std::vector<std::size_t> text_counts;
  std::vector<std::size_t> title_counts;
  std::array<std::vector<std::size_t>, kNumLanguages> text_by_lang;
  std::array<std::vector<std::size_t>, kNumDomains> text_by_domain;
  std::array<std::vector<std::size_t>, kNumLanguages> title_by_lang;
  std::array<std::vector<std::size_t>, kNumDomains> title_by_domain;

  for (const auto& r : ds.records) {
    ++s.rating_histogram.at(r.rating);
    const std::size_t text_n = count_tokens(r.text);
    const std::size_t title_n = count_tokens(r.title);
    if (title_n > 0) ++s.titles_present;
    text_counts.push_back(text_n);
    title_counts.push_back(title_n);
    text_by_lang[index_of(r.language)].push_back(text_n);
    text_by_domain[index_of(r.domain)].push_back(text_n);
    title_by_lang[index_of(r.language)].push_back(title_n);
    title_by_domain[index_of(r.domain)].push_back(title_n);
  }
  s.text_tokens = summarize_counts(std::move(text_counts));
  s.title_tokens = summarize_counts(std::move(title_counts));
  for (std::size_t i = 0; i < kNumLanguages; ++i) {
    s.text_tokens_by_language[i] = summarize_counts(std::move(text_by_lang[i]));
    s.title_tokens_by_language[i] = summarize_counts(std::move(title_by_lang[i]));
  }
  for (std::size_t i = 0; i < kNumDomains; ++i) {
    s.text_tokens_by_domain[i] = summarize_counts(std::move(text_by_domain[i]));
    s.title_tokens_by_domain[i] = summarize_counts(std::move(title_by_domain[i]));
  }
  return s;
}

namespace {

ojson summary_json(const TokenSummary& t) {
  ojson j;
  j["count"] = t.count;
  j["mean"] = t.mean;
  j["median"] = t.median;
  j["std"] = t.stddev;
  j["min"] = t.min;
  j["max"] = t.max;
  return j;
}

void table_row(std::ostream& out, std::string_view label, const TokenSummary& t) {
  out << std::left << std::setw(16) << label << std::right << std::setw(8) << t.count
      << std::setw(10) << std::fixed << std::setprecision(2) << t.mean << std::setw(9) << t.median
      << std::setw(10) << t.stddev << std::setw(7) << t.min << std::setw(8) << t.max << '\n';
}

}  // namespace

std::string stats_to_json(const CorpusStats& s) {
  ojson j;
  j["total"] = s.total;
  ojson hist = ojson::object();
  for (const auto& [rating, n] : s.rating_histogram) hist[std::to_string(rating)] = n;
  j["rating_histogram"] = hist;
  j["titles_present"] = s.titles_present;
  j["text_tokens"] = summary_json(s.text_tokens);
  j["title_tokens"] = summary_json(s.title_tokens);
  for (const char* field : {"text", "title"}) {
    const bool text = std::string_view(field) == "text";
    ojson by_lang = ojson::object();
    for (auto l : kLanguages) {
      by_lang[std::string(to_string(l))] =
          summary_json(text ? s.text_tokens_by_language[index_of(l)] : s.title_tokens_by_language[index_of(l)]);
    }
    ojson by_domain = ojson::object();
    for (auto d : kDomains) {
      by_domain[std::string(to_string(d))] =
          summary_json(text ? s.text_tokens_by_domain[index_of(d)] : s.title_tokens_by_domain[index_of(d)]);
    }
    j[std::string(field) + "_tokens_by_language"] = by_lang;
    j[std::string(field) + "_tokens_by_domain"] = by_domain;
  }
  return j.dump(2);
}

std::string stats_to_table(const CorpusStats& s) {
  std::ostringstream out;
  out << "records: " << s.total << "   with title: " << s.titles_present << '\n';
  out << "ratings:";
  for (const auto& [rating, n] : s.rating_histogram) out << "  " << rating << "=" << n;
  out << "\n\n";
  out << std::left << std::setw(16) << "text tokens" << std::right << std::setw(8) << "docs"
      << std::setw(10) << "mean" << std::setw(9) << "median" << std::setw(10) << "std"
      << std::setw(7) << "min" << std::setw(8) << "max" << '\n';
  table_row(out, "all", s.text_tokens);
  for (auto l : kLanguages) table_row(out, display_name(l), s.text_tokens_by_language[index_of(l)]);
  for (auto d : kDomains) table_row(out, display_name(d), s.text_tokens_by_domain[index_of(d)]);
  out << '\n' << std::left << std::setw(16) << "title tokens" << '\n';
  table_row(out, "all", s.title_tokens);
  for (auto l : kLanguages) table_row(out, display_name(l), s.title_tokens_by_language[index_of(l)]);
  for (auto d : kDomains) table_row(out, display_name(d), s.title_tokens_by_domain[index_of(d)]);
  return out.str();
}

}  // namespace xsent
