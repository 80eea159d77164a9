#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xsent/corpus.hpp"
#include "xsent/evaluation.hpp"

namespace xsent {

// ---------------------------------------------------------------------------
// Prompts

enum class PromptKind { ZeroShot, MultiShot };

struct Shot {
  std::string title;
  std::string review;
  int rating = 5;
};

struct PromptRequest {
  PromptKind kind = PromptKind::ZeroShot;
  std::vector<Shot> shots;  // empty for ZeroShot, k >= 1 for MultiShot
  std::string title;
  std::string review;
};

/// Instantiates the zero-shot or multi-shot template. Placeholders are
/// substituted verbatim; an empty title leaves "Title: " in place.
std::string render_prompt(const PromptRequest& req);

/// k examples from the (language, domain) cell of `train`, balanced over the
/// four ratings as far as k and the cell allow. Deterministic in `seed`.
std::vector<Shot> select_shots(const Dataset& train, Language language, Domain domain, std::size_t k,
                               std::uint64_t seed);

/// First standalone digit of the completion that is a valid rating. Digits
/// inside longer numbers or words ("10", "4.5", "x4") do not count.
std::optional<int> parse_rating(std::string_view completion);

// ---------------------------------------------------------------------------
// Completion endpoint

/// Transport failure (connection refused, timeout) after all retries.
class EndpointError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

/// The endpoint answered, but not with a usable completion.
class ProtocolError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

/**
 * Request body, POSTed as JSON to `url + path`:
 *   {"model": ..., "prompt": ..., "temperature": 0.0, "max_tokens": 5}
 * The response must be JSON with the text at choices[0].text (or a
 * top-level "text" field).
 */
struct CompletionConfig {
  std::string url = "http://127.0.0.1:8000";  // scheme://host[:port], plain http only
  std::string path = "/v1/completions";
  std::string model = "default";
  double temperature = 0.0;
  int max_tokens = 5;
  double timeout_seconds = 30.0;
  std::size_t max_retries = 3;      // extra attempts after the first
  double backoff_seconds = 0.5;     // doubled after every failed attempt
  std::size_t max_in_flight = 1;
};

std::string completion_request_body(const CompletionConfig& config, const std::string& prompt);

/// One completion. Retries transport failures and 429/5xx answers.
std::string query(const CompletionConfig& config, const std::string& prompt);

// ---------------------------------------------------------------------------
// Evaluation runs

struct LlmEvalConfig {
  PromptKind kind = PromptKind::ZeroShot;
  std::size_t shots = 0;
  std::uint64_t seed = 42;
  CompletionConfig completion;
  ReportOptions report;
};

struct LlmRunRecord {
  std::size_t id = 0;  // index into the evaluated dataset
  std::string prompt_hash;
  std::string completion;
  std::optional<int> rating;
  double latency_ms = 0.0;
  std::string error;  // empty on success
};

struct LlmEvalResult {
  std::vector<LlmRunRecord> records;
  std::vector<int> predictions;  // kNoPrediction where parsing or the query failed
  std::size_t parse_failures = 0;
  std::size_t query_failures = 0;
  MetricsReport report;
};

/// Transport used by run_llm_eval; the default forwards to query().
using QueryFn = std::function<std::string(const std::string& prompt)>;

/// Queries every record of `test` once (plus retries), up to
/// completion.max_in_flight at a time. Outcomes keep the input order.
LlmEvalResult run_llm_eval(const Dataset& test, const Dataset& train, const LlmEvalConfig& config,
                           const QueryFn& transport = {});

void write_run_log(const std::vector<LlmRunRecord>& records, std::ostream& out);

}  // namespace xsent
