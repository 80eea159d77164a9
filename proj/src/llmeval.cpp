#include "xsent/llmeval.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "xsent/model.hpp"
#include "xsent/rng.hpp"

namespace xsent {

namespace {

constexpr std::string_view kHeader =
    "You are a review rating predictor. Given a review text, predict its rating on a scale of 1 to 5 (except 3).\n"
    "\n"
    "1 = Very negative\n"
    "2 = Negative\n"
    "4 = Positive\n"
    "5 = Very positive\n"
    "\n"
    "Only respond with a single number (1, 2, 4, or 5).\n";

}  // namespace

std::string render_prompt(const PromptRequest& req) {
  std::string out(kHeader);
  if (req.kind == PromptKind::ZeroShot) {
    if (!req.shots.empty()) throw ConfigError("zero-shot prompt cannot carry examples");
    out += "\nTitle: " + req.title + "\nReview: " + req.review + "\nRating:";
    return out;
  }
  if (req.shots.empty()) throw ConfigError("multi-shot prompt needs at least one example");
  out += "\nHere are some examples:\n";
  for (std::size_t i = 0; i < req.shots.size(); ++i) {
    const Shot& s = req.shots[i];
    if (!is_valid_rating(s.rating)) {
      throw DataError("example " + std::to_string(i + 1) + " has rating " + std::to_string(s.rating) +
                      ", expected one of 1, 2, 4, 5");
    }
    const std::string n = std::to_string(i + 1);
    out += "Title" + n + ": " + s.title + "\n";
    out += "Review" + n + ": " + s.review + "\n";
    out += "Rating" + n + ": " + std::to_string(s.rating) + "\n";
  }
  out += "\nNow predict the rating for this review:\nTitle: " + req.title + "\nReview: " + req.review + "\nRating:";
  return out;
}

std::vector<Shot> select_shots(const Dataset& train, Language language, Domain domain, std::size_t k,
                               std::uint64_t seed) {
  if (k == 0) return {};
  std::array<std::vector<std::size_t>, kNumRatingClasses> buckets;
  std::size_t available = 0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const Review& r = train.records[i];
    if (r.language != language || r.domain != domain) continue;
    buckets[rating_to_class(r.rating)].push_back(i);
    ++available;
  }
  if (k > available) {
    throw DataError("requested " + std::to_string(k) + " examples but the " + std::string(to_string(language)) +
                    "/" + std::string(to_string(domain)) + " cell has " + std::to_string(available));
  }
  const std::uint64_t cell = 10 * index_of(language) + index_of(domain);
  for (std::size_t c = 0; c < kNumRatingClasses; ++c) {
    Rng rng = make_stream(seed, 5000 + 10 * cell + c);
    shuffle<std::size_t>(buckets[c], rng);
  }
  std::array<std::size_t, kNumRatingClasses> order{0, 1, 2, 3};
  Rng rng = make_stream(seed, 5000 + 10 * cell + 9);
  shuffle<std::size_t>(order, rng);

  std::vector<Shot> shots;
  for (std::size_t round = 0; shots.size() < k; ++round) {
    for (std::size_t c : order) {
      if (shots.size() == k) break;
      if (round >= buckets[c].size()) continue;
      const Review& r = train.records[buckets[c][round]];
      shots.push_back({r.title, r.text, r.rating});
    }
  }
  return shots;
}

std::optional<int> parse_rating(std::string_view s) {
  auto alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  auto digit = [](char c) { return c >= '0' && c <= '9'; };
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!digit(s[i])) continue;
    const bool before = i > 0 && (alnum(s[i - 1]) || (s[i - 1] == '.' && i > 1 && digit(s[i - 2])));
    const bool after = i + 1 < s.size() && (alnum(s[i + 1]) || (s[i + 1] == '.' && i + 2 < s.size() && digit(s[i + 2])));
    if (before || after) continue;
    const int v = s[i] - '0';
    if (is_valid_rating(v)) return v;
  }
  return std::nullopt;
}

std::string completion_request_body(const CompletionConfig& config, const std::string& prompt) {
  nlohmann::ordered_json j;
  j["model"] = config.model;
  j["prompt"] = prompt;
  j["temperature"] = config.temperature;
  j["max_tokens"] = config.max_tokens;
  return j.dump();
}

namespace {

std::string excerpt(const std::string& body) {
  constexpr std::size_t kMax = 200;
  return body.size() <= kMax ? body : body.substr(0, kMax) + "...";
}

std::string extract_text(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    throw ProtocolError("response is not JSON: " + excerpt(body));
  }
  if (j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
    const auto& c = j["choices"][0];
    if (c.contains("text") && c["text"].is_string()) return c["text"].get<std::string>();
  }
  if (j.contains("text") && j["text"].is_string()) return j["text"].get<std::string>();
  throw ProtocolError("response has no completion text: " + excerpt(body));
}

std::string prompt_hash(const std::string& prompt) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(prompt)));
  return buf;
}

}  // namespace

std::string query(const CompletionConfig& config, const std::string& prompt) {
  if (config.url.rfind("http://", 0) != 0) throw ConfigError("endpoint url must start with http://");
  httplib::Client client(config.url);
  const auto timeout = std::chrono::duration<double>(config.timeout_seconds);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  const std::string body = completion_request_body(config, prompt);

  double backoff = config.backoff_seconds;
  std::string last_error;
  for (std::size_t attempt = 0; attempt <= config.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
      backoff *= 2.0;
    }
    auto res = client.Post(config.path, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) return extract_text(res->body);
    const std::string msg = "HTTP " + std::to_string(res->status) + ": " + excerpt(res->body);
    if (res->status == 429 || res->status >= 500) {
      last_error = msg;
      continue;
    }
    throw ProtocolError(msg);
  }
  const std::string where = config.url + config.path;
  if (last_error.rfind("HTTP", 0) == 0) throw ProtocolError(where + ": " + last_error);
  throw EndpointError(where + ": " + last_error + " after " + std::to_string(config.max_retries + 1) + " attempts");
}

LlmEvalResult run_llm_eval(const Dataset& test, const Dataset& train, const LlmEvalConfig& config,
                           const QueryFn& transport) {
  if (test.empty()) throw DataError("llm-eval: empty evaluation set");
  if (config.kind == PromptKind::ZeroShot && config.shots != 0) throw ConfigError("zero-shot runs take no examples");
  if (config.kind == PromptKind::MultiShot && config.shots == 0) throw ConfigError("multi-shot runs need k >= 1");
  if (config.completion.temperature != 0.0) throw ConfigError("evaluation runs use temperature 0.0");
  if (!transport && config.completion.url.rfind("http://", 0) != 0) {
    throw ConfigError("endpoint url must start with http://");
  }

  // Render everything up front; shots are shared by all records of a cell.
  std::array<std::array<std::vector<Shot>, kNumDomains>, kNumLanguages> shots;
  if (config.kind == PromptKind::MultiShot) {
    std::array<std::array<bool, kNumDomains>, kNumLanguages> needed{};
    for (const auto& r : test.records) needed[index_of(r.language)][index_of(r.domain)] = true;
    for (Language l : kLanguages) {
      for (Domain d : kDomains) {
        if (needed[index_of(l)][index_of(d)]) {
          shots[index_of(l)][index_of(d)] = select_shots(train, l, d, config.shots, config.seed);
        }
      }
    }
  }
  std::vector<std::string> prompts;
  prompts.reserve(test.size());
  for (const auto& r : test.records) {
    PromptRequest req{config.kind, shots[index_of(r.language)][index_of(r.domain)], r.title, r.text};
    prompts.push_back(render_prompt(req));
  }

  const QueryFn send = transport ? transport : [&](const std::string& p) { return query(config.completion, p); };
  LlmEvalResult result;
  result.records.resize(test.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < prompts.size(); i = next++) {
      LlmRunRecord& rec = result.records[i];
      rec.id = i;
      rec.prompt_hash = prompt_hash(prompts[i]);
      const auto start = std::chrono::steady_clock::now();
      try {
        rec.completion = send(prompts[i]);
        rec.rating = parse_rating(rec.completion);
      } catch (const Error& e) {
        rec.error = e.what();
      }
      rec.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(config.completion.max_in_flight, 1, prompts.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (const auto& rec : result.records) {
    result.predictions.push_back(rec.rating.value_or(kNoPrediction));
    if (!rec.error.empty()) {
      ++result.query_failures;
    } else if (!rec.rating) {
      ++result.parse_failures;
    }
  }
  result.report = build_report(test.records, result.predictions, config.report);
  return result;
}

void write_run_log(const std::vector<LlmRunRecord>& records, std::ostream& out) {
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["prompt_hash"] = r.prompt_hash;
    j["completion"] = r.completion;
    j["rating"] = r.rating ? nlohmann::ordered_json(*r.rating) : nlohmann::ordered_json(nullptr);
    j["latency_ms"] = r.latency_ms;
    if (!r.error.empty()) j["error"] = r.error;
    out << j.dump() << '\n';
  }
}

}  // namespace xsent
