#include <atomic>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "helpers.hpp"
#include "httplib.h"
#include "json.hpp"
#include "xsent/llmeval.hpp"

using namespace xsent;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Local completion server on a free port. The handler sees every request body.
class MockServer {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  explicit MockServer(Handler h) {
    server_.Post("/v1/completions", [this, h](const httplib::Request& req, httplib::Response& res) {
      {
        std::lock_guard lock(mu_);
        bodies_.push_back(req.body);
      }
      h(req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  std::vector<std::string> bodies() {
    std::lock_guard lock(mu_);
    return bodies_;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::mutex mu_;
  std::vector<std::string> bodies_;
};

void reply_text(httplib::Response& res, const std::string& text) {
  nlohmann::json j;
  j["choices"] = nlohmann::json::array({{{"text", text}}});
  res.set_content(j.dump(), "application/json");
}

CompletionConfig fast(const std::string& url) {
  CompletionConfig c;
  c.url = url;
  c.timeout_seconds = 2.0;
  c.max_retries = 1;
  c.backoff_seconds = 0.01;
  return c;
}

}  // namespace

TEST_CASE("zero-shot prompt matches the golden file") {
  PromptRequest req{PromptKind::ZeroShot, {}, "Bella storia", "Un libro molto bello, lo consiglio."};
  CHECK(render_prompt(req) == slurp(test::fixture("prompt_zero_shot.txt")));
}

TEST_CASE("five-shot prompt matches the golden file") {
  PromptRequest req;
  req.kind = PromptKind::MultiShot;
  req.shots = {{"Pessimo", "Noioso e lento.", 1},
               {"", "Non mi \xC3\xA8 piaciuto molto.", 2},
               {"Buono", "Si legge bene.", 4},
               {"Capolavoro", "Il migliore dell'anno!", 5},
               {"Top", "Da rileggere.", 5}};
  req.review = "Carte frumoas\xC4\x83.";
  CHECK(render_prompt(req) == slurp(test::fixture("prompt_five_shot.txt")));
}

TEST_CASE("prompt errors") {
  PromptRequest req;
  req.shots = {{"", "x", 5}};
  CHECK_THROWS_AS(render_prompt(req), ConfigError);
  req.kind = PromptKind::MultiShot;
  req.shots.clear();
  CHECK_THROWS_AS(render_prompt(req), ConfigError);
  req.shots = {{"", "x", 3}};
  CHECK_THROWS_AS(render_prompt(req), DataError);
}

TEST_CASE("parse_rating") {
  CHECK(parse_rating("5") == 5);
  CHECK(parse_rating(" 5\n") == 5);
  CHECK(parse_rating("Rating: 4") == 4);
  CHECK(parse_rating("I'd say 2.") == 2);
  CHECK(parse_rating("3 or maybe 1") == 1);
  CHECK(parse_rating("10 then 5") == 5);
  CHECK(parse_rating("4.5") == std::nullopt);
  CHECK(parse_rating("x4") == std::nullopt);
  CHECK(parse_rating("3") == std::nullopt);
  CHECK(parse_rating("") == std::nullopt);
  CHECK(parse_rating("positive") == std::nullopt);
}

TEST_CASE("select_shots is balanced, cell-local and deterministic") {
  Dataset train;
  for (int i = 0; i < 40; ++i) {
    train.records.push_back(test::review("t" + std::to_string(i), "r" + std::to_string(i), kRatings[i % 4],
                                         i < 20 ? Language::IT : Language::RO, Domain::Music));
  }
  const auto a = select_shots(train, Language::RO, Domain::Music, 8, 3);
  REQUIRE(a.size() == 8);
  std::map<int, int> hist;
  for (const auto& s : a) {
    ++hist[s.rating];
    CHECK(std::stoi(s.review.substr(1)) >= 20);
  }
  for (int r : kRatings) CHECK(hist[r] == 2);
  CHECK(select_shots(train, Language::RO, Domain::Music, 8, 3).front().review == a.front().review);
  CHECK(select_shots(train, Language::RO, Domain::Music, 0, 3).empty());
  CHECK_THROWS_AS(select_shots(train, Language::RO, Domain::Music, 21, 3), DataError);
  CHECK_THROWS_AS(select_shots(train, Language::IT, Domain::Books, 1, 3), DataError);
}

TEST_CASE("query against a mock endpoint") {
  MockServer server([](const httplib::Request&, httplib::Response& res) { reply_text(res, " 5\n"); });
  auto cfg = fast(server.url());
  CHECK(query(cfg, "hello") == " 5\n");
  const auto body = nlohmann::json::parse(server.bodies().at(0));
  CHECK(body["prompt"] == "hello");
  CHECK(body["temperature"].get<double>() == 0.0);
  CHECK(body["max_tokens"] == 5);
  CHECK(body["model"] == "default");
}

TEST_CASE("query echoes the prompt through a top-level text field") {
  MockServer server([](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json j;
    j["text"] = nlohmann::json::parse(req.body)["prompt"];
    res.set_content(j.dump(), "application/json");
  });
  CHECK(query(fast(server.url()), "echo me") == "echo me");
}

TEST_CASE("query errors") {
  SUBCASE("4xx is a protocol error") {
    MockServer server([](const httplib::Request&, httplib::Response& res) {
      res.status = 400;
      res.set_content("bad prompt", "text/plain");
    });
    CHECK_THROWS_AS(query(fast(server.url()), "x"), ProtocolError);
    CHECK(server.bodies().size() == 1);
  }
  SUBCASE("5xx is retried") {
    std::atomic<int> calls{0};
    MockServer server([&](const httplib::Request&, httplib::Response& res) {
      if (calls++ == 0) {
        res.status = 503;
        return;
      }
      reply_text(res, "4");
    });
    CHECK(query(fast(server.url()), "x") == "4");
    CHECK(calls == 2);
  }
  SUBCASE("malformed answer") {
    MockServer server([](const httplib::Request&, httplib::Response& res) { res.set_content("{}", "application/json"); });
    CHECK_THROWS_AS(query(fast(server.url()), "x"), ProtocolError);
  }
  SUBCASE("timeout") {
    MockServer server([](const httplib::Request&, httplib::Response& res) {
      std::this_thread::sleep_for(std::chrono::milliseconds(600));
      reply_text(res, "5");
    });
    auto cfg = fast(server.url());
    cfg.timeout_seconds = 0.2;
    cfg.max_retries = 0;
    CHECK_THROWS_AS(query(cfg, "x"), EndpointError);
  }
  SUBCASE("refused connection") {
    auto cfg = fast("http://127.0.0.1:1");
    CHECK_THROWS_AS(query(cfg, "x"), EndpointError);
  }
  SUBCASE("https is rejected") {
    CHECK_THROWS_AS(query(fast("https://example.com"), "x"), ConfigError);
  }
}

namespace {

Dataset small_test() {
  Dataset ds;
  for (int i = 0; i < 12; ++i) {
    ds.records.push_back(test::review("", "review " + std::to_string(i) + " gold=" + std::to_string(kRatings[i % 4]),
                                      kRatings[i % 4], kLanguages[i % 2], kDomains[i % 3], Split::Test));
  }
  return ds;
}

// Answers with the gold rating embedded in the review.
std::string gold_answer(const std::string& prompt) {
  const auto at = prompt.rfind("gold=");
  return " " + prompt.substr(at + 5, 1);
}

}  // namespace

TEST_CASE("run_llm_eval with a gold mock endpoint") {
  MockServer server([](const httplib::Request& req, httplib::Response& res) {
    reply_text(res, gold_answer(nlohmann::json::parse(req.body)["prompt"].get<std::string>()));
  });
  LlmEvalConfig cfg;
  cfg.completion = fast(server.url());
  cfg.completion.max_in_flight = 4;
  const Dataset test = small_test();
  const auto res = run_llm_eval(test, {}, cfg);
  CHECK(res.report.overall.accuracy == 100.0);
  CHECK(res.report.overall.f1 == 100.0);
  CHECK(res.parse_failures == 0);
  CHECK(res.query_failures == 0);
  CHECK(server.bodies().size() == 12);
  for (std::size_t i = 0; i < res.records.size(); ++i) CHECK(res.records[i].id == i);

  std::ostringstream log;
  write_run_log(res.records, log);
  std::istringstream lines(log.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["prompt_hash"].get<std::string>().size() == 16);
    CHECK(j["rating"] == test.records[n].rating);
    ++n;
  }
  CHECK(n == 12);
}

TEST_CASE("run_llm_eval counts failures without aborting") {
  LlmEvalConfig cfg;
  std::atomic<int> calls{0};
  const auto res = run_llm_eval(small_test(), {}, cfg, [&](const std::string& p) -> std::string {
    const int c = calls++;
    if (c % 3 == 0) throw EndpointError("down");
    if (c % 3 == 1) return "no idea";
    return gold_answer(p);
  });
  CHECK(res.query_failures == 4);
  CHECK(res.parse_failures == 4);
  CHECK(res.report.overall.accuracy == doctest::Approx(100.0 / 3.0));
  CHECK(res.records[0].error == "down");
}

TEST_CASE("run_llm_eval multi-shot uses same-cell examples") {
  const Dataset test = small_test();
  Dataset train;
  for (int i = 0; i < 48; ++i) {
    train.records.push_back(test::review("", "cell" + std::to_string(i % 6), kRatings[(i / 6) % 4],
                                         kLanguages[(i % 6) / 3], kDomains[i % 3]));
  }
  LlmEvalConfig cfg;
  cfg.kind = PromptKind::MultiShot;
  cfg.shots = 5;
  std::vector<std::string> prompts(test.size());
  std::atomic<std::size_t> idx{0};
  run_llm_eval(test, train, cfg, [&](const std::string& p) {
    prompts[idx++] = p;
    return std::string("5");
  });
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& r = test.records[i];
    const std::string cell = "cell" + std::to_string(index_of(r.language) * 3 + index_of(r.domain));
    const std::string& p = prompts[i];
    CHECK(p.find("Review5: " + cell + "\n") != std::string::npos);
    CHECK(p.find("Review6:") == std::string::npos);
  }
  cfg.shots = 0;
  CHECK_THROWS_AS(run_llm_eval(test, train, cfg, [](const std::string&) { return std::string("5"); }), ConfigError);
  cfg.kind = PromptKind::ZeroShot;
  cfg.completion.temperature = 0.7;
  CHECK_THROWS_AS(run_llm_eval(test, train, cfg, [](const std::string&) { return std::string("5"); }), ConfigError);
}
