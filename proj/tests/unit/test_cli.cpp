#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Run cli(const fs::path& dir, const std::string& args) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd =
      std::string("\"") + XSENT_CLI_PATH + "\" " + args + " >\"" + out.string() + "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

std::vector<nlohmann::json> jsonl(const fs::path& p) {
  std::vector<nlohmann::json> out;
  std::istringstream in(read_file(p));
  std::string line;
  while (std::getline(in, line)) out.push_back(nlohmann::json::parse(line));
  return out;
}

const char* kSmallTrain = " --hash-dim 1024 --hidden 16 --batch-size 16 --max-epochs 2 --meta-interval 5";

}  // namespace

TEST_CASE("cli: generate, train, evaluate") {
  const auto dir = test::scratch("cli_pipeline");
  const auto data = (dir / "data.jsonl").string();
  REQUIRE(cli(dir, "generate --per-cell 20 --mean-length-ro 30 --output " + data).code == 0);
  const auto sidecar = nlohmann::json::parse(read_file(data + ".config.json"));
  CHECK(sidecar["command"] == "generate");
  CHECK(sidecar["settings"]["per_cell"] == 20);

  for (const std::string mode : {"baseline", "loss-reversal"}) {
    const auto out = dir / mode;
    const auto r = cli(dir, "train --data " + data + " --out-dir " + out.string() + " --mode " + mode + kSmallTrain);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(fs::exists(out / "checkpoint.bin"));
    const auto log = jsonl(out / "train_log.jsonl");
    std::size_t meta = 0;
    for (const auto& j : log) meta += j["type"] == "meta";
    if (mode == "baseline") {
      CHECK(meta == 0);
      for (const auto& j : log) {
        if (j["type"] == "step") CHECK(j["lambda1"] == 0.0);
      }
    } else {
      CHECK(meta == 3);  // 8 steps per epoch, 16 in total
    }
    CHECK(log.back()["type"] == "summary");
    const auto eff = nlohmann::json::parse(read_file(out / "effective_config.json"));
    CHECK(eff["settings"]["mode"] == mode);
    CHECK(eff["settings"]["hidden"] == 16);
  }

  const auto eval_dir = dir / "eval";
  const auto r = cli(dir, "evaluate --checkpoint " + (dir / "loss-reversal" / "checkpoint.bin").string() + " --data " +
                              data + " --out-dir " + eval_dir.string() + " --label LR");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto report = nlohmann::json::parse(read_file(eval_dir / "report.json"));
  REQUIRE(report["cells"].size() == 6);
  for (const auto& c : report["cells"]) CHECK(c["score"]["count"] == 20);
  CHECK(r.out.find("LR") != std::string::npos);
  CHECK(read_file(eval_dir / "report.txt") == r.out);
}

TEST_CASE("cli: prepare removes duplicates") {
  const auto dir = test::scratch("cli_prepare");
  const auto r = cli(dir, "prepare --input " + test::fixture("dedup5.jsonl").string() + " --output " +
                              (dir / "clean.jsonl").string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("5 read\n2 removed\n0 flagged\n3 written\n") != std::string::npos);
  CHECK(jsonl(dir / "clean.jsonl").size() == 3);
}

TEST_CASE("cli: malformed input names the line") {
  const auto dir = test::scratch("cli_bad");
  {
    std::ofstream out(dir / "bad.jsonl");
    out << R"({"title":"","text":"a","rating":5,"language":"it","domain":"books","split":"train"})" << "\n";
    out << R"({"title":"","text":"b","rating":3,"language":"it","domain":"books","split":"train"})" << "\n";
  }
  const auto r = cli(dir, "stats --input " + (dir / "bad.jsonl").string());
  CHECK(r.code == 3);
  CHECK(r.err.find("line 2") != std::string::npos);
}

TEST_CASE("cli: config file overlay and precedence") {
  const auto dir = test::scratch("cli_config");
  {
    std::ofstream cfg(dir / "gen.json");
    cfg << R"({"per_cell": 8, "seed": 5, "rho_train": 0.5})";
  }
  const auto data = (dir / "d.jsonl").string();
  REQUIRE(cli(dir, "generate --config " + (dir / "gen.json").string() + " --seed 9 --output " + data).code == 0);
  const auto s = nlohmann::json::parse(read_file(data + ".config.json"))["settings"];
  CHECK(s["per_cell"] == 8);
  CHECK(s["seed"] == 9);
  CHECK(s["rho_train"] == 0.5);
  CHECK(s["rho_test"] == 0.0);
  CHECK(jsonl(data).size() == 8 * 18);

  {
    std::ofstream cfg(dir / "typo.json");
    cfg << R"({"per_cel": 8})";
  }
  auto r = cli(dir, "generate --config " + (dir / "typo.json").string() + " --output " + data);
  CHECK(r.code == 2);
  CHECK(r.err.find("per_cel") != std::string::npos);
  {
    std::ofstream cfg(dir / "type.json");
    cfg << R"({"per_cell": "many"})";
  }
  CHECK(cli(dir, "generate --config " + (dir / "type.json").string() + " --output " + data).code == 2);
}

TEST_CASE("cli: exit codes") {
  const auto dir = test::scratch("cli_codes");
  CHECK(cli(dir, "").code == 2);
  CHECK(cli(dir, "bogus").code == 2);
  CHECK(cli(dir, "generate --per-cell abc --output x.jsonl").code == 2);
  CHECK(cli(dir, "generate --per-cell 0 --output " + (dir / "x.jsonl").string()).code == 2);
  CHECK(cli(dir, "stats --input " + (dir / "missing.jsonl").string()).code == 3);
  CHECK(cli(dir, "train --data " + test::fixture("stats20.jsonl").string() + " --out-dir " + (dir / "t").string() +
                     " --mode sideways")
            .code == 2);
  CHECK(cli(dir, "generate --help").code == 0);
}
