// xsent: command-line entry point.
//
// Every command resolves its settings as defaults < --config JSON < flags and
// writes the resolved values as an effective-config JSON next to its outputs.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"
#include "xsent/corpus.hpp"
#include "xsent/datagen.hpp"
#include "xsent/evaluation.hpp"
#include "xsent/llmeval.hpp"
#include "xsent/model.hpp"
#include "xsent/trainer.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;
using namespace xsent;

namespace {

enum ExitCode { kOk = 0, kConfigFailure = 2, kDataFailure = 3, kRuntimeFailure = 4 };

// Flat key/value settings for one command.
class Settings {
 public:
  Settings(CLI::App* app, ojson defaults) : app_(app), values_(std::move(defaults)) {
    app_->add_option("--config", config_path_, "JSON file with settings for this command");
  }

  // Exposes `key` as --key-with-dashes.
  void flag(const std::string& key, const std::string& help) {
    std::string name = "--" + key;
    for (char& c : name) {
      if (c == '_') c = '-';
    }
    options_[key] = app_->add_option(name, raw_[key], help + " (default: " + values_.at(key).dump() + ")");
  }

  ojson resolve() {
    if (!config_path_.empty()) {
      std::ifstream in(config_path_);
      if (!in) throw ConfigError("cannot open config file " + config_path_);
      ojson file;
      try {
        file = ojson::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(config_path_ + ": " + e.what());
      }
      if (!file.is_object()) throw ConfigError(config_path_ + ": expected a JSON object");
      for (const auto& [key, value] : file.items()) set(key, value, config_path_);
    }
    for (const auto& [key, opt] : options_) {
      if (opt->count() > 0) set(key, from_flag(key, raw_[key]), "--" + key);
    }
    return values_;
  }

 private:
  void set(const std::string& key, const ojson& value, const std::string& source) {
    if (!values_.contains(key)) throw ConfigError(source + ": unknown setting \"" + key + "\"");
    const ojson& current = values_[key];
    const bool ok = (current.is_boolean() && value.is_boolean()) ||
                    (current.is_number_unsigned() && value.is_number_unsigned()) ||
                    (current.is_number_float() && value.is_number()) || (current.is_string() && value.is_string());
    if (!ok) throw ConfigError(source + ": setting \"" + key + "\" expects " + current.type_name());
    values_[key] = current.is_number_float() ? ojson(value.get<double>()) : value;
  }

  ojson from_flag(const std::string& key, const std::string& text) {
    const ojson& current = values_[key];
    try {
      std::size_t used = 0;
      if (current.is_boolean()) {
        if (text == "true" || text == "1") return true;
        if (text == "false" || text == "0") return false;
        throw std::invalid_argument(text);
      }
      if (current.is_number_unsigned()) {
        if (!text.empty() && text[0] == '-') throw std::invalid_argument(text);
        const auto v = std::stoull(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
      }
      if (current.is_number_float()) {
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
      }
    } catch (const std::logic_error&) {
      throw ConfigError("--" + key + ": cannot parse \"" + text + "\" as " + current.type_name());
    }
    return text;
  }

  CLI::App* app_;
  ojson values_;
  std::string config_path_;
  std::map<std::string, std::string> raw_;
  std::map<std::string, CLI::Option*> options_;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

void write_effective_config(const fs::path& path, const std::string& command, const ojson& settings) {
  ojson j;
  j["command"] = command;
  j["settings"] = settings;
  write_text(path, j.dump(2) + "\n");
}

fs::path sidecar(const std::string& output) { return fs::path(output + ".config.json"); }

std::string require_path(const ojson& s, const std::string& key) {
  const auto v = s.at(key).get<std::string>();
  if (v.empty()) throw ConfigError("missing required setting \"" + key + "\"");
  return v;
}

Split split_setting(const ojson& s, const std::string& key) {
  const auto v = s.at(key).get<std::string>();
  const auto split = parse_split(v);
  if (!split) throw ConfigError(key + ": unknown split \"" + v + "\"");
  return *split;
}

ReportOptions report_options(const ojson& s) {
  ReportOptions o;
  const auto agg = s.at("aggregation").get<std::string>();
  if (agg == "pooled") {
    o.aggregation = Aggregation::Pooled;
  } else if (agg == "averaged") {
    o.aggregation = Aggregation::Averaged;
  } else {
    throw ConfigError("aggregation must be pooled or averaged");
  }
  const auto avg = s.at("average").get<std::string>();
  if (avg == "cells") {
    o.average = AverageOver::Cells;
  } else if (avg == "columns") {
    o.average = AverageOver::Columns;
  } else {
    throw ConfigError("average must be cells or columns");
  }
  return o;
}

// ---------------------------------------------------------------------------
// generate

ojson generate_defaults() {
  const GenConfig g;
  ojson j;
  j["output"] = "";
  j["seed"] = g.seed;
  j["per_cell"] = g.per_cell;
  j["sentiment_vocab"] = g.sentiment_vocab;
  j["language_vocab"] = g.language_vocab;
  j["domain_vocab"] = g.domain_vocab;
  j["noise_vocab"] = g.noise_vocab;
  j["rho_train"] = g.rho_train;
  j["rho_test"] = g.rho_test;
  j["mean_length_it"] = g.mean_length_it;
  j["mean_length_ro"] = g.mean_length_ro;
  j["length_shape"] = g.length_shape;
  j["max_length"] = g.max_length;
  j["sentiment_rate"] = g.sentiment_rate;
  j["domain_rate"] = g.domain_rate;
  j["language_rate"] = g.language_rate;
  j["sentiment_purity"] = g.sentiment_purity;
  j["title_rate"] = g.title_rate;
  j["mean_title_length"] = g.mean_title_length;
  return j;
}

int run_generate(const ojson& s) {
  GenConfig g;
  g.seed = s["seed"];
  g.per_cell = s["per_cell"];
  g.sentiment_vocab = s["sentiment_vocab"];
  g.language_vocab = s["language_vocab"];
  g.domain_vocab = s["domain_vocab"];
  g.noise_vocab = s["noise_vocab"];
  g.rho_train = s["rho_train"];
  g.rho_test = s["rho_test"];
  g.mean_length_it = s["mean_length_it"];
  g.mean_length_ro = s["mean_length_ro"];
  g.length_shape = s["length_shape"];
  g.max_length = s["max_length"];
  g.sentiment_rate = s["sentiment_rate"];
  g.domain_rate = s["domain_rate"];
  g.language_rate = s["language_rate"];
  g.sentiment_purity = s["sentiment_purity"];
  g.title_rate = s["title_rate"];
  g.mean_title_length = s["mean_title_length"];
  const std::string out = require_path(s, "output");
  const Dataset ds = generate(g);
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  write_jsonl(ds, fs::path(out));
  write_effective_config(sidecar(out), "generate", s);
  std::cout << "wrote " << ds.size() << " records to " << out << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// prepare

ojson prepare_defaults() {
  ojson j;
  j["input"] = "";
  j["output"] = "";
  j["verify_language"] = false;
  j["min_confidence"] = kMinLanguageConfidence;
  j["flags_output"] = "";
  return j;
}

int run_prepare(const ojson& s) {
  const std::string in = require_path(s, "input");
  const std::string out = require_path(s, "output");
  const Dataset raw = read_jsonl(fs::path(in));
  const Dataset normalized = normalize(raw);

  std::vector<QualityFlag> flags;
  if (s["verify_language"].get<bool>()) {
    flags = verify_language(normalized, stub_detect_language, s["min_confidence"].get<double>());
  }
  const DedupResult dedup = deduplicate(normalized);
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  write_jsonl(dedup.dataset, fs::path(out));

  std::string flags_path = s["flags_output"];
  if (flags_path.empty() && !flags.empty()) flags_path = out + ".flags.jsonl";
  if (!flags_path.empty()) {
    std::string text;
    for (const auto& f : flags) {
      ojson j;
      j["record"] = f.record_index;
      j["reason"] = std::string(to_string(f.reason));
      j["detected_language"] = f.detected_language;
      j["confidence"] = f.confidence;
      text += j.dump() + "\n";
    }
    write_text(flags_path, text);
  }
  write_effective_config(sidecar(out), "prepare", s);
  std::cout << raw.size() << " read\n" << dedup.removed << " removed\n" << flags.size() << " flagged\n"
            << dedup.dataset.size() << " written\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// stats

ojson stats_defaults() {
  ojson j;
  j["input"] = "";
  j["output"] = "";
  j["split"] = "all";
  return j;
}

int run_stats(const ojson& s) {
  Dataset ds = read_jsonl(fs::path(require_path(s, "input")));
  if (s["split"] != "all") ds = ds.filter(split_setting(s, "split"));
  const CorpusStats stats = compute_stats(ds);
  std::cout << stats_to_table(stats);
  const std::string out = s["output"];
  if (!out.empty()) {
    write_text(out, stats_to_json(stats) + "\n");
    write_effective_config(sidecar(out), "stats", s);
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// train

ojson train_defaults() {
  const TrainConfig c;
  ojson j;
  j["data"] = "";
  j["out_dir"] = "";
  j["mode"] = std::string(to_string(c.mode));
  j["seed"] = c.seed;
  j["batch_size"] = c.batch_size;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["warmup_ratio"] = c.warmup_ratio;
  j["lr"] = c.optimizer.lr;
  j["weight_decay"] = c.optimizer.weight_decay;
  j["adam_beta1"] = c.optimizer.beta1;
  j["adam_beta2"] = c.optimizer.beta2;
  j["adam_eps"] = c.optimizer.eps;
  j["max_grad_norm"] = c.optimizer.max_grad_norm;
  j["hash_dim"] = c.model.hash_dim;
  j["hidden"] = c.model.hidden;
  j["max_tokens"] = c.model.max_tokens;
  j["dropout"] = c.model.dropout;
  j["lambda_init"] = c.meta.lambda_init;
  j["meta_lr"] = c.meta.meta_lr;
  j["lambda_min"] = c.meta.lambda_min;
  j["lambda_max"] = c.meta.lambda_max;
  j["meta_interval"] = c.meta.interval;
  j["meta_batch_size"] = c.meta.batch_size;
  return j;
}

int run_train(const ojson& s) {
  TrainConfig c;
  const auto mode = parse_train_mode(s["mode"].get<std::string>());
  if (!mode) throw ConfigError("mode must be baseline, loss-reversal or gradient-reversal");
  c.mode = *mode;
  c.seed = s["seed"];
  c.batch_size = s["batch_size"];
  c.max_epochs = s["max_epochs"];
  c.patience = s["patience"];
  c.warmup_ratio = s["warmup_ratio"];
  c.optimizer.lr = s["lr"];
  c.optimizer.weight_decay = s["weight_decay"];
  c.optimizer.beta1 = s["adam_beta1"];
  c.optimizer.beta2 = s["adam_beta2"];
  c.optimizer.eps = s["adam_eps"];
  c.optimizer.max_grad_norm = s["max_grad_norm"];
  c.model.hash_dim = s["hash_dim"];
  c.model.hidden = s["hidden"];
  c.model.max_tokens = s["max_tokens"];
  c.model.dropout = s["dropout"];
  c.meta.lambda_init = s["lambda_init"];
  c.meta.meta_lr = s["meta_lr"];
  c.meta.lambda_min = s["lambda_min"];
  c.meta.lambda_max = s["lambda_max"];
  c.meta.interval = s["meta_interval"];
  c.meta.batch_size = s["meta_batch_size"];
  if (c.model.hash_dim == 0 || c.model.hidden == 0 || c.model.max_tokens == 0) {
    throw ConfigError("hash_dim, hidden and max_tokens must be positive");
  }
  if (!(c.model.dropout >= 0.0 && c.model.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");

  const fs::path out_dir = require_path(s, "out_dir");
  const Dataset ds = read_jsonl(fs::path(require_path(s, "data")));
  const TrainResult result = train(c, ds.filter(Split::Train), ds.filter(Split::Valid));

  fs::create_directories(out_dir);
  save_checkpoint(result.best, out_dir / "checkpoint.bin");
  std::ofstream log(out_dir / "train_log.jsonl", std::ios::binary | std::ios::trunc);
  if (!log) throw DataError("cannot write " + (out_dir / "train_log.jsonl").string());
  write_log_jsonl(result.log, log);
  write_effective_config(out_dir / "effective_config.json", "train", s);

  const auto& best = result.log.epochs.at(result.log.best_epoch - 1);
  std::cout << "epochs run: " << result.log.epochs.size() << (result.log.early_stopped ? " (early stop)" : "")
            << "\nbest epoch: " << result.log.best_epoch << " (valid acc " << best.val_accuracy << ", F1 "
            << best.val_f1 << ")\nlambda: " << result.meta.lambda1 << ", " << result.meta.lambda2 << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// evaluate

ojson evaluate_defaults() {
  ojson j;
  j["checkpoint"] = "";
  j["data"] = "";
  j["split"] = "test";
  j["out_dir"] = "";
  j["label"] = "model";
  j["aggregation"] = "pooled";
  j["average"] = "cells";
  return j;
}

int run_evaluate(const ojson& s) {
  const ReportOptions options = report_options(s);
  const ModelParameters params = load_checkpoint(fs::path(require_path(s, "checkpoint")));
  const Dataset ds = read_jsonl(fs::path(require_path(s, "data"))).filter(split_setting(s, "split"));
  if (ds.empty()) throw DataError("no records in the requested split");
  const MetricsReport report = evaluate_model(params, ds, options);
  const std::string table = report_to_table(report, s["label"]);
  const fs::path out_dir = require_path(s, "out_dir");
  write_text(out_dir / "report.json", report_to_json(report) + "\n");
  write_text(out_dir / "report.txt", table);
  write_effective_config(out_dir / "effective_config.json", "evaluate", s);
  std::cout << table;
  return kOk;
}

// ---------------------------------------------------------------------------
// llm-eval

ojson llm_defaults() {
  const CompletionConfig c;
  ojson j;
  j["data"] = "";
  j["split"] = "test";
  j["shot_data"] = "";
  j["shots"] = std::size_t{0};
  j["seed"] = std::uint64_t{42};
  j["limit"] = std::size_t{0};
  j["url"] = c.url;
  j["path"] = c.path;
  j["model"] = c.model;
  j["temperature"] = c.temperature;
  j["max_tokens"] = static_cast<std::size_t>(c.max_tokens);
  j["timeout_seconds"] = c.timeout_seconds;
  j["max_retries"] = c.max_retries;
  j["backoff_seconds"] = c.backoff_seconds;
  j["max_in_flight"] = c.max_in_flight;
  j["out_dir"] = "";
  j["label"] = "llm";
  j["aggregation"] = "pooled";
  j["average"] = "cells";
  return j;
}

int run_llm_eval_command(const ojson& s) {
  LlmEvalConfig c;
  c.shots = s["shots"];
  c.kind = c.shots == 0 ? PromptKind::ZeroShot : PromptKind::MultiShot;
  c.seed = s["seed"];
  c.report = report_options(s);
  c.completion.url = s["url"];
  c.completion.path = s["path"];
  c.completion.model = s["model"];
  c.completion.temperature = s["temperature"];
  c.completion.max_tokens = static_cast<int>(s["max_tokens"].get<std::size_t>());
  c.completion.timeout_seconds = s["timeout_seconds"];
  c.completion.max_retries = s["max_retries"];
  c.completion.backoff_seconds = s["backoff_seconds"];
  c.completion.max_in_flight = s["max_in_flight"];

  const std::string data_path = require_path(s, "data");
  const Dataset all = read_jsonl(fs::path(data_path));
  Dataset test = all.filter(split_setting(s, "split"));
  const std::size_t limit = s["limit"];
  if (limit > 0 && test.size() > limit) test.records.resize(limit);
  const std::string shot_path = s["shot_data"];
  const Dataset shots = (shot_path.empty() ? all : read_jsonl(fs::path(shot_path))).filter(Split::Train);

  const LlmEvalResult result = run_llm_eval(test, shots, c);
  const fs::path out_dir = require_path(s, "out_dir");
  fs::create_directories(out_dir);
  std::ofstream log(out_dir / "run_log.jsonl", std::ios::binary | std::ios::trunc);
  if (!log) throw DataError("cannot write " + (out_dir / "run_log.jsonl").string());
  write_run_log(result.records, log);
  const std::string table = report_to_table(result.report, s["label"]);
  write_text(out_dir / "report.json", report_to_json(result.report) + "\n");
  write_text(out_dir / "report.txt", table);
  write_effective_config(out_dir / "effective_config.json", "llm-eval", s);
  std::cout << table << result.records.size() << " queried, " << result.parse_failures << " parse failures, "
            << result.query_failures << " query failures\n";
  return result.query_failures > 0 ? kRuntimeFailure : kOk;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Training allocates and frees large tensors at a high rate; keep them on the heap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"xsent: cross-lingual, cross-domain review rating toolkit"};
  app.require_subcommand(1);

  struct Command {
    CLI::App* app;
    std::unique_ptr<Settings> settings;
    int (*run)(const ojson&);
  };
  std::vector<Command> commands;
  auto add = [&](const char* name, const char* help, ojson defaults, int (*run)(const ojson&),
                 std::vector<std::pair<std::string, std::string>> flags) {
    CLI::App* sub = app.add_subcommand(name, help);
    auto settings = std::make_unique<Settings>(sub, std::move(defaults));
    for (const auto& [key, text] : flags) settings->flag(key, text);
    commands.push_back({sub, std::move(settings), run});
  };

  add("generate", "write a synthetic labeled corpus", generate_defaults(), run_generate,
      {{"output", "output JSON-lines path"},
       {"seed", "random seed"},
       {"per_cell", "records per language x domain x split"},
       {"sentiment_vocab", "sentiment concepts"},
       {"language_vocab", "language words per language"},
       {"domain_vocab", "domain words per domain"},
       {"noise_vocab", "noise words"},
       {"rho_train", "domain/rating confound in train and valid"},
       {"rho_test", "domain/rating confound in test"},
       {"mean_length_it", "mean body length, Italian"},
       {"mean_length_ro", "mean body length, Romanian"},
       {"length_shape", "length distribution shape (1 = geometric)"},
       {"max_length", "body length cap"},
       {"sentiment_rate", "share of sentiment words"},
       {"domain_rate", "share of domain words"},
       {"language_rate", "share of language words"},
       {"sentiment_purity", "chance a sentiment word matches the rating"},
       {"title_rate", "chance a record has a title"},
       {"mean_title_length", "mean title length"}});
  add("prepare", "normalize, check language and deduplicate a corpus", prepare_defaults(), run_prepare,
      {{"input", "input JSON-lines path"},
       {"output", "output JSON-lines path"},
       {"verify_language", "flag records whose detected language disagrees (built-in detector)"},
       {"min_confidence", "minimum detector confidence"},
       {"flags_output", "where to write quality flags"}});
  add("stats", "corpus statistics", stats_defaults(), run_stats,
      {{"input", "input JSON-lines path"},
       {"output", "write the statistics as JSON here"},
       {"split", "all, train, valid or test"}});
  add("train", "train the adversarial rating model", train_defaults(), run_train,
      {{"data", "JSON-lines corpus with train and valid splits"},
       {"out_dir", "output directory"},
       {"mode", "baseline, loss-reversal or gradient-reversal"},
       {"seed", "random seed"},
       {"batch_size", "batch size"},
       {"max_epochs", "maximum epochs"},
       {"patience", "early-stopping patience in epochs"},
       {"warmup_ratio", "share of steps spent warming up"},
       {"lr", "peak learning rate"},
       {"weight_decay", "decoupled weight decay"},
       {"adam_beta1", "AdamW beta1"},
       {"adam_beta2", "AdamW beta2"},
       {"adam_eps", "AdamW epsilon"},
       {"max_grad_norm", "gradient clipping norm"},
       {"hash_dim", "feature hashing buckets"},
       {"hidden", "encoder width"},
       {"max_tokens", "tokens kept per review"},
       {"dropout", "dropout rate"},
       {"lambda_init", "initial adversarial coefficients"},
       {"meta_lr", "meta learning rate for lambda"},
       {"lambda_min", "lower bound for lambda"},
       {"lambda_max", "upper bound for lambda"},
       {"meta_interval", "optimizer steps between lambda updates"},
       {"meta_batch_size", "validation batch size for lambda updates"}});
  add("evaluate", "score a checkpoint on one split", evaluate_defaults(), run_evaluate,
      {{"checkpoint", "checkpoint written by train"},
       {"data", "JSON-lines corpus"},
       {"split", "split to score"},
       {"out_dir", "output directory"},
       {"label", "row label in the table"},
       {"aggregation", "pooled or averaged domain/language columns"},
       {"average", "Avg. over the six cells or the five columns"}});
  add("llm-eval", "score a completion endpoint with rating prompts", llm_defaults(), run_llm_eval_command,
      {{"data", "JSON-lines corpus"},
       {"split", "split to score"},
       {"shot_data", "corpus to draw examples from (train split; default: data)"},
       {"shots", "examples per prompt, 0 for zero-shot"},
       {"seed", "example selection seed"},
       {"limit", "score only the first N records (0 = all)"},
       {"url", "endpoint, http://host:port"},
       {"path", "request path"},
       {"model", "model identifier sent with each request"},
       {"temperature", "sampling temperature (must be 0)"},
       {"max_tokens", "maximum new tokens"},
       {"timeout_seconds", "per-request timeout"},
       {"max_retries", "retries after a failed request"},
       {"backoff_seconds", "initial retry delay"},
       {"max_in_flight", "concurrent requests"},
       {"out_dir", "output directory"},
       {"label", "row label in the table"},
       {"aggregation", "pooled or averaged domain/language columns"},
       {"average", "Avg. over the six cells or the five columns"}});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigFailure;
  }

  try {
    for (auto& c : commands) {
      if (c.app->parsed()) return c.run(c.settings->resolve());
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kConfigFailure;
}
