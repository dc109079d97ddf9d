#include "hypkt/config.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <type_traits>
#include <vector>

#include "hypkt/error.hpp"

namespace hypkt::toolkit {

namespace fs = std::filesystem;

namespace {

struct Key {
  const char* name;
  const char* fallback;
  const char* doc;
  std::function<void(RunConfig&, const std::string&)> set;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw Error(Errc::parse_error, "key '" + key + "': cannot read '" + value + "' as " + expected);
}

double as_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

std::uint64_t as_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

bool as_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "true/false");
}

template <class F>
Key num(const char* name, const char* fallback, const char* doc, F field) {
  return {name, fallback, doc, [=](RunConfig& c, const std::string& v) { field(c) = as_double(name, v); }};
}

template <class F>
Key count(const char* name, const char* fallback, const char* doc, F field) {
  return {name, fallback, doc, [=](RunConfig& c, const std::string& v) {
            field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(as_u64(name, v));
          }};
}

template <class F>
Key flag(const char* name, const char* fallback, const char* doc, F field) {
  return {name, fallback, doc, [=](RunConfig& c, const std::string& v) { field(c) = as_bool(name, v); }};
}

template <class F>
Key text(const char* name, const char* fallback, const char* doc, F field) {
  return {name, fallback, doc, [=](RunConfig& c, const std::string& v) { field(c) = v; }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      {"seed", "0", "root seed for every random stream",
       [](RunConfig& c, const std::string& v) { c.set_seed(as_u64("seed", v)); }},
      text("interactions", "", "interaction log (csv or jsonl)", [](RunConfig& c) -> auto& { return c.interactions; }),
      text("questions", "", "question texts, JSON lines {\"id\",\"text\"}", [](RunConfig& c) -> auto& { return c.questions; }),
      text("annotations", "", "teacher annotations, JSON lines", [](RunConfig& c) -> auto& { return c.annotations; }),
      text("graph", "", "knowledge graph, JSON lines", [](RunConfig& c) -> auto& { return c.graph; }),
      text("synthetic", "", "extra synthetic training sequences (interaction csv)",
           [](RunConfig& c) -> auto& { return c.synthetic; }),
      text("checkpoint", "", "trained checkpoint for eval (default <out>/checkpoint.json)",
           [](RunConfig& c) -> auto& { return c.checkpoint; }),
      text("format", "auto", "interaction format: csv, jsonl or auto", [](RunConfig& c) -> auto& { return c.format; }),
      text("column.student", "student_id", "student column", [](RunConfig& c) -> auto& { return c.columns.student; }),
      text("column.question", "question_id", "question column", [](RunConfig& c) -> auto& { return c.columns.question; }),
      text("column.concepts", "concept_ids", "concept list column", [](RunConfig& c) -> auto& { return c.columns.concepts; }),
      text("column.correct", "correct", "0/1 response column", [](RunConfig& c) -> auto& { return c.columns.correct; }),
      text("column.timestamp", "timestamp", "integer time column", [](RunConfig& c) -> auto& { return c.columns.timestamp; }),
      {"column.delimiter", ";", "separator inside the concept list",
       [](RunConfig& c, const std::string& v) {
         if (v.size() != 1) bad_value("column.delimiter", v, "a single character");
         c.columns.concept_delimiter = v[0];
       }},
      num("ingest.max_malformed", "0.01", "abort when a larger fraction of rows is malformed",
          [](RunConfig& c) -> auto& { return c.columns.max_malformed_fraction; }),
      text("backend", "mock", "teacher backend: mock or http (HYPKT_LLM_* environment)",
           [](RunConfig& c) -> auto& { return c.backend; }),
      count("synth.profiles", "40", "simulated students, half high and half low proficiency",
            [](RunConfig& c) -> auto& { return c.synth.profiles; }),
      count("synth.steps", "50", "interactions per simulated student", [](RunConfig& c) -> auto& { return c.synth.steps; }),
      num("synth.high", "0.9", "proficiency of the strong group", [](RunConfig& c) -> auto& { return c.synth.high; }),
      num("synth.low", "0.1", "proficiency of the weak group", [](RunConfig& c) -> auto& { return c.synth.low; }),
      num("synth.lambda", "0.05", "forgetting rate", [](RunConfig& c) -> auto& { return c.synth.lambda; }),
      count("synth.embed_dim", "8", "student agent embedding width",
            [](RunConfig& c) -> auto& { return c.synth.student.embed_dim; }),
      count("synth.hidden_dim", "8", "student agent LSTM width",
            [](RunConfig& c) -> auto& { return c.synth.student.hidden_dim; }),
      num("synth.response_gain", "4", "weight of proficiency minus difficulty in the response logit",
          [](RunConfig& c) -> auto& { return c.synth.student.response_gain; }),
      count("synth.max_gap", "10", "largest timestamp gap between interactions",
            [](RunConfig& c) -> auto& { return c.synth.student.max_gap; }),
      flag("synth.trainable_lstm", "false", "mark the student LSTM weights as trainable",
           [](RunConfig& c) -> auto& { return c.synth.student.trainable; }),
      count("hyperbolicity.samples", "20000", "sampled quadruples when not exhaustive",
            [](RunConfig& c) -> auto& { return c.gromov.sample_size; }),
      {"hyperbolicity.mode", "automatic", "automatic, exhaustive or sampled",
       [](RunConfig& c, const std::string& v) {
         if (v == "automatic") c.gromov.mode = kgraph::DeltaMode::automatic;
         else if (v == "exhaustive") c.gromov.mode = kgraph::DeltaMode::exhaustive;
         else if (v == "sampled") c.gromov.mode = kgraph::DeltaMode::sampled;
         else bad_value("hyperbolicity.mode", v, "automatic/exhaustive/sampled");
       }},
      {"mode", "full", "full, no-hyp or no-con",
       [](RunConfig& c, const std::string& v) { c.train.mode = tracker::parse_mode(v); }},
      count("dim", "32", "embedding and state width", [](RunConfig& c) -> auto& { return c.train.dim; }),
      count("layers", "2", "attention layers", [](RunConfig& c) -> auto& { return c.train.layers; }),
      count("heads", "2", "attention heads", [](RunConfig& c) -> auto& { return c.train.heads; }),
      num("dropout", "0", "encoder input dropout", [](RunConfig& c) -> auto& { return c.train.dropout; }),
      num("tau", "0.2", "contrastive temperature", [](RunConfig& c) -> auto& { return c.train.tau; }),
      count("negatives", "16", "negatives per positive pair", [](RunConfig& c) -> auto& { return c.train.negatives; }),
      {"similarity", "cosine", "contrastive similarity: cosine or distance",
       [](RunConfig& c, const std::string& v) {
         if (v == "cosine") c.train.similarity = hgnn::Similarity::cosine;
         else if (v == "distance") c.train.similarity = hgnn::Similarity::distance;
         else bad_value("similarity", v, "cosine/distance");
       }},
      num("alpha", "0.1", "weight of the contrastive loss", [](RunConfig& c) -> auto& { return c.train.alpha; }),
      num("lr", "0.01", "SGD step size", [](RunConfig& c) -> auto& { return c.train.lr; }),
      num("clip", "5", "gradient norm clip (0 disables)", [](RunConfig& c) -> auto& { return c.train.clip; }),
      count("epochs", "30", "training epochs", [](RunConfig& c) -> auto& { return c.train.epochs; }),
      count("batch_size", "4", "sequences per step", [](RunConfig& c) -> auto& { return c.train.batch_size; }),
      count("window", "200", "longest sequence chunk", [](RunConfig& c) -> auto& { return c.train.window; }),
      num("val_ratio", "0.125", "share of training students held out for checkpoint selection",
          [](RunConfig& c) -> auto& { return c.train.val_ratio; }),
      num("train_ratio", "0.8", "student-level train share; the rest is the test split",
          [](RunConfig& c) -> auto& { return c.train.train_ratio; }),
      num("curvature", "-1", "initial curvature of both spaces", [](RunConfig& c) -> auto& { return c.train.init_curvature; }),
      flag("learn_curvature", "true", "update curvatures during training",
           [](RunConfig& c) -> auto& { return c.train.learn_curvature; }),
      flag("fuse_aligned", "false", "average aligned real/synthetic embeddings before tracing",
           [](RunConfig& c) -> auto& { return c.train.fuse_aligned; }),
  };
  return k;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
  gromov.seed = s;
}

void RunConfig::validate() const {
  train.validate();
  if (format != "auto" && format != "csv" && format != "jsonl") {
    throw Error(Errc::invalid_argument, "format must be csv, jsonl or auto");
  }
  if (backend != "mock" && backend != "http") throw Error(Errc::invalid_argument, "backend must be mock or http");
  if (synth.profiles < 1 || synth.steps < 1) throw Error(Errc::invalid_argument, "synth.profiles and synth.steps must be positive");
  for (double p : {synth.high, synth.low}) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::invalid_argument, "synth proficiencies must lie in [0,1]");
  }
  if (!(synth.lambda >= 0.0)) throw Error(Errc::invalid_argument, "synth.lambda must be >= 0");
}

RunConfig parse_config(std::istream& in, const std::string& origin, const std::string& base_dir) {
  RunConfig c;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  const std::set<std::string> paths{"interactions", "questions", "annotations", "graph", "synthetic", "checkpoint"};
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = origin + ":" + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(Errc::parse_error, where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    const auto it = std::find_if(keys().begin(), keys().end(), [&](const Key& k) { return key == k.name; });
    if (it == keys().end()) throw Error(Errc::parse_error, where + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw Error(Errc::parse_error, where + ": duplicate key '" + key + "'");
    if (paths.count(key) && !value.empty()) {
      fs::path p(value);
      if (p.is_relative() && !base_dir.empty()) p = fs::path(base_dir) / p;
      value = p.lexically_normal().string();
      if (!fs::exists(p)) throw Error(Errc::io_error, where + ": " + key + " path does not exist: " + value);
    }
    try {
      it->set(c, value);
    } catch (const Error& e) {
      throw Error(e.code(), where + ": " + e.message());
    }
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(e.code(), origin + ": " + e.message());
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot open config " + path);
  return parse_config(in, path, fs::path(path).parent_path().string());
}

std::string config_schema() {
  std::ostringstream o;
  for (const auto& k : keys()) {
    o << k.name << " = " << k.fallback << "    # " << k.doc << '\n';
  }
  return o.str();
}

}  // namespace hypkt::toolkit
