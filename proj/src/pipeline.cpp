#include "hypkt/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "hypkt/error.hpp"
#include "hypkt/hashing.hpp"
#include "hypkt/metrics.hpp"
#include "json.hpp"

namespace hypkt::toolkit {

using nlohmann::json;

namespace {

constexpr std::uint64_t kSplitSalt = 0x7465737473706c74ULL;

}  // namespace

std::pair<std::vector<StudentSequence>, std::vector<StudentSequence>> protocol_split(
    const std::vector<StudentSequence>& logs, const tracker::TrainConfig& cfg) {
  return split(logs, cfg.train_ratio, splitmix64(cfg.seed ^ kSplitSalt));
}

std::vector<QuestionText> read_questions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot open questions file " + path);
  std::vector<QuestionText> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path + ":" + std::to_string(lineno);
    try {
      const json j = json::parse(line);
      QuestionText q{j.at("id").get<std::string>(), j.at("text").get<std::string>()};
      if (!seen.insert(q.id).second) throw Error(Errc::invalid_argument, where + ": duplicate question id " + q.id);
      out.push_back(std::move(q));
    } catch (const json::exception& e) {
      throw Error(Errc::parse_error, where + ": expected {\"id\",\"text\"}", e.what());
    }
  }
  if (out.empty()) throw Error(Errc::invalid_argument, "questions file " + path + " is empty");
  return out;
}

void write_questions(std::ostream& out, const std::vector<QuestionText>& questions) {
  for (const auto& q : questions) out << json{{"id", q.id}, {"text", q.text}}.dump() << '\n';
}

std::vector<QuestionText> benchmark_questions(std::size_t n) {
  static const char* const kItems[] = {"apples", "pencils", "marbles", "tickets", "books", "coins"};
  static const char* const kAsks[] = {
      "How many are left after giving away %d?", "What is the total if each costs %d dollars?",
      "Split them equally among %d friends.",     "What fraction is %d of the whole?",
      "Solve for x when x + %d equals the count.", "Write the ratio of %d to the count."};
  std::vector<QuestionText> out;
  char id[32], text[256];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(id, sizeof id, "q%02zu", i + 1);
    const std::size_t count = 6 + (i * 7) % 37;
    std::snprintf(text, sizeof text, "A box holds %zu %s. ", count, kItems[i % 6]);
    std::string t = text;
    std::snprintf(text, sizeof text, kAsks[(i / 6) % 6], static_cast<int>(2 + i % 5));
    out.push_back({id, t + text});
  }
  return out;
}

Format resolve_format(const RunConfig& config, const std::string& path) {
  if (config.format == "csv") return Format::csv;
  if (config.format == "jsonl") return Format::jsonl;
  return format_from_path(path);
}

std::vector<StudentSequence> load_logs(const RunConfig& config, const std::string& path, LoadReport* report) {
  if (path.empty()) throw Error(Errc::invalid_argument, "no interaction file configured (key 'interactions')");
  return load_interactions(path, resolve_format(config, path), config.columns, report);
}

std::unique_ptr<agents::LLMClient> make_client(const RunConfig& config) {
  if (config.backend == "http") return std::make_unique<agents::HttpLLMClient>(agents::HttpClientOptions::from_env());
  return std::make_unique<agents::MockLLMClient>(config.seed);
}

std::vector<agents::TeacherAnnotation> annotate(const std::vector<QuestionText>& questions, agents::LLMClient& client) {
  std::vector<agents::TeacherAnnotation> out;
  out.reserve(questions.size());
  for (const auto& q : questions) out.push_back(agents::teacher_annotate(q.id, q.text, client));
  return out;
}

std::vector<agents::TeacherAnnotation> load_annotations(const std::string& path) {
  if (path.empty()) throw Error(Errc::invalid_argument, "no annotation file configured (key 'annotations')");
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot open annotations " + path);
  return agents::read_annotations(in);
}

kgraph::KnowledgeGraph real_graph(const std::vector<StudentSequence>& logs,
                                  const std::vector<agents::TeacherAnnotation>& annotations, std::size_t* unannotated,
                                  bool with_students) {
  std::map<std::string, std::set<std::string>> incidence;
  std::vector<std::pair<std::string, std::string>> attempts;
  for (const auto& s : logs) {
    for (const auto& it : s.interactions) {
      incidence[it.question_id].insert(it.concept_ids.begin(), it.concept_ids.end());
      attempts.emplace_back(s.student_id, it.question_id);
    }
  }
  if (incidence.empty()) throw Error(Errc::invalid_argument, "no interactions to build a graph from");

  std::map<std::string, int> level;
  std::map<std::string, const agents::TeacherAnnotation*> by_question;
  const kgraph::KnowledgeGraph catalog = agents::build_catalog(annotations);
  for (const auto& c : catalog.concepts()) level[c.id] = c.level;
  for (const auto& a : annotations) by_question[a.question_id] = &a;

  std::map<std::string, kgraph::ConceptNode> concepts;
  std::size_t missing = 0;
  for (const auto& [qid, cids] : incidence) {
    for (const auto& cid : cids) {
      if (concepts.count(cid)) continue;
      const auto it = level.find(cid);
      if (it == level.end()) ++missing;
      concepts.emplace(cid, kgraph::ConceptNode{cid, cid, it == level.end() ? kgraph::kMinLevel : it->second});
    }
  }
  std::vector<kgraph::QuestionNode> questions;
  for (const auto& [qid, cids] : incidence) {
    kgraph::QuestionNode q{qid, "", 0.0, std::vector<std::string>(cids.begin(), cids.end())};
    const auto a = by_question.find(qid);
    if (a != by_question.end()) {
      q.text = a->second->question_text;
      q.difficulty = a->second->difficulty;
    } else {
      double sum = 0.0;
      for (const auto& cid : cids) sum += concepts.at(cid).level;
      q.difficulty = sum / static_cast<double>(cids.size()) / kgraph::kMaxLevel;
    }
    questions.push_back(std::move(q));
  }
  std::vector<kgraph::ConceptNode> concept_list;
  for (auto& [id, c] : concepts) concept_list.push_back(c);
  if (unannotated) *unannotated = missing;
  auto g = kgraph::build_graph(std::move(questions), std::move(concept_list));
  if (with_students) g.attach_students(attempts);
  return g;
}

std::vector<agents::StudentProfile> synth_profiles(const SynthSettings& settings) {
  std::vector<agents::StudentProfile> out;
  const std::size_t strong = (settings.profiles + 1) / 2;
  char id[16];
  for (std::size_t i = 0; i < settings.profiles; ++i) {
    std::snprintf(id, sizeof id, "p%03zu", i);
    const double p = i < strong ? settings.high : settings.low;
    out.push_back({id, {p, p, p}, settings.lambda, i});
  }
  return out;
}

std::vector<agents::SyntheticTrace> synthesize(const RunConfig& config,
                                               const std::vector<agents::TeacherAnnotation>& annotations) {
  const agents::StudentAgent agent(agents::build_catalog(annotations), config.synth.student);
  return agents::generate_dataset(agent, synth_profiles(config.synth), config.synth.steps, config.seed);
}

tracker::EpochMetrics test_metrics(const tracker::Model& model, const std::vector<StudentSequence>& logs,
                                   std::size_t epoch) {
  const auto test = protocol_split(logs, model.config).second;
  const auto s = tracker::evaluate(model, tracker::prepare(model, test));
  return {epoch, "test", s.loss, auc(s.predictions, s.labels), acc(s.predictions, s.labels)};
}

TrainRun run_training(const RunConfig& config, const std::vector<StudentSequence>& logs,
                      const std::vector<agents::TeacherAnnotation>& annotations,
                      const std::vector<StudentSequence>& synthetic) {
  config.validate();
  std::size_t missing = 0;
  auto graph_real = real_graph(logs, annotations, &missing);
  auto graph_syn = agents::build_catalog(annotations);
  TrainRun run{tracker::Model::create(config.train, std::move(graph_real), std::move(graph_syn)), {}, {}, missing};
  const auto train_part = protocol_split(logs, config.train).first;
  run.result = tracker::train(run.model, train_part, synthetic);
  run.test = test_metrics(run.model, logs, run.result.best_epoch);
  return run;
}

std::vector<HyperbolicityRow> hyperbolicity_table(const kgraph::KnowledgeGraph& g, const kgraph::GromovOptions& options) {
  const auto views = kgraph::graph_views(g);
  const std::pair<const char*, const kgraph::SimpleGraph*> named[] = {{"H-all", &views.all},
                                                                      {"H-ek", &views.question_concept},
                                                                      {"H-e", &views.question_question},
                                                                      {"H-k", &views.concept_concept}};
  std::vector<HyperbolicityRow> out;
  for (const auto& [name, view] : named) {
    std::size_t largest = 0;
    for (const auto& comp : kgraph::connected_components(*view)) largest = std::max(largest, comp.size());
    if (largest < 4) continue;
    out.push_back({name, kgraph::gromov_delta(*view, options)});
  }
  return out;
}

std::string format_hyperbolicity(const std::vector<HyperbolicityRow>& rows) {
  std::ostringstream o;
  o << "view,nodes,delta,diameter,normalized,method\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.4f,%.0f,%.4f,%s\n", r.view.c_str(), r.result.nodes, r.result.delta,
                  r.result.diameter, r.result.normalized, r.result.exhaustive ? "exhaustive" : "sampled");
    o << buf;
  }
  return o.str();
}

Benchmark make_benchmark(const RunConfig& config, std::size_t questions) {
  Benchmark b;
  b.questions = benchmark_questions(questions);
  agents::MockLLMClient client(config.seed);
  b.annotations = annotate(b.questions, client);
  b.logs = agents::to_sequences(synthesize(config, b.annotations));
  return b;
}

RunConfig benchmark_config(std::uint64_t seed) {
  RunConfig c;
  c.set_seed(seed);
  c.synth.profiles = 40;
  c.synth.steps = 50;
  c.train.epochs = 30;
  c.train.dim = 32;
  c.train.batch_size = 4;
  c.train.lr = 0.4;
  return c;
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace hypkt::toolkit
