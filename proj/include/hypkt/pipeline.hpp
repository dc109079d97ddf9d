#pragma once

// Stage functions behind the command-line tool: annotation, graph assembly,
// trace synthesis, the student-level train/test protocol, and the synthetic
// benchmark.

#include <memory>
#include <string>
#include <vector>

#include "hypkt/agents.hpp"
#include "hypkt/config.hpp"
#include "hypkt/interactions.hpp"
#include "hypkt/kgraph.hpp"
#include "hypkt/tracker.hpp"

namespace hypkt::toolkit {

struct QuestionText {
  std::string id;
  std::string text;
};

// JSON lines {"id": ..., "text": ...}.
std::vector<QuestionText> read_questions(const std::string& path);
void write_questions(std::ostream& out, const std::vector<QuestionText>& questions);

// Deterministic word-problem catalog q01..qNN.
std::vector<QuestionText> benchmark_questions(std::size_t n = 60);

Format resolve_format(const RunConfig& config, const std::string& path);
std::vector<StudentSequence> load_logs(const RunConfig& config, const std::string& path, LoadReport* report = nullptr);

std::unique_ptr<agents::LLMClient> make_client(const RunConfig& config);
std::vector<agents::TeacherAnnotation> annotate(const std::vector<QuestionText>& questions, agents::LLMClient& client);
std::vector<agents::TeacherAnnotation> load_annotations(const std::string& path);

// Question-concept incidence from the logs, concept levels and question
// difficulties from the annotations. Concepts the teacher never annotated get
// level 1; questions it never annotated get mean level / 4. `unannotated`
// receives the number of such concepts. Questions and concepts are ordered
// by id; `with_students` adds student-question edges.
kgraph::KnowledgeGraph real_graph(const std::vector<StudentSequence>& logs,
                                  const std::vector<agents::TeacherAnnotation>& annotations,
                                  std::size_t* unannotated = nullptr, bool with_students = false);

// First half strong, second half weak; ids p000, p001, ...
std::vector<agents::StudentProfile> synth_profiles(const SynthSettings& settings);
std::vector<agents::SyntheticTrace> synthesize(const RunConfig& config,
                                               const std::vector<agents::TeacherAnnotation>& annotations);

struct TrainRun {
  tracker::Model model;
  tracker::TrainResult result;
  tracker::EpochMetrics test;
  std::size_t unannotated = 0;
};

// Train/test students under cfg.train_ratio, seeded from cfg.seed.
std::pair<std::vector<StudentSequence>, std::vector<StudentSequence>> protocol_split(
    const std::vector<StudentSequence>& logs, const tracker::TrainConfig& cfg);

// Student-level split with model.config.train_ratio and seed, then the test
// metrics of `model` on the held-out students.
tracker::EpochMetrics test_metrics(const tracker::Model& model, const std::vector<StudentSequence>& logs,
                                   std::size_t epoch);

TrainRun run_training(const RunConfig& config, const std::vector<StudentSequence>& logs,
                      const std::vector<agents::TeacherAnnotation>& annotations,
                      const std::vector<StudentSequence>& synthetic = {});

struct HyperbolicityRow {
  std::string view;
  kgraph::GromovResult result;
};

// H-all, H-ek, H-e and H-k; views with fewer than four connected nodes are skipped.
std::vector<HyperbolicityRow> hyperbolicity_table(const kgraph::KnowledgeGraph& g, const kgraph::GromovOptions& options);
std::string format_hyperbolicity(const std::vector<HyperbolicityRow>& rows);

struct Benchmark {
  std::vector<QuestionText> questions;
  std::vector<agents::TeacherAnnotation> annotations;
  std::vector<StudentSequence> logs;
};

// Mock-annotated catalog plus simulated strong and weak students.
Benchmark make_benchmark(const RunConfig& config, std::size_t questions = 60);

// Settings used for the end-to-end benchmark run.
RunConfig benchmark_config(std::uint64_t seed);

std::string utc_timestamp();

}  // namespace hypkt::toolkit
