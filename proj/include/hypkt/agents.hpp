#pragma once

// Teacher agent (LLM-backed question annotation) and student agent
// (engagement / forgetting / LSTM response simulator).

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "hypkt/diffcore.hpp"
#include "hypkt/interactions.hpp"
#include "hypkt/kgraph.hpp"

namespace hypkt::agents {

using diff::Tensor;

// ---- LLM clients ----------------------------------------------------------------

// Expected-output descriptor: the reply must be a JSON object with these keys.
struct Schema {
  std::string name;
  std::vector<std::string> required_keys;
};

const Schema& teacher_schema();

class LLMClient {
 public:
  virtual ~LLMClient() = default;
  // Returns the raw reply text. Transport failures throw Errc::transport_error.
  virtual std::string send(const std::string& prompt, const Schema& schema) = 0;
};

// Offline backend. Picks 1-3 concepts from the vocabulary by a seeded hash of
// the prompt; each concept's level comes from a seeded hash ranking of its
// name, split into four equal buckets.
class MockLLMClient : public LLMClient {
 public:
  explicit MockLLMClient(std::uint64_t seed, std::vector<std::string> vocabulary = default_vocabulary());

  std::string send(const std::string& prompt, const Schema& schema) override;
  int level_of(const std::string& concept_name) const;
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }

  static std::vector<std::string> default_vocabulary();

 private:
  std::uint64_t seed_;
  std::vector<std::string> vocabulary_;
  std::map<std::string, int> levels_;
};

struct HttpClientOptions {
  std::string endpoint;  // e.g. http://127.0.0.1:8080/v1/chat/completions
  std::string api_key;
  std::string model = "gpt-4o-mini";
  std::string audit_path;  // JSON-lines request/response log; empty disables
  int timeout_seconds = 60;

  // HYPKT_LLM_ENDPOINT, HYPKT_LLM_API_KEY, HYPKT_LLM_MODEL, HYPKT_LLM_AUDIT.
  static HttpClientOptions from_env();
};

// OpenAI-compatible chat-completions backend over plain HTTP. Sends are
// serialized internally.
class HttpLLMClient : public LLMClient {
 public:
  explicit HttpLLMClient(HttpClientOptions options);
  std::string send(const std::string& prompt, const Schema& schema) override;

 private:
  HttpClientOptions options_;
  std::mutex mutex_;
  std::size_t sequence_ = 0;
};

// ---- teacher agent ----------------------------------------------------------------

const std::string& teacher_prompt_template();
std::string render_prompt(const std::string& tmpl, const std::string& question_text);

struct AnnotatedConcept {
  std::string name;
  int level = kgraph::kMinLevel;

  bool operator==(const AnnotatedConcept&) const = default;
};

struct TeacherAnnotation {
  std::string question_id;
  std::string question_text;
  std::vector<AnnotatedConcept> concepts;
  std::vector<kgraph::Dependency> dependencies;  // by concept name
  double difficulty = 0.0;
};

double difficulty_from_levels(const std::vector<AnnotatedConcept>& concepts);

// Parses and validates one reply. Levels are rounded and clamped to 1..4,
// dependencies that do not name two annotated concepts of increasing level
// are dropped, and the difficulty is recomputed from the levels.
TeacherAnnotation parse_annotation(const std::string& question_id, const std::string& question_text,
                                   const std::string& reply);

struct RetryPolicy {
  int attempts = 3;
  double initial_backoff_ms = 200.0;
  double multiplier = 2.0;
  // Replaceable for tests; defaults to std::this_thread::sleep_for.
  std::function<void(double ms)> sleep;
};

TeacherAnnotation teacher_annotate(const std::string& question_id, const std::string& question_text,
                                   LLMClient& client, const RetryPolicy& retry = {},
                                   const std::string& prompt_template = teacher_prompt_template());

void write_annotations(std::ostream& out, const std::vector<TeacherAnnotation>& annotations);
std::vector<TeacherAnnotation> read_annotations(std::istream& in);

// Concept ids are the annotated names. A concept annotated with different
// levels across questions takes its most frequent level (lower on ties).
kgraph::KnowledgeGraph build_catalog(const std::vector<TeacherAnnotation>& annotations,
                                     kgraph::HierarchyPolicy policy = kgraph::HierarchyPolicy::co_occurrence_or_explicit);

// ---- student agent ----------------------------------------------------------------

enum class LevelBucket { basic = 0, intermediate = 1, difficult = 2 };

// basic: L_avg < 2.5, intermediate: < 3.5, difficult otherwise.
LevelBucket bucket_of(double mean_level);

struct StudentProfile {
  std::string id;
  std::array<double, 3> proficiency{0.5, 0.5, 0.5};  // indexed by LevelBucket
  double lambda = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

// exp(-lambda * mean_level * dt).
double forgetting(double lambda, double mean_level, double dt);

struct EngagementParams {
  Tensor w;  // [1 x (2*embed_dim + 1)]
  Tensor b;  // [1]
};

// sigmoid(w . [x_q; x_c; log1p(dt)] + b) for row vectors x_q, x_c.
Tensor engagement(const Tensor& x_q, const Tensor& x_c, double dt, const EngagementParams& params);

struct StudentConfig {
  std::size_t embed_dim = 8;
  std::size_t hidden_dim = 8;
  double response_gain = 4.0;
  std::int64_t max_gap = 10;  // timestamp gaps drawn uniformly from 1..max_gap
  std::uint64_t weight_seed = 7;
  bool trainable = false;
};

struct LstmState {
  Tensor h;  // [1 x hidden_dim]
  Tensor c;
};

struct TraceRecord {
  std::string question_id;
  std::vector<std::string> concept_ids;
  double engagement = 0.0;
  double forgetting = 1.0;
  int response = 0;
  std::int64_t timestamp = 0;
  std::vector<std::string> reasoning_path;  // concepts by ascending level, then "0"/"1"
  double p_correct = 0.0;

  bool operator==(const TraceRecord&) const = default;
};

struct SyntheticTrace {
  std::string student_id;
  std::vector<TraceRecord> records;

  bool operator==(const SyntheticTrace&) const = default;
};

struct StepForward {
  Tensor engagement;  // [1]
  double forgetting = 1.0;
  LstmState next;
  Tensor p_correct;  // [1]
};

class StudentAgent {
 public:
  StudentAgent(kgraph::KnowledgeGraph catalog, StudentConfig config = {});

  const StudentConfig& config() const { return config_; }
  const kgraph::KnowledgeGraph& catalog() const { return catalog_; }
  std::vector<Tensor> parameters() const;
  const EngagementParams& engagement_params() const { return engagement_; }

  LstmState initial_state() const;

  // Deterministic part of one step (no sampling).
  StepForward forward(const StudentProfile& profile, const std::string& question_id, double dt,
                      const LstmState& prev) const;

  // One sampled step. dt is the gap since the last interaction sharing a
  // concept (or since the previous interaction).
  std::pair<TraceRecord, LstmState> step(const StudentProfile& profile, const std::string& question_id, double dt,
                                         std::int64_t timestamp, const LstmState& prev, std::mt19937_64& rng) const;

  SyntheticTrace simulate(const StudentProfile& profile, std::size_t steps, std::uint64_t root_seed) const;

 private:
  kgraph::KnowledgeGraph catalog_;
  StudentConfig config_;
  Tensor question_embed_;  // [Q x e]
  Tensor concept_embed_;   // [C x e]
  EngagementParams engagement_;
  Tensor lstm_w_;  // [(2e + hd) x 4hd], gate order i, f, o, g
  Tensor lstm_b_;  // [1 x 4hd]
  Tensor readout_;  // [hd x 1]
};

// Per-profile random streams derive from (root seed, profile seed, profile id).
std::uint64_t profile_stream_seed(std::uint64_t root_seed, const StudentProfile& profile);

std::vector<SyntheticTrace> generate_dataset(const StudentAgent& agent, const std::vector<StudentProfile>& profiles,
                                             std::size_t steps_per_student, std::uint64_t seed);

std::vector<toolkit::StudentSequence> to_sequences(const std::vector<SyntheticTrace>& traces);

// Interaction CSV plus engagement, forgetting and reasoning_path ('>'-joined).
void write_traces(std::ostream& out, const std::vector<SyntheticTrace>& traces);

}  // namespace hypkt::agents
