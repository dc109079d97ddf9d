#pragma once

// Heterogeneous question/concept graph with level-ordered concept hierarchy
// edges, undirected projections of it, and Gromov four-point hyperbolicity.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace hypkt::kgraph {

inline constexpr int kMinLevel = 1;
inline constexpr int kMaxLevel = 4;

struct ConceptNode {
  std::string id;
  std::string name;
  int level = kMinLevel;
};

struct QuestionNode {
  std::string id;
  std::string text;
  double difficulty = 0.0;
  std::vector<std::string> concept_ids;
};

// Explicit parent -> child dependency (e.g. emitted by the teacher agent).
struct Dependency {
  std::string parent;
  std::string child;
};

enum class HierarchyPolicy {
  // (a, b) with level(a) < level(b) when a and b share a question, or when
  // an explicit dependency names them.
  co_occurrence_or_explicit,
  explicit_only,
  // Every strictly level-increasing concept pair.
  level_complete,
};

using Edge = std::pair<std::size_t, std::size_t>;

class KnowledgeGraph {
 public:
  // Validates and indexes pre-built edge sets (used by deserialization).
  static KnowledgeGraph from_parts(std::vector<QuestionNode> questions, std::vector<ConceptNode> concepts,
                                   std::vector<Edge> hie_edges, std::vector<std::string> students = {},
                                   std::vector<Edge> student_edges = {});

  const std::vector<ConceptNode>& concepts() const { return concepts_; }
  const std::vector<QuestionNode>& questions() const { return questions_; }
  const std::vector<std::string>& students() const { return students_; }
  // (question index, concept index), in question order then concept order.
  const std::vector<Edge>& qc_edges() const { return qc_edges_; }
  // (lower-level concept index, higher-level concept index), sorted.
  const std::vector<Edge>& hie_edges() const { return hie_edges_; }
  // (student index, question index), sorted.
  const std::vector<Edge>& student_edges() const { return student_edges_; }

  std::optional<std::size_t> question_index(const std::string& id) const;
  std::optional<std::size_t> concept_index(const std::string& id) const;
  const ConceptNode& concept_by_id(const std::string& id) const;
  const QuestionNode& question_by_id(const std::string& id) const;
  double mean_concept_level(std::size_t question) const;

  // Adds student nodes linked to the questions they answered; unknown
  // question ids raise.
  void attach_students(const std::vector<std::pair<std::string, std::string>>& student_question);

 private:
  std::vector<QuestionNode> questions_;
  std::vector<ConceptNode> concepts_;
  std::vector<std::string> students_;
  std::vector<Edge> qc_edges_;
  std::vector<Edge> hie_edges_;
  std::vector<Edge> student_edges_;
  std::unordered_map<std::string, std::size_t> question_ix_;
  std::unordered_map<std::string, std::size_t> concept_ix_;

  void index_and_validate();
};

KnowledgeGraph build_graph(std::vector<QuestionNode> questions, std::vector<ConceptNode> concepts,
                           const std::vector<Dependency>& dependencies = {},
                           HierarchyPolicy policy = HierarchyPolicy::co_occurrence_or_explicit);

// ---- undirected views ---------------------------------------------------------

struct SimpleGraph {
  std::vector<std::string> nodes;
  std::vector<std::vector<std::size_t>> adjacency;

  std::size_t node_count() const { return nodes.size(); }
  std::size_t edge_count() const;
  std::size_t add_node(std::string id);
  // Ignores self loops and duplicates.
  void add_edge(std::size_t a, std::size_t b);
  bool has_edge(std::size_t a, std::size_t b) const;
};

struct GraphViews {
  SimpleGraph all;                // students + questions + concepts
  SimpleGraph question_concept;   // questions + concepts (qc and hierarchy edges)
  SimpleGraph question_question;  // questions sharing at least one concept
  SimpleGraph concept_concept;    // hierarchy edges, undirected
};

GraphViews graph_views(const KnowledgeGraph& g);

// ---- hyperbolicity ------------------------------------------------------------

enum class DeltaMode { automatic, exhaustive, sampled };

struct GromovOptions {
  std::size_t sample_size = 20000;
  std::uint64_t seed = 0;
  DeltaMode mode = DeltaMode::automatic;
  // automatic mode enumerates every quadruple up to this many nodes.
  std::size_t exhaustive_limit = 30;
};

struct GromovResult {
  double delta = 0.0;
  double diameter = 0.0;
  double normalized = 0.0;
  std::size_t nodes = 0;  // size of the component that was measured
  bool exhaustive = false;
};

// Four-point-condition delta over BFS distances of the largest connected
// component.
GromovResult gromov_delta(const SimpleGraph& g, const GromovOptions& options = {});

std::vector<std::vector<std::size_t>> connected_components(const SimpleGraph& g);
std::vector<int> bfs_distances(const SimpleGraph& g, std::size_t source);

// ---- JSON-lines ---------------------------------------------------------------
//
// One record per line. Nodes: {"kind":"concept","id","name","level"},
// {"kind":"question","id","name","difficulty"}, {"kind":"student","id"}.
// Edges: {"kind":"qc"|"hie"|"sq","src","dst"}. Nodes precede edges.

void write_graph(std::ostream& out, const KnowledgeGraph& g);
KnowledgeGraph read_graph(std::istream& in);
void save_graph(const std::string& path, const KnowledgeGraph& g);
KnowledgeGraph load_graph(const std::string& path);

}  // namespace hypkt::kgraph
