#include "hypkt/kgraph.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include "hypkt/error.hpp"
#include "json.hpp"

namespace hypkt::kgraph {

using nlohmann::json;

// ---- KnowledgeGraph -----------------------------------------------------------

void KnowledgeGraph::index_and_validate() {
  question_ix_.clear();
  concept_ix_.clear();
  for (std::size_t i = 0; i < concepts_.size(); ++i) {
    const auto& c = concepts_[i];
    if (c.level < kMinLevel || c.level > kMaxLevel) {
      throw Error(Errc::invalid_argument, "concept " + c.id + " has level " + std::to_string(c.level) + " outside 1..4");
    }
    if (!concept_ix_.emplace(c.id, i).second) throw Error(Errc::invalid_argument, "duplicate concept id " + c.id);
  }
  std::vector<std::string> dangling;
  for (std::size_t i = 0; i < questions_.size(); ++i) {
    const auto& q = questions_[i];
    if (!question_ix_.emplace(q.id, i).second) throw Error(Errc::invalid_argument, "duplicate question id " + q.id);
    if (!(q.difficulty >= 0.0 && q.difficulty <= 1.0)) {
      throw Error(Errc::invalid_argument, "question " + q.id + " difficulty outside [0,1]");
    }
    if (q.concept_ids.empty()) throw Error(Errc::invalid_argument, "question " + q.id + " has no concepts");
    for (const auto& c : q.concept_ids) {
      if (!concept_ix_.count(c)) dangling.push_back(q.id + "->" + c);
    }
  }
  if (!dangling.empty()) {
    std::string list;
    for (const auto& d : dangling) list += (list.empty() ? "" : ", ") + d;
    throw Error(Errc::not_found, "unresolved concept references: " + list);
  }

  qc_edges_.clear();
  for (std::size_t qi = 0; qi < questions_.size(); ++qi) {
    std::set<std::size_t> seen;
    for (const auto& c : questions_[qi].concept_ids) {
      const std::size_t ci = concept_ix_.at(c);
      if (seen.insert(ci).second) qc_edges_.emplace_back(qi, ci);
    }
  }

  std::set<Edge> hie(hie_edges_.begin(), hie_edges_.end());
  if (hie.size() != hie_edges_.size()) throw Error(Errc::invalid_argument, "duplicate hierarchy edge");
  for (auto [a, b] : hie) {
    if (a >= concepts_.size() || b >= concepts_.size()) throw Error(Errc::not_found, "hierarchy edge out of range");
    if (concepts_[a].level >= concepts_[b].level) {
      throw Error(Errc::invalid_argument, "hierarchy edge " + concepts_[a].id + "->" + concepts_[b].id +
                                              " does not increase in level");
    }
  }
  hie_edges_.assign(hie.begin(), hie.end());

  std::set<Edge> sq(student_edges_.begin(), student_edges_.end());
  for (auto [s, q] : sq) {
    if (s >= students_.size() || q >= questions_.size()) throw Error(Errc::not_found, "student edge out of range");
  }
  student_edges_.assign(sq.begin(), sq.end());
  std::set<std::string> sids(students_.begin(), students_.end());
  if (sids.size() != students_.size()) throw Error(Errc::invalid_argument, "duplicate student id");
}

KnowledgeGraph KnowledgeGraph::from_parts(std::vector<QuestionNode> questions, std::vector<ConceptNode> concepts,
                                          std::vector<Edge> hie_edges, std::vector<std::string> students,
                                          std::vector<Edge> student_edges) {
  KnowledgeGraph g;
  g.questions_ = std::move(questions);
  g.concepts_ = std::move(concepts);
  g.hie_edges_ = std::move(hie_edges);
  g.students_ = std::move(students);
  g.student_edges_ = std::move(student_edges);
  g.index_and_validate();
  return g;
}

std::optional<std::size_t> KnowledgeGraph::question_index(const std::string& id) const {
  auto it = question_ix_.find(id);
  if (it == question_ix_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> KnowledgeGraph::concept_index(const std::string& id) const {
  auto it = concept_ix_.find(id);
  if (it == concept_ix_.end()) return std::nullopt;
  return it->second;
}

const ConceptNode& KnowledgeGraph::concept_by_id(const std::string& id) const {
  auto ix = concept_index(id);
  if (!ix) throw Error(Errc::not_found, "unknown concept id " + id);
  return concepts_[*ix];
}

const QuestionNode& KnowledgeGraph::question_by_id(const std::string& id) const {
  auto ix = question_index(id);
  if (!ix) throw Error(Errc::not_found, "unknown question id " + id);
  return questions_[*ix];
}

double KnowledgeGraph::mean_concept_level(std::size_t question) const {
  const auto& q = questions_.at(question);
  double total = 0.0;
  for (const auto& c : q.concept_ids) total += concepts_[concept_ix_.at(c)].level;
  return total / static_cast<double>(q.concept_ids.size());
}

void KnowledgeGraph::attach_students(const std::vector<std::pair<std::string, std::string>>& student_question) {
  std::unordered_map<std::string, std::size_t> six;
  for (std::size_t i = 0; i < students_.size(); ++i) six.emplace(students_[i], i);
  for (const auto& [s, q] : student_question) {
    auto qi = question_index(q);
    if (!qi) throw Error(Errc::not_found, "student " + s + " answered unknown question " + q);
    auto [it, fresh] = six.emplace(s, students_.size());
    if (fresh) students_.push_back(s);
    student_edges_.emplace_back(it->second, *qi);
  }
  std::set<Edge> sq(student_edges_.begin(), student_edges_.end());
  student_edges_.assign(sq.begin(), sq.end());
}

KnowledgeGraph build_graph(std::vector<QuestionNode> questions, std::vector<ConceptNode> concepts,
                           const std::vector<Dependency>& dependencies, HierarchyPolicy policy) {
  // Validate nodes first so that edge generation can index freely.
  KnowledgeGraph g = KnowledgeGraph::from_parts(std::move(questions), std::move(concepts), {});
  const auto& cs = g.concepts();
  std::set<Edge> hie;
  auto add_ordered = [&](std::size_t a, std::size_t b) {
    if (cs[a].level < cs[b].level) hie.emplace(a, b);
    else if (cs[b].level < cs[a].level) hie.emplace(b, a);
  };
  if (policy == HierarchyPolicy::level_complete) {
    for (std::size_t a = 0; a < cs.size(); ++a)
      for (std::size_t b = 0; b < cs.size(); ++b)
        if (cs[a].level < cs[b].level) hie.emplace(a, b);
  }
  if (policy == HierarchyPolicy::co_occurrence_or_explicit) {
    for (const auto& q : g.questions()) {
      for (std::size_t i = 0; i < q.concept_ids.size(); ++i)
        for (std::size_t j = i + 1; j < q.concept_ids.size(); ++j)
          add_ordered(*g.concept_index(q.concept_ids[i]), *g.concept_index(q.concept_ids[j]));
    }
  }
  if (policy != HierarchyPolicy::level_complete) {
    for (const auto& d : dependencies) {
      auto a = g.concept_index(d.parent);
      auto b = g.concept_index(d.child);
      if (!a || !b) throw Error(Errc::not_found, "dependency references unknown concept " + (a ? d.child : d.parent));
      if (cs[*a].level >= cs[*b].level) {
        throw Error(Errc::invalid_argument, "dependency " + d.parent + "->" + d.child + " does not increase in level");
      }
      hie.emplace(*a, *b);
    }
  }
  return KnowledgeGraph::from_parts(g.questions(), g.concepts(), std::vector<Edge>(hie.begin(), hie.end()));
}

// ---- views ----------------------------------------------------------------------

std::size_t SimpleGraph::edge_count() const {
  std::size_t total = 0;
  for (const auto& a : adjacency) total += a.size();
  return total / 2;
}

std::size_t SimpleGraph::add_node(std::string id) {
  nodes.push_back(std::move(id));
  adjacency.emplace_back();
  return nodes.size() - 1;
}

bool SimpleGraph::has_edge(std::size_t a, std::size_t b) const {
  const auto& adj = adjacency.at(a);
  return std::find(adj.begin(), adj.end(), b) != adj.end();
}

void SimpleGraph::add_edge(std::size_t a, std::size_t b) {
  if (a == b || has_edge(a, b)) return;
  adjacency.at(a).push_back(b);
  adjacency.at(b).push_back(a);
}

GraphViews graph_views(const KnowledgeGraph& g) {
  GraphViews v;
  const std::size_t nq = g.questions().size();
  const std::size_t nc = g.concepts().size();

  auto fill_question_concept = [&](SimpleGraph& s, std::size_t q_offset) {
    const std::size_t c_offset = q_offset + nq;
    for (const auto& q : g.questions()) s.add_node(q.id);
    for (const auto& c : g.concepts()) s.add_node(c.id);
    for (auto [q, c] : g.qc_edges()) s.add_edge(q_offset + q, c_offset + c);
    for (auto [a, b] : g.hie_edges()) s.add_edge(c_offset + a, c_offset + b);
  };

  for (const auto& s : g.students()) v.all.add_node(s);
  fill_question_concept(v.all, g.students().size());
  for (auto [s, q] : g.student_edges()) v.all.add_edge(s, g.students().size() + q);

  fill_question_concept(v.question_concept, 0);

  for (const auto& q : g.questions()) v.question_question.add_node(q.id);
  std::vector<std::vector<std::size_t>> by_concept(nc);
  for (auto [q, c] : g.qc_edges()) by_concept[c].push_back(q);
  for (const auto& qs : by_concept)
    for (std::size_t i = 0; i < qs.size(); ++i)
      for (std::size_t j = i + 1; j < qs.size(); ++j) v.question_question.add_edge(qs[i], qs[j]);

  for (const auto& c : g.concepts()) v.concept_concept.add_node(c.id);
  for (auto [a, b] : g.hie_edges()) v.concept_concept.add_edge(a, b);
  return v;
}

// ---- hyperbolicity ------------------------------------------------------------

std::vector<int> bfs_distances(const SimpleGraph& g, std::size_t source) {
  std::vector<int> dist(g.node_count(), -1);
  std::queue<std::size_t> frontier;
  dist[source] = 0;
  frontier.push(source);
  while (!frontier.empty()) {
    const std::size_t u = frontier.front();
    frontier.pop();
    for (std::size_t w : g.adjacency[u]) {
      if (dist[w] < 0) {
        dist[w] = dist[u] + 1;
        frontier.push(w);
      }
    }
  }
  return dist;
}

std::vector<std::vector<std::size_t>> connected_components(const SimpleGraph& g) {
  std::vector<std::vector<std::size_t>> comps;
  std::vector<bool> seen(g.node_count(), false);
  for (std::size_t s = 0; s < g.node_count(); ++s) {
    if (seen[s]) continue;
    std::vector<std::size_t> comp;
    std::queue<std::size_t> frontier;
    frontier.push(s);
    seen[s] = true;
    while (!frontier.empty()) {
      const std::size_t u = frontier.front();
      frontier.pop();
      comp.push_back(u);
      for (std::size_t w : g.adjacency[u]) {
        if (!seen[w]) {
          seen[w] = true;
          frontier.push(w);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    comps.push_back(std::move(comp));
  }
  return comps;
}

namespace {

SimpleGraph induced(const SimpleGraph& g, const std::vector<std::size_t>& keep) {
  SimpleGraph out;
  std::vector<std::size_t> remap(g.node_count(), static_cast<std::size_t>(-1));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    remap[keep[i]] = i;
    out.add_node(g.nodes[keep[i]]);
  }
  for (std::size_t i = 0; i < keep.size(); ++i)
    for (std::size_t w : g.adjacency[keep[i]])
      if (remap[w] != static_cast<std::size_t>(-1) && i < remap[w]) out.add_edge(i, remap[w]);
  return out;
}

double four_point(int ab, int cd, int ac, int bd, int ad, int bc) {
  int s[3] = {ab + cd, ac + bd, ad + bc};
  std::sort(s, s + 3);
  return (s[2] - s[1]) / 2.0;
}

}  // namespace

GromovResult gromov_delta(const SimpleGraph& g, const GromovOptions& options) {
  if (g.node_count() < 4) throw Error(Errc::invalid_argument, "gromov_delta: need at least 4 nodes");
  auto comps = connected_components(g);
  const auto largest = std::max_element(comps.begin(), comps.end(), [](const auto& a, const auto& b) {
    return a.size() < b.size();
  });
  const SimpleGraph lcc = comps.size() == 1 ? g : induced(g, *largest);
  const std::size_t n = lcc.node_count();
  if (n < 4) throw Error(Errc::invalid_argument, "gromov_delta: largest component has fewer than 4 nodes");

  GromovResult result;
  result.nodes = n;
  result.exhaustive = options.mode == DeltaMode::exhaustive ||
                      (options.mode == DeltaMode::automatic && n <= options.exhaustive_limit);

  // Rows are cached lazily; graphs here are desk-scale.
  std::vector<std::vector<int>> rows(n);
  auto row = [&](std::size_t u) -> const std::vector<int>& {
    if (rows[u].empty()) rows[u] = bfs_distances(lcc, u);
    return rows[u];
  };

  double delta = 0.0;
  if (result.exhaustive) {
    for (std::size_t a = 0; a < n; ++a) {
      const auto& da = row(a);
      for (std::size_t b = a + 1; b < n; ++b) {
        const auto& db = row(b);
        for (std::size_t c = b + 1; c < n; ++c) {
          const auto& dc = row(c);
          for (std::size_t d = c + 1; d < n; ++d) {
            delta = std::max(delta, four_point(da[b], dc[d], da[c], db[d], da[d], db[c]));
          }
        }
      }
    }
  } else {
    std::mt19937_64 rng(options.seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t s = 0; s < options.sample_size; ++s) {
      std::size_t q[4];
      for (int i = 0; i < 4; ++i) {
        bool fresh = false;
        while (!fresh) {
          q[i] = pick(rng);
          fresh = std::find(q, q + i, q[i]) == q + i;
        }
      }
      const auto& da = row(q[0]);
      const auto& db = row(q[1]);
      const auto& dc = row(q[2]);
      delta = std::max(delta, four_point(da[q[1]], dc[q[3]], da[q[2]], db[q[3]], da[q[3]], db[q[2]]));
    }
  }

  int diameter = 0;
  for (std::size_t u = 0; u < n; ++u) {
    const auto& r = rows[u].empty() ? bfs_distances(lcc, u) : rows[u];
    diameter = std::max(diameter, *std::max_element(r.begin(), r.end()));
  }
  result.delta = delta;
  result.diameter = diameter;
  result.normalized = diameter > 0 ? delta / diameter : 0.0;
  return result;
}

// ---- JSON-lines ---------------------------------------------------------------

void write_graph(std::ostream& out, const KnowledgeGraph& g) {
  for (const auto& c : g.concepts()) {
    out << json{{"kind", "concept"}, {"id", c.id}, {"name", c.name}, {"level", c.level}}.dump() << '\n';
  }
  for (const auto& q : g.questions()) {
    out << json{{"kind", "question"}, {"id", q.id}, {"name", q.text}, {"difficulty", q.difficulty}}.dump() << '\n';
  }
  for (const auto& s : g.students()) out << json{{"kind", "student"}, {"id", s}}.dump() << '\n';
  auto edge = [&](const char* kind, const std::string& a, const std::string& b) {
    out << json{{"kind", kind}, {"src", a}, {"dst", b}}.dump() << '\n';
  };
  for (auto [q, c] : g.qc_edges()) edge("qc", g.questions()[q].id, g.concepts()[c].id);
  for (auto [a, b] : g.hie_edges()) edge("hie", g.concepts()[a].id, g.concepts()[b].id);
  for (auto [s, q] : g.student_edges()) edge("sq", g.students()[s], g.questions()[q].id);
}

KnowledgeGraph read_graph(std::istream& in) {
  std::vector<QuestionNode> questions;
  std::vector<ConceptNode> concepts;
  std::vector<std::string> students;
  std::vector<std::pair<std::string, std::string>> qc, hie, sq;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json rec = json::parse(line);
      const std::string kind = rec.at("kind").get<std::string>();
      if (kind == "concept") {
        concepts.push_back({rec.at("id").get<std::string>(), rec.value("name", ""), rec.at("level").get<int>()});
      } else if (kind == "question") {
        questions.push_back({rec.at("id").get<std::string>(), rec.value("name", ""),
                             rec.at("difficulty").get<double>(), {}});
      } else if (kind == "student") {
        students.push_back(rec.at("id").get<std::string>());
      } else if (kind == "qc" || kind == "hie" || kind == "sq") {
        auto& bucket = kind == "qc" ? qc : (kind == "hie" ? hie : sq);
        bucket.emplace_back(rec.at("src").get<std::string>(), rec.at("dst").get<std::string>());
      } else {
        throw Error(Errc::parse_error, "unknown record kind '" + kind + "'");
      }
    } catch (const json::exception& e) {
      throw Error(Errc::parse_error, "graph line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  std::unordered_map<std::string, std::size_t> qix, cix, six;
  for (std::size_t i = 0; i < questions.size(); ++i) qix.emplace(questions[i].id, i);
  for (std::size_t i = 0; i < concepts.size(); ++i) cix.emplace(concepts[i].id, i);
  for (std::size_t i = 0; i < students.size(); ++i) six.emplace(students[i], i);
  auto lookup = [](const auto& ix, const std::string& id, const char* what) {
    auto it = ix.find(id);
    if (it == ix.end()) throw Error(Errc::not_found, std::string("graph edge references unknown ") + what + " " + id);
    return it->second;
  };
  for (const auto& [q, c] : qc) {
    lookup(cix, c, "concept");
    questions[lookup(qix, q, "question")].concept_ids.push_back(c);
  }
  std::vector<Edge> hie_edges, sq_edges;
  for (const auto& [a, b] : hie) hie_edges.emplace_back(lookup(cix, a, "concept"), lookup(cix, b, "concept"));
  for (const auto& [s, q] : sq) sq_edges.emplace_back(lookup(six, s, "student"), lookup(qix, q, "question"));
  return KnowledgeGraph::from_parts(std::move(questions), std::move(concepts), std::move(hie_edges),
                                    std::move(students), std::move(sq_edges));
}

void save_graph(const std::string& path, const KnowledgeGraph& g) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io_error, "cannot write graph file " + path);
  write_graph(out, g);
}

KnowledgeGraph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot read graph file " + path);
  return read_graph(in);
}

}  // namespace hypkt::kgraph
