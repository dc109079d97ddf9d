#pragma once

// Small graphs shared by unit and acceptance tests.

#include <random>

#include "hypkt/hgnn.hpp"
#include "hypkt/interactions.hpp"
#include "hypkt/kgraph.hpp"
#include "hypkt/optim.hpp"

namespace hypkt::testing {

// 4 questions + 6 concepts on each side; the synthetic side links the same
// entities through different questions-to-concept assignments.
inline std::pair<kgraph::KnowledgeGraph, kgraph::KnowledgeGraph> toy_pair() {
  std::vector<kgraph::ConceptNode> concepts{{"c1", "c1", 1}, {"c2", "c2", 1}, {"c3", "c3", 2},
                                            {"c4", "c4", 3}, {"c5", "c5", 3}, {"c6", "c6", 4}};
  std::vector<kgraph::QuestionNode> real{{"q1", "", 0.25, {"c1", "c3"}},
                                         {"q2", "", 0.5, {"c3", "c4"}},
                                         {"q3", "", 0.75, {"c2", "c5", "c6"}},
                                         {"q4", "", 1.0, {"c6"}}};
  std::vector<kgraph::QuestionNode> syn{{"q1", "", 0.25, {"c1"}},
                                        {"q2", "", 0.5, {"c2", "c3", "c4"}},
                                        {"q3", "", 0.75, {"c5", "c6"}},
                                        {"q4", "", 1.0, {"c4", "c6"}}};
  return {kgraph::build_graph(real, concepts), kgraph::build_graph(syn, concepts, {{"c3", "c5"}})};
}

struct AlignmentOutcome {
  double initial = 0.0;  // mean (1 - cos) over positive pairs
  double final = 0.0;
};

// Optimizes only the contrastive loss on the toy pair with plain SGD.
inline AlignmentOutcome run_alignment(std::uint64_t seed, std::size_t steps, double lr, std::size_t dim = 16) {
  const auto [real_kg, syn_kg] = toy_pair();
  const auto real = hgnn::MessageGraph::from_knowledge_graph(real_kg);
  const auto syn = hgnn::MessageGraph::from_knowledge_graph(syn_kg);
  hgnn::EncoderConfig cfg;
  cfg.dim = dim;
  hgnn::Encoder enc(cfg, seed);
  std::mt19937_64 rng(seed);
  const auto table_r = enc.init_table(real.node_count(), rng);
  const auto table_s = enc.init_table(syn.node_count(), rng);
  const auto theta_r = diff::Tensor::scalar(manifold::Curvature::from_value(-1.0).theta(), true);
  const auto theta_s = diff::Tensor::scalar(manifold::Curvature::from_value(-1.0).theta(), true);
  const auto positives = hgnn::shared_positives(real, syn);
  diff::Index pu, pv;
  for (auto [u, v] : positives) {
    pu.push_back(u);
    pv.push_back(v);
  }
  auto params = enc.parameters();
  for (const auto& t : {table_r, table_s, theta_r, theta_s}) params.push_back(t);
  diff::Sgd opt(params, lr, 5.0);
  hgnn::ContrastiveConfig con;
  auto gap = [&] {
    const auto r = enc.encode(real, table_r, theta_r).tangent;
    const auto s = enc.encode(syn, table_s, theta_s).tangent;
    return 1.0 - diff::mean(hgnn::paired_cosine(r, pu, s, pv)).item();
  };
  AlignmentOutcome out;
  out.initial = gap();
  for (std::size_t step = 0; step < steps; ++step) {
    const auto negs = hgnn::sample_negatives(positives, syn.node_count(), con.negatives, rng);
    const auto r = enc.encode(real, table_r, theta_r).tangent;
    const auto s = enc.encode(syn, table_s, theta_s).tangent;
    opt.zero_grad();
    diff::backward(hgnn::contrastive_loss(r, s, positives, negs, con));
    opt.step();
  }
  out.final = gap();
  return out;
}

// Alternating strong/weak students answering random questions of `g`; the
// strong ones succeed with probability 0.9 - 0.2 * difficulty, the weak ones
// with 0.3 - 0.2 * difficulty.
inline std::vector<toolkit::StudentSequence> toy_sequences(const kgraph::KnowledgeGraph& g, std::size_t students,
                                                           std::size_t steps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<toolkit::StudentSequence> out;
  for (std::size_t s = 0; s < students; ++s) {
    toolkit::StudentSequence seq{"s" + std::to_string(s), {}};
    const double base = s % 2 == 0 ? 0.9 : 0.3;
    for (std::size_t t = 0; t < steps; ++t) {
      const auto& q = g.questions()[rng() % g.questions().size()];
      const int correct = u(rng) < base - 0.2 * q.difficulty ? 1 : 0;
      seq.interactions.push_back({seq.student_id, q.id, q.concept_ids, correct, static_cast<std::int64_t>(t)});
    }
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace hypkt::testing
