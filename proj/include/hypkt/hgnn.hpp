#pragma once

// Relation-aware multi-head graph attention over origin-chart hyperbolic
// embeddings, and the cross-space contrastive alignment loss.

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hypkt/diffcore.hpp"
#include "hypkt/kgraph.hpp"
#include "hypkt/manifold.hpp"

namespace hypkt::hgnn {

using diff::Tensor;

enum class EdgeType { question_concept = 0, concept_question = 1, concept_concept = 2, self_loop = 3 };
inline constexpr std::size_t kEdgeTypes = 4;

enum class NodeKind { question, knowledge };

// Directed message graph; an edge src -> dst carries a message into dst.
struct MessageGraph {
  std::vector<std::string> ids;
  std::vector<NodeKind> kinds;
  diff::Index src;
  diff::Index dst;
  std::vector<EdgeType> types;

  std::size_t node_count() const { return ids.size(); }
  std::size_t edge_count() const { return src.size(); }
  std::size_t add_node(std::string id, NodeKind kind);
  void add_edge(std::size_t from, std::size_t to, EdgeType type);
  void add_self_loops();
  // Throws when some node has no incoming edge.
  void validate() const;
  std::size_t index_of(NodeKind kind, const std::string& id) const;

  // Questions first, then concepts; q->c and c->q for incidence, both
  // directions for hierarchy edges, plus self loops.
  static MessageGraph from_knowledge_graph(const kgraph::KnowledgeGraph& g);
};

// (real index, synthetic index) pairs for entities present in both graphs,
// matched by kind and id, in real-graph order.
std::vector<std::pair<std::size_t, std::size_t>> shared_positives(const MessageGraph& real, const MessageGraph& syn);

struct EncoderConfig {
  std::size_t dim = 32;
  std::size_t layers = 2;
  std::size_t heads = 2;
  double dropout = 0.0;
  double leaky_slope = 0.2;
  double init_std = 0.02;
  // Ablation without hyperbolic geometry: origin maps become identities.
  bool euclidean = false;
};

struct EncodeResult {
  Tensor points;   // [N x (d+1)] on the manifold, or [N x d] in euclidean mode
  Tensor tangent;  // log_0(points), [N x d]
  // attention[layer][head]: [E x 1] weights, one per edge.
  std::vector<std::vector<Tensor>> attention;
};

class Encoder {
 public:
  Encoder(EncoderConfig config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }
  std::vector<Tensor> parameters() const;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;

  // Euclidean embedding table ~ Normal(0, init_std^2).
  Tensor init_table(std::size_t rows, std::mt19937_64& rng) const;

  // One attention layer applied to manifold points (or tangent rows in
  // euclidean mode). Dropout applies to the layer input in training mode.
  Tensor layer(const MessageGraph& g, const Tensor& points, const Tensor& kappa, std::size_t index,
               std::vector<Tensor>* attention = nullptr, std::mt19937_64* dropout_rng = nullptr) const;

  EncodeResult encode(const MessageGraph& g, const Tensor& table, const Tensor& theta,
                      std::mt19937_64* dropout_rng = nullptr) const;

 private:
  EncoderConfig config_;
  // Per layer, per head.
  std::vector<std::vector<Tensor>> w_;           // [d x d]
  std::vector<std::vector<Tensor>> att_dst_;     // [d x R], column r is the receiving half of a_r
  std::vector<std::vector<Tensor>> att_src_;     // [d x R], sending half
  std::vector<Tensor> mix_;                      // [H d x d]; undefined when H = 1
};

enum class Similarity { cosine, distance };

struct ContrastiveConfig {
  double tau = 0.2;
  std::size_t negatives = 16;
  Similarity similarity = Similarity::cosine;
};

// negatives[p] lists synthetic indices for positive p, drawn uniformly from
// the synthetic nodes other than the positive partner.
std::vector<diff::Index> sample_negatives(const std::vector<std::pair<std::size_t, std::size_t>>& positives,
                                          std::size_t syn_nodes, std::size_t per_positive, std::mt19937_64& rng);

// -sum_p log(pos / (pos + neg)) with pos = exp(sim(u,v)/tau) and neg the sum
// over the sampled negatives. Cosine similarity compares the origin tangent
// vectors; distance similarity is minus the hyperbolic distance after lifting
// both tangents into the real space.
Tensor contrastive_loss(const Tensor& real_tangent, const Tensor& syn_tangent,
                        const std::vector<std::pair<std::size_t, std::size_t>>& positives,
                        const std::vector<diff::Index>& negatives, const ContrastiveConfig& config,
                        const Tensor& kappa_real = Tensor());

// Row-wise cosine similarity of matched rows, [P x 1].
Tensor paired_cosine(const Tensor& a, const diff::Index& ia, const Tensor& b, const diff::Index& ib);

// Per-node JSON-lines {id, kind, curvature, coords}.
void write_embeddings(std::ostream& out, const MessageGraph& g, const Tensor& points, double curvature);

}  // namespace hypkt::hgnn
