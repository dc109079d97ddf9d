#include "hypkt/hgnn.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include "hypkt/error.hpp"
#include "json.hpp"

namespace hypkt::hgnn {

namespace {

Tensor glorot(std::mt19937_64& rng, std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  std::vector<double> v(fan_in * fan_out);
  for (double& x : v) x = u(rng);
  return Tensor::from({fan_in, fan_out}, std::move(v), true);
}

const char* kind_name(NodeKind k) { return k == NodeKind::question ? "question" : "concept"; }

}  // namespace

// ---- message graph ----------------------------------------------------------------

std::size_t MessageGraph::add_node(std::string id, NodeKind kind) {
  ids.push_back(std::move(id));
  kinds.push_back(kind);
  return ids.size() - 1;
}

void MessageGraph::add_edge(std::size_t from, std::size_t to, EdgeType type) {
  if (from >= node_count() || to >= node_count()) throw Error(Errc::not_found, "message edge endpoint out of range");
  src.push_back(from);
  dst.push_back(to);
  types.push_back(type);
}

void MessageGraph::add_self_loops() {
  for (std::size_t i = 0; i < node_count(); ++i) add_edge(i, i, EdgeType::self_loop);
}

void MessageGraph::validate() const {
  std::vector<bool> has_in(node_count(), false);
  for (std::size_t d : dst) has_in[d] = true;
  for (std::size_t i = 0; i < node_count(); ++i) {
    if (!has_in[i]) throw Error(Errc::invalid_argument, "node " + ids[i] + " has no incoming edge (missing self loop)");
  }
}

std::size_t MessageGraph::index_of(NodeKind kind, const std::string& id) const {
  for (std::size_t i = 0; i < node_count(); ++i)
    if (kinds[i] == kind && ids[i] == id) return i;
  throw Error(Errc::not_found, std::string("no ") + kind_name(kind) + " node " + id);
}

MessageGraph MessageGraph::from_knowledge_graph(const kgraph::KnowledgeGraph& g) {
  MessageGraph m;
  const std::size_t nq = g.questions().size();
  for (const auto& q : g.questions()) m.add_node(q.id, NodeKind::question);
  for (const auto& c : g.concepts()) m.add_node(c.id, NodeKind::knowledge);
  for (auto [q, c] : g.qc_edges()) {
    m.add_edge(q, nq + c, EdgeType::question_concept);
    m.add_edge(nq + c, q, EdgeType::concept_question);
  }
  for (auto [a, b] : g.hie_edges()) {
    m.add_edge(nq + a, nq + b, EdgeType::concept_concept);
    m.add_edge(nq + b, nq + a, EdgeType::concept_concept);
  }
  m.add_self_loops();
  return m;
}

std::vector<std::pair<std::size_t, std::size_t>> shared_positives(const MessageGraph& real, const MessageGraph& syn) {
  std::map<std::pair<NodeKind, std::string>, std::size_t> syn_ix;
  for (std::size_t i = 0; i < syn.node_count(); ++i) syn_ix.emplace(std::make_pair(syn.kinds[i], syn.ids[i]), i);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < real.node_count(); ++i) {
    auto it = syn_ix.find({real.kinds[i], real.ids[i]});
    if (it != syn_ix.end()) out.emplace_back(i, it->second);
  }
  return out;
}

// ---- encoder --------------------------------------------------------------------

Encoder::Encoder(EncoderConfig config, std::uint64_t seed) : config_(config) {
  if (config_.layers < 1) throw Error(Errc::invalid_argument, "encoder needs at least one layer");
  if (config_.heads < 1) throw Error(Errc::invalid_argument, "encoder needs at least one head");
  if (config_.dim < 1) throw Error(Errc::invalid_argument, "encoder dimension must be positive");
  if (!(config_.dropout >= 0.0 && config_.dropout < 1.0)) throw Error(Errc::invalid_argument, "dropout outside [0,1)");
  std::mt19937_64 rng(seed);
  const std::size_t d = config_.dim, h = config_.heads;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    w_.emplace_back();
    att_dst_.emplace_back();
    att_src_.emplace_back();
    for (std::size_t k = 0; k < h; ++k) {
      w_[l].push_back(glorot(rng, d, d));
      att_dst_[l].push_back(Tensor::zeros({d, kEdgeTypes}, true));
      att_src_[l].push_back(Tensor::zeros({d, kEdgeTypes}, true));
    }
    mix_.push_back(h > 1 ? glorot(rng, h * d, d) : Tensor());
  }
}

std::vector<std::pair<std::string, Tensor>> Encoder::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    for (std::size_t k = 0; k < w_[l].size(); ++k) {
      const std::string tag = ".l" + std::to_string(l) + ".h" + std::to_string(k);
      out.emplace_back("enc.w" + tag, w_[l][k]);
      out.emplace_back("enc.att_dst" + tag, att_dst_[l][k]);
      out.emplace_back("enc.att_src" + tag, att_src_[l][k]);
    }
    if (mix_[l]) out.emplace_back("enc.mix.l" + std::to_string(l), mix_[l]);
  }
  return out;
}

std::vector<Tensor> Encoder::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

Tensor Encoder::init_table(std::size_t rows, std::mt19937_64& rng) const {
  std::normal_distribution<double> nd(0.0, config_.init_std);
  std::vector<double> v(rows * config_.dim);
  for (double& x : v) x = nd(rng);
  return Tensor::from({rows, config_.dim}, std::move(v), true);
}

Tensor Encoder::layer(const MessageGraph& g, const Tensor& points, const Tensor& kappa, std::size_t index,
                      std::vector<Tensor>* attention, std::mt19937_64* dropout_rng) const {
  if (index >= w_.size()) throw Error(Errc::invalid_argument, "layer index out of range");
  if (points.rank() != 2 || points.extent(0) != g.node_count()) {
    throw Error(Errc::shape_mismatch, "layer input rows differ from the graph's node count");
  }
  g.validate();
  const std::size_t n = g.node_count(), e = g.edge_count(), d = config_.dim;
  const manifold::OriginChart chart(kappa, config_.euclidean);
  Tensor t = chart.log0(points);
  if (t.extent(1) != d) throw Error(Errc::shape_mismatch, "layer input dimension differs from encoder dim");
  if (dropout_rng && config_.dropout > 0.0) {
    std::bernoulli_distribution keep(1.0 - config_.dropout);
    std::vector<double> mask(n * d);
    for (double& m : mask) m = keep(*dropout_rng) ? 1.0 / (1.0 - config_.dropout) : 0.0;
    t = t * Tensor::from({n, d}, std::move(mask));
  }
  std::vector<double> onehot(e * kEdgeTypes, 0.0);
  for (std::size_t i = 0; i < e; ++i) onehot[i * kEdgeTypes + static_cast<std::size_t>(g.types[i])] = 1.0;
  const Tensor type_mask = Tensor::from({e, kEdgeTypes}, std::move(onehot));

  std::vector<Tensor> heads;
  for (std::size_t k = 0; k < w_[index].size(); ++k) {
    const Tensor z = diff::matmul(t, w_[index][k]);
    const Tensor to_dst = diff::gather_rows(diff::matmul(z, att_dst_[index][k]), g.dst);
    const Tensor to_src = diff::gather_rows(diff::matmul(z, att_src_[index][k]), g.src);
    const Tensor score = diff::leaky_relu(diff::sum((to_dst + to_src) * type_mask, 1), config_.leaky_slope);
    const Tensor alpha = diff::segment_softmax(score, g.dst, n);
    if (attention) attention->push_back(alpha);
    heads.push_back(diff::scatter_add_rows(diff::gather_rows(z, g.src) * alpha, g.dst, n));
  }
  Tensor agg = heads.size() == 1 ? heads[0] : diff::matmul(diff::concat(heads, 1), mix_[index]);
  return chart.exp0(diff::leaky_relu(agg, config_.leaky_slope));
}

EncodeResult Encoder::encode(const MessageGraph& g, const Tensor& table, const Tensor& theta,
                             std::mt19937_64* dropout_rng) const {
  if (table.rank() != 2 || table.extent(0) != g.node_count() || table.extent(1) != config_.dim) {
    throw Error(Errc::shape_mismatch, "embedding table must be [nodes x dim]");
  }
  const Tensor kappa = config_.euclidean ? Tensor::scalar(-1.0) : manifold::curvature_value(theta);
  const manifold::OriginChart chart(kappa, config_.euclidean);
  EncodeResult out;
  Tensor h = chart.exp0(table);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    out.attention.emplace_back();
    h = layer(g, h, kappa, l, &out.attention.back(), dropout_rng);
  }
  out.points = h;
  out.tangent = chart.log0(h);
  return out;
}

// ---- contrastive loss ---------------------------------------------------------------

std::vector<diff::Index> sample_negatives(const std::vector<std::pair<std::size_t, std::size_t>>& positives,
                                          std::size_t syn_nodes, std::size_t per_positive, std::mt19937_64& rng) {
  if (per_positive == 0) throw Error(Errc::invalid_argument, "negatives per positive must be at least 1");
  if (syn_nodes < 2) throw Error(Errc::invalid_argument, "negative sampling needs at least 2 synthetic nodes");
  std::vector<diff::Index> out;
  out.reserve(positives.size());
  for (const auto& [u, v] : positives) {
    if (v >= syn_nodes) throw Error(Errc::not_found, "positive partner outside the synthetic graph");
    diff::Index negs;
    for (std::size_t k = 0; k < per_positive; ++k) {
      // Uniform over the other syn_nodes - 1 nodes.
      std::size_t pick = static_cast<std::size_t>(rng() % (syn_nodes - 1));
      if (pick >= v) ++pick;
      negs.push_back(pick);
    }
    out.push_back(std::move(negs));
  }
  return out;
}

namespace {

Tensor row_normalize(const Tensor& t) { return t / diff::sqrt(diff::sum(diff::square(t), 1) + 1e-12); }

}  // namespace

Tensor paired_cosine(const Tensor& a, const diff::Index& ia, const Tensor& b, const diff::Index& ib) {
  return diff::sum(diff::gather_rows(row_normalize(a), ia) * diff::gather_rows(row_normalize(b), ib), 1);
}

Tensor contrastive_loss(const Tensor& real_tangent, const Tensor& syn_tangent,
                        const std::vector<std::pair<std::size_t, std::size_t>>& positives,
                        const std::vector<diff::Index>& negatives, const ContrastiveConfig& config,
                        const Tensor& kappa_real) {
  if (!(config.tau > 0.0)) throw Error(Errc::invalid_argument, "temperature must be positive");
  if (positives.empty()) throw Error(Errc::invalid_argument, "contrastive loss needs at least one positive pair");
  if (negatives.size() != positives.size()) throw Error(Errc::shape_mismatch, "one negative list per positive required");
  if (real_tangent.extent(1) != syn_tangent.extent(1)) {
    throw Error(Errc::shape_mismatch, "real and synthetic embeddings differ in dimension");
  }
  const std::size_t p = positives.size();
  diff::Index pu, pv, nu, nv, seg;
  for (std::size_t i = 0; i < p; ++i) {
    pu.push_back(positives[i].first);
    pv.push_back(positives[i].second);
    if (negatives[i].empty()) throw Error(Errc::invalid_argument, "empty negative list");
    for (std::size_t v : negatives[i]) {
      nu.push_back(positives[i].first);
      nv.push_back(v);
      seg.push_back(i);
    }
  }
  for (std::size_t u : pu)
    if (u >= real_tangent.extent(0)) throw Error(Errc::not_found, "positive index outside the real embeddings");
  for (std::size_t v : nv)
    if (v >= syn_tangent.extent(0)) throw Error(Errc::not_found, "negative index outside the synthetic embeddings");

  auto similarity = [&](const diff::Index& ia, const diff::Index& ib) {
    if (config.similarity == Similarity::cosine) return paired_cosine(real_tangent, ia, syn_tangent, ib);
    if (!kappa_real) throw Error(Errc::invalid_argument, "distance similarity needs the real curvature");
    const Tensor x = manifold::expmap0(diff::gather_rows(real_tangent, ia), kappa_real);
    const Tensor y = manifold::expmap0(diff::gather_rows(syn_tangent, ib), kappa_real);
    return -manifold::distance(x, y, kappa_real);
  };
  const Tensor pos_logit = similarity(pu, pv) / config.tau;
  const Tensor neg = diff::scatter_add_rows(diff::exp(similarity(nu, nv) / config.tau), seg, p);
  return diff::sum(diff::log(diff::exp(pos_logit) + neg) - pos_logit);
}

void write_embeddings(std::ostream& out, const MessageGraph& g, const Tensor& points, double curvature) {
  if (points.rank() != 2 || points.extent(0) != g.node_count()) {
    throw Error(Errc::shape_mismatch, "embedding rows differ from the graph's node count");
  }
  const std::size_t m = points.extent(1);
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    std::vector<double> coords(points.data().begin() + i * m, points.data().begin() + (i + 1) * m);
    out << nlohmann::json{{"id", g.ids[i]}, {"kind", kind_name(g.kinds[i])}, {"curvature", curvature}, {"coords", coords}}
               .dump()
        << '\n';
  }
}

}  // namespace hypkt::hgnn
