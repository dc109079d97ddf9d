#include "hypkt/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "hypkt/error.hpp"
#include "hypkt/hashing.hpp"
#include "hypkt/metrics.hpp"
#include "hypkt/optim.hpp"
#include "json.hpp"

namespace hypkt::tracker {

using nlohmann::json;

namespace {

constexpr double kProbFloor = 1e-7;

Tensor glorot(std::mt19937_64& rng, std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  std::vector<double> v(fan_in * fan_out);
  for (double& x : v) x = u(rng);
  return Tensor::from({fan_in, fan_out}, std::move(v), true);
}

void require_rows(const Tensor& t, std::size_t rows, std::size_t cols, const char* what) {
  if (t.rank() != 2 || t.extent(0) != rows || t.extent(1) != cols) {
    throw Error(Errc::shape_mismatch, std::string(what) + ": expected [" + std::to_string(rows) + "x" +
                                          std::to_string(cols) + "], got " + diff::shape_str(t.shape()));
  }
}

Tensor column(const std::vector<double>& v) { return Tensor::from({v.size(), 1}, v); }

double safe_auc(const std::vector<double>& s, const std::vector<int>& y) {
  const bool pos = std::find(y.begin(), y.end(), 1) != y.end();
  const bool neg = std::find(y.begin(), y.end(), 0) != y.end();
  if (!pos || !neg) return std::nan("");
  return toolkit::auc(s, y);
}

const char* similarity_name(hgnn::Similarity s) { return s == hgnn::Similarity::cosine ? "cosine" : "distance"; }

}  // namespace

Mode parse_mode(const std::string& s) {
  if (s == "full") return Mode::full;
  if (s == "no-hyp") return Mode::no_hyp;
  if (s == "no-con") return Mode::no_con;
  throw Error(Errc::invalid_argument, "unknown mode '" + s + "' (expected full, no-hyp or no-con)");
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::full: return "full";
    case Mode::no_hyp: return "no-hyp";
    case Mode::no_con: return "no-con";
  }
  return "full";
}

// ---- cell ---------------------------------------------------------------------------

TrackerParams TrackerParams::init(std::size_t dim, std::mt19937_64& rng) {
  if (dim < 1) throw Error(Errc::invalid_argument, "tracker dimension must be positive");
  TrackerParams p;
  p.fuse_w = glorot(rng, dim + 2, dim);
  p.fuse_b = Tensor::zeros({1, dim}, true);
  p.gate_wd = glorot(rng, 1, dim);
  p.gate_wl = glorot(rng, 1, dim);
  p.gate_b = Tensor::zeros({1, dim}, true);
  p.gru_wx = glorot(rng, dim, 3 * dim);
  p.gru_uh = glorot(rng, dim, 3 * dim);
  p.gru_b = Tensor::zeros({1, 3 * dim}, true);
  p.head_w = glorot(rng, 2 * dim, 1);
  p.head_b = Tensor::zeros({1}, true);
  return p;
}

std::vector<std::pair<std::string, Tensor>> TrackerParams::named() const {
  return {{"kt.fuse_w", fuse_w}, {"kt.fuse_b", fuse_b}, {"kt.gate_wd", gate_wd}, {"kt.gate_wl", gate_wl},
          {"kt.gate_b", gate_b}, {"kt.gru_wx", gru_wx}, {"kt.gru_uh", gru_uh}, {"kt.gru_b", gru_b},
          {"kt.head_w", head_w}, {"kt.head_b", head_b}};
}

Tensor fuse_input(const Tensor& tangent, const std::vector<int>& responses, const TrackerParams& p) {
  const std::size_t d = p.dim();
  require_rows(tangent, responses.size(), d, "fuse_input");
  std::vector<double> onehot(2 * responses.size());
  for (std::size_t i = 0; i < responses.size(); ++i) {
    if (responses[i] != 0 && responses[i] != 1) throw Error(Errc::invalid_argument, "response must be 0 or 1");
    onehot[2 * i + (responses[i] == 1 ? 0 : 1)] = 1.0;
  }
  const Tensor in = diff::concat({tangent, Tensor::from({responses.size(), 2}, std::move(onehot))}, 1);
  return diff::tanh(diff::matmul(in, p.fuse_w) + p.fuse_b);
}

Tensor difficulty_gate(const Tensor& q_diff, const Tensor& level_mean, const TrackerParams& p) {
  require_rows(level_mean, q_diff.extent(0), 1, "difficulty_gate level");
  require_rows(q_diff, level_mean.extent(0), 1, "difficulty_gate difficulty");
  return diff::sigmoid(q_diff * p.gate_wd + level_mean * p.gate_wl + p.gate_b);
}

Tensor hgru_step(const Tensor& x, const Tensor& h_prev, const Tensor& gate, const TrackerParams& p) {
  const std::size_t d = p.dim(), b = h_prev.extent(0);
  require_rows(x, b, d, "hgru_step input");
  require_rows(h_prev, b, d, "hgru_step state");
  require_rows(gate, b, d, "hgru_step gate");
  const Tensor gx = diff::matmul(x, p.gru_wx);
  const Tensor gh = diff::matmul(h_prev, p.gru_uh);
  auto part = [&](const Tensor& t, std::size_t k) { return diff::slice(t, 1, k * d, d); };
  const Tensor z = diff::sigmoid(part(gx, 0) + part(gh, 0) + part(p.gru_b, 0));
  const Tensor r = diff::sigmoid(part(gx, 1) + part(gh, 1) + part(p.gru_b, 1));
  const Tensor n = diff::tanh(part(gx, 2) + r * part(gh, 2) + part(p.gru_b, 2));
  const Tensor zd = z * gate;
  return (1.0 - zd) * h_prev + zd * n;
}

Tensor predict(const Tensor& hidden, const Tensor& question_tangent, const TrackerParams& p) {
  require_rows(question_tangent, hidden.extent(0), p.dim(), "predict question");
  require_rows(hidden, question_tangent.extent(0), p.dim(), "predict state");
  return diff::sigmoid(diff::matmul(diff::concat({hidden, question_tangent}, 1), p.head_w) + p.head_b);
}

Tensor mastery(const Tensor& hidden, const Tensor& concept_tangents) {
  if (hidden.rank() != 2 || concept_tangents.rank() != 2 || hidden.extent(1) != concept_tangents.extent(1)) {
    throw Error(Errc::shape_mismatch, "mastery: state and concept widths differ");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(hidden.extent(1)));
  return diff::sigmoid(diff::matmul(hidden, diff::transpose(concept_tangents)) * scale);
}

Tensor bce_loss(const Tensor& predictions, const std::vector<int>& labels) {
  if (labels.empty()) throw Error(Errc::invalid_argument, "bce_loss on an empty batch");
  require_rows(predictions, labels.size(), 1, "bce_loss");
  std::vector<double> y(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw Error(Errc::invalid_argument, "label must be 0 or 1");
    y[i] = labels[i];
  }
  const Tensor yt = column(y);
  const Tensor p = diff::clamp(predictions, kProbFloor, 1.0 - kProbFloor);
  return -diff::mean(yt * diff::log(p) + (1.0 - yt) * diff::log(1.0 - p));
}

Tensor total_loss(const Tensor& l_kt, const Tensor& l_con, double alpha) {
  if (!l_con) return l_kt;
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw Error(Errc::invalid_argument, "alpha must be a positive number");
  return l_kt + alpha * l_con;
}

// ---- config --------------------------------------------------------------------------

void TrainConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(Errc::invalid_argument, m); };
  if (dim < 1) bad("dim must be positive");
  if (layers < 1) bad("layers must be positive");
  if (heads < 1) bad("heads must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) bad("dropout must be in [0,1)");
  if (!(tau > 0.0)) bad("tau must be positive");
  if (negatives < 1) bad("negatives must be positive");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) bad("alpha must be a positive number");
  if (!(lr >= 0.0) || !std::isfinite(lr)) bad("lr must be finite and >= 0");
  if (!(clip >= 0.0)) bad("clip must be >= 0");
  if (batch_size < 1) bad("batch_size must be positive");
  if (window < 1) bad("window must be positive");
  if (!(val_ratio >= 0.0 && val_ratio < 1.0)) bad("val_ratio must be in [0,1)");
  if (!(init_curvature < -manifold::kCurvatureFloor)) bad("init_curvature must be below -0.001");
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) bad("train_ratio must be in (0,1)");
}

std::string TrainConfig::canonical() const {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::ostringstream o;
  o << "alpha=" << num(alpha) << '\n'
    << "batch_size=" << batch_size << '\n'
    << "clip=" << num(clip) << '\n'
    << "dim=" << dim << '\n'
    << "dropout=" << num(dropout) << '\n'
    << "epochs=" << epochs << '\n'
    << "fuse_aligned=" << (fuse_aligned ? "true" : "false") << '\n'
    << "heads=" << heads << '\n'
    << "init_curvature=" << num(init_curvature) << '\n'
    << "layers=" << layers << '\n'
    << "learn_curvature=" << (learn_curvature ? "true" : "false") << '\n'
    << "lr=" << num(lr) << '\n'
    << "mode=" << to_string(mode) << '\n'
    << "negatives=" << negatives << '\n'
    << "seed=" << seed << '\n'
    << "similarity=" << similarity_name(similarity) << '\n'
    << "tau=" << num(tau) << '\n'
    << "train_ratio=" << num(train_ratio) << '\n'
    << "val_ratio=" << num(val_ratio) << '\n'
    << "window=" << window << '\n';
  return o.str();
}

// ---- model ---------------------------------------------------------------------------

Model Model::create(const TrainConfig& config, kgraph::KnowledgeGraph graph_real, kgraph::KnowledgeGraph graph_syn) {
  config.validate();
  hgnn::EncoderConfig ec;
  ec.dim = config.dim;
  ec.layers = config.layers;
  ec.heads = config.heads;
  ec.dropout = config.dropout;
  ec.euclidean = config.mode == Mode::no_hyp;
  auto message_real = hgnn::MessageGraph::from_knowledge_graph(graph_real);
  auto message_syn = hgnn::MessageGraph::from_knowledge_graph(graph_syn);
  hgnn::Encoder encoder(ec, splitmix64(config.seed ^ 0x656e636fULL));
  std::mt19937_64 rng(splitmix64(config.seed ^ 0x7461626cULL));
  Tensor table_real = encoder.init_table(message_real.node_count(), rng);
  Tensor table_syn = encoder.init_table(message_syn.node_count(), rng);
  const double theta = manifold::Curvature::from_value(config.init_curvature).theta();
  TrackerParams tracker = TrackerParams::init(config.dim, rng);
  return Model{config,
               std::move(graph_real),
               std::move(graph_syn),
               std::move(message_real),
               std::move(message_syn),
               std::move(encoder),
               table_real,
               table_syn,
               Tensor::scalar(theta, true),
               Tensor::scalar(theta, true),
               tracker};
}

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() const {
  auto out = encoder.named_parameters();
  out.emplace_back("emb.real", table_real);
  out.emplace_back("emb.syn", table_syn);
  out.emplace_back("curv.real", theta_real);
  out.emplace_back("curv.syn", theta_syn);
  for (auto& kv : tracker.named()) out.push_back(kv);
  return out;
}

std::vector<Tensor> Model::trainable() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) {
    const bool fixed = config.mode == Mode::no_hyp || !config.learn_curvature;
    if (fixed && name.rfind("curv.", 0) == 0) continue;
    out.push_back(t);
  }
  return out;
}

double Model::kappa_real() const { return manifold::Curvature(theta_real.item()).value(); }
double Model::kappa_syn() const { return manifold::Curvature(theta_syn.item()).value(); }

std::vector<Sequence> prepare(const Model& model, const std::vector<toolkit::StudentSequence>& sequences) {
  const auto& g = model.graph_real;
  const std::size_t nq = g.questions().size();
  std::vector<Sequence> out;
  for (const auto& s : toolkit::chunk(sequences, model.config.window)) {
    Sequence seq;
    seq.reserve(s.interactions.size());
    for (const auto& it : s.interactions) {
      const auto qi = g.question_index(it.question_id);
      if (!qi) throw Error(Errc::not_found, "question " + it.question_id + " of student " + s.student_id +
                                                " is not in the training graph");
      const auto& q = g.questions()[*qi];
      Step st;
      st.question = *qi;
      for (const auto& cid : q.concept_ids) st.concepts.push_back(nq + *g.concept_index(cid));
      st.correct = it.correct ? 1 : 0;
      st.difficulty = q.difficulty;
      st.level_mean = g.mean_concept_level(*qi);
      seq.push_back(std::move(st));
    }
    if (!seq.empty()) out.push_back(std::move(seq));
  }
  return out;
}

ForwardResult forward(const Model& model, const std::vector<const Sequence*>& batch, bool with_contrastive,
                      std::mt19937_64* rng) {
  if (batch.empty()) throw Error(Errc::invalid_argument, "empty batch");
  const auto& cfg = model.config;
  const bool euclid = cfg.mode == Mode::no_hyp;
  const bool contrast = with_contrastive && cfg.mode != Mode::no_con;
  if (contrast && !rng) throw Error(Errc::invalid_argument, "contrastive term needs a random source");

  const Tensor kappa = euclid ? Tensor::scalar(-1.0) : manifold::curvature_value(model.theta_real);
  const manifold::OriginChart chart(kappa, euclid);
  std::mt19937_64* drop = cfg.dropout > 0.0 ? rng : nullptr;
  Tensor tangent = model.encoder.encode(model.message_real, model.table_real, model.theta_real, drop).tangent;

  const auto positives = hgnn::shared_positives(model.message_real, model.message_syn);
  Tensor syn_tangent;
  if (contrast || cfg.fuse_aligned) {
    syn_tangent = model.encoder.encode(model.message_syn, model.table_syn, model.theta_syn, drop).tangent;
  }
  Tensor con;
  if (contrast) {
    hgnn::ContrastiveConfig cc{cfg.tau, cfg.negatives, cfg.similarity};
    const auto negs = hgnn::sample_negatives(positives, model.message_syn.node_count(), cfg.negatives, *rng);
    con = hgnn::contrastive_loss(tangent, syn_tangent, positives, negs, cc, kappa);
  }
  if (cfg.fuse_aligned && !positives.empty()) {
    diff::Index pu, pv;
    for (auto [u, v] : positives) {
      pu.push_back(u);
      pv.push_back(v);
    }
    const Tensor shift = 0.5 * (diff::gather_rows(syn_tangent, pv) - diff::gather_rows(tangent, pu));
    tangent = tangent + diff::scatter_add_rows(shift, pu, tangent.extent(0));
  }

  // Longest sequences first, so the live rows at step t are a prefix.
  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return batch[a]->size() > batch[b]->size(); });
  const std::size_t steps = batch[order[0]]->size();
  if (steps == 0) throw Error(Errc::invalid_argument, "batch holds only empty sequences");

  // Rows are laid out time-major.
  std::vector<std::size_t> live(steps, 0);
  diff::Index questions, members, owner;
  std::vector<double> weights, qdiff, level;
  std::vector<int> responses;
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t b : order) {
      const Sequence& s = *batch[b];
      if (t >= s.size()) break;
      const Step& st = s[t];
      const std::size_t row = questions.size();
      ++live[t];
      questions.push_back(st.question);
      const double w = 1.0 / static_cast<double>(st.concepts.size() + 1);
      members.push_back(st.question);
      owner.push_back(row);
      weights.push_back(w);
      for (std::size_t c : st.concepts) {
        members.push_back(c);
        owner.push_back(row);
        weights.push_back(w);
      }
      qdiff.push_back(st.difficulty);
      level.push_back(st.level_mean);
      responses.push_back(st.correct);
    }
  }
  const std::size_t m = questions.size();
  const Tensor mean_tangent = diff::scatter_add_rows(diff::gather_rows(tangent, members) * column(weights), owner, m);
  const Tensor x = chart.log0(chart.exp0(mean_tangent));
  const Tensor fused = fuse_input(x, responses, model.tracker);
  const Tensor gate = difficulty_gate(column(qdiff), column(level), model.tracker);
  const Tensor qt = diff::gather_rows(tangent, questions);

  const std::size_t d = cfg.dim, width = batch.size();
  Tensor h = Tensor::zeros({width, d});
  std::vector<Tensor> preds;
  std::size_t offset = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t n = live[t];
    const Tensor h_live = n == width ? h : diff::slice(h, 0, 0, n);
    preds.push_back(predict(h_live, diff::slice(qt, 0, offset, n), model.tracker));
    const Tensor h_next =
        hgru_step(diff::slice(fused, 0, offset, n), h_live, diff::slice(gate, 0, offset, n), model.tracker);
    h = n == width ? h_next : diff::concat({h_next, diff::slice(h, 0, n, width - n)}, 0);
    offset += n;
  }

  ForwardResult out;
  out.predictions = preds.size() == 1 ? preds[0] : diff::concat(preds, 0);
  out.labels = std::move(responses);
  out.kt_loss = bce_loss(out.predictions, out.labels);
  out.con_loss = con;
  out.loss = total_loss(out.kt_loss, con, cfg.alpha);
  diff::Index back(width);
  for (std::size_t i = 0; i < width; ++i) back[order[i]] = i;
  out.hidden = diff::gather_rows(h, back);
  out.tangent = tangent;
  return out;
}

std::map<std::string, double> mastery_readout(const Model& model, const Sequence& sequence) {
  const auto r = forward(model, {&sequence}, false, nullptr);
  const std::size_t nq = model.graph_real.questions().size();
  diff::Index rows;
  for (std::size_t c = 0; c < model.graph_real.concepts().size(); ++c) rows.push_back(nq + c);
  const Tensor k = mastery(r.hidden, diff::gather_rows(r.tangent, rows));
  std::map<std::string, double> out;
  for (std::size_t c = 0; c < rows.size(); ++c) out[model.graph_real.concepts()[c].id] = k.at(0, c);
  return out;
}

Scores evaluate(const Model& model, const std::vector<Sequence>& sequences, std::size_t batch_size) {
  if (batch_size < 1) throw Error(Errc::invalid_argument, "batch_size must be positive");
  Scores out;
  double weighted = 0.0;
  for (std::size_t i = 0; i < sequences.size(); i += batch_size) {
    std::vector<const Sequence*> batch;
    for (std::size_t j = i; j < std::min(sequences.size(), i + batch_size); ++j) batch.push_back(&sequences[j]);
    const auto r = forward(model, batch, false, nullptr);
    const auto p = r.predictions.data();
    out.predictions.insert(out.predictions.end(), p.begin(), p.end());
    out.labels.insert(out.labels.end(), r.labels.begin(), r.labels.end());
    weighted += r.kt_loss.item() * static_cast<double>(r.labels.size());
  }
  if (!out.labels.empty()) out.loss = weighted / static_cast<double>(out.labels.size());
  return out;
}

// ---- training ------------------------------------------------------------------------

TrainResult train(Model& model, const std::vector<toolkit::StudentSequence>& train_sequences,
                  const std::vector<toolkit::StudentSequence>& synthetic_sequences,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
  const auto& cfg = model.config;
  cfg.validate();
  std::vector<toolkit::StudentSequence> fit = train_sequences, held;
  if (cfg.val_ratio > 0.0) {
    if (train_sequences.size() < 2) throw Error(Errc::invalid_argument, "validation needs at least two students");
    std::tie(fit, held) = toolkit::split(train_sequences, 1.0 - cfg.val_ratio, splitmix64(cfg.seed ^ 0x76616cULL));
  }
  fit.insert(fit.end(), synthetic_sequences.begin(), synthetic_sequences.end());
  const auto train_set = prepare(model, fit);
  const auto val_set = prepare(model, held);
  if (train_set.empty()) throw Error(Errc::invalid_argument, "no training interactions");

  std::mt19937_64 rng(splitmix64(cfg.seed ^ 0x747261696eULL));
  const auto params = model.trainable();
  diff::Sgd opt(params, cfg.lr, cfg.clip);
  const auto named = model.named_parameters();
  std::vector<std::vector<double>> best_snapshot;
  auto snapshot = [&] {
    std::vector<std::vector<double>> s;
    for (auto& [name, t] : named) s.push_back(t.to_vector());
    return s;
  };

  TrainResult result;
  result.best_val_auc = -1.0;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> preds;
    std::vector<int> labels;
    double weighted = 0.0;
    for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
      std::vector<const Sequence*> batch;
      for (std::size_t j = i; j < std::min(order.size(), i + cfg.batch_size); ++j) batch.push_back(&train_set[order[j]]);
      const std::string where = "epoch " + std::to_string(epoch) + ", batch " + std::to_string(i / cfg.batch_size + 1);
      try {
        const auto r = forward(model, batch, true, &rng);
        if (!std::isfinite(r.loss.item())) throw Error(Errc::divergence, "non-finite loss");
        const auto p = r.predictions.data();
        preds.insert(preds.end(), p.begin(), p.end());
        labels.insert(labels.end(), r.labels.begin(), r.labels.end());
        weighted += r.kt_loss.item() * static_cast<double>(r.labels.size());
        opt.zero_grad();
        diff::backward(r.loss);
        opt.step();
      } catch (const Error& e) {
        if (e.code() != Errc::domain_error && e.code() != Errc::divergence) throw;
        throw Error(Errc::divergence, "training diverged at " + where + " (" + e.message() + ")");
      }
    }
    EpochMetrics tm{epoch, "train", weighted / static_cast<double>(labels.size()), safe_auc(preds, labels),
                    toolkit::acc(preds, labels)};
    result.history.push_back(tm);
    if (on_epoch) on_epoch(tm);

    bool improved = false;
    if (!val_set.empty()) {
      const auto s = evaluate(model, val_set);
      EpochMetrics vm{epoch, "val", s.loss, safe_auc(s.predictions, s.labels), toolkit::acc(s.predictions, s.labels)};
      result.history.push_back(vm);
      if (on_epoch) on_epoch(vm);
      improved = std::isfinite(vm.auc) ? vm.auc > result.best_val_auc : result.best_epoch == 0;
      if (improved && std::isfinite(vm.auc)) result.best_val_auc = vm.auc;
    } else {
      improved = true;
    }
    if (improved) {
      result.best_epoch = epoch;
      best_snapshot = snapshot();
    }
  }
  if (!best_snapshot.empty()) {
    for (std::size_t i = 0; i < named.size(); ++i) {
      Tensor t = named[i].second;
      auto dst = t.mutable_data();
      std::copy(best_snapshot[i].begin(), best_snapshot[i].end(), dst.begin());
    }
  }
  std::ostringstream rs;
  rs << rng;
  result.rng_state = rs.str();
  return result;
}

// ---- persistence ---------------------------------------------------------------------

namespace {

std::uint64_t config_hash(const TrainConfig& c) { return fnv1a(c.canonical()); }

json config_json(const TrainConfig& c) {
  return json{{"mode", to_string(c.mode)},
              {"dim", c.dim},
              {"layers", c.layers},
              {"heads", c.heads},
              {"dropout", c.dropout},
              {"tau", c.tau},
              {"negatives", c.negatives},
              {"similarity", similarity_name(c.similarity)},
              {"alpha", c.alpha},
              {"lr", c.lr},
              {"clip", c.clip},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"window", c.window},
              {"val_ratio", c.val_ratio},
              {"init_curvature", c.init_curvature},
              {"learn_curvature", c.learn_curvature},
              {"fuse_aligned", c.fuse_aligned},
              {"train_ratio", c.train_ratio},
              {"seed", c.seed}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.mode = parse_mode(j.at("mode").get<std::string>());
  c.dim = j.at("dim").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.tau = j.at("tau").get<double>();
  c.negatives = j.at("negatives").get<std::size_t>();
  const auto sim = j.at("similarity").get<std::string>();
  c.similarity = sim == "distance" ? hgnn::Similarity::distance : hgnn::Similarity::cosine;
  c.alpha = j.at("alpha").get<double>();
  c.lr = j.at("lr").get<double>();
  c.clip = j.at("clip").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.window = j.at("window").get<std::size_t>();
  c.val_ratio = j.at("val_ratio").get<double>();
  c.init_curvature = j.at("init_curvature").get<double>();
  c.learn_curvature = j.at("learn_curvature").get<bool>();
  c.fuse_aligned = j.at("fuse_aligned").get<bool>();
  c.train_ratio = j.at("train_ratio").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::string graph_text(const kgraph::KnowledgeGraph& g) {
  std::ostringstream o;
  kgraph::write_graph(o, g);
  return o.str();
}

kgraph::KnowledgeGraph graph_from_text(const std::string& s) {
  std::istringstream in(s);
  return kgraph::read_graph(in);
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const TrainResult& result) {
  json params = json::object();
  for (const auto& [name, t] : model.named_parameters()) {
    params[name] = json{{"shape", t.shape()}, {"data", t.to_vector()}};
  }
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(model.config)));
  const json doc{{"format", "hypkt-checkpoint"},
                 {"version", 1},
                 {"config_hash", hash},
                 {"config", config_json(model.config)},
                 {"graph_real", graph_text(model.graph_real)},
                 {"graph_syn", graph_text(model.graph_syn)},
                 {"params", params},
                 {"best_epoch", result.best_epoch},
                 {"best_val_auc", result.best_val_auc},
                 {"rng_state", result.rng_state}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io_error, "cannot write checkpoint " + path);
  out << doc.dump(1) << '\n';
  if (!out) throw Error(Errc::io_error, "failed writing checkpoint " + path);
}

Model load_checkpoint(const std::string& path, TrainResult* result) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open checkpoint " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, "checkpoint " + path + " is not valid JSON", e.what());
  }
  try {
    if (doc.at("format") != "hypkt-checkpoint") throw Error(Errc::parse_error, path + " is not a checkpoint");
    const TrainConfig cfg = config_from_json(doc.at("config"));
    char hash[32];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
    if (doc.at("config_hash").get<std::string>() != hash) {
      throw Error(Errc::parse_error, "checkpoint " + path + " config hash mismatch");
    }
    Model model = Model::create(cfg, graph_from_text(doc.at("graph_real").get<std::string>()),
                                graph_from_text(doc.at("graph_syn").get<std::string>()));
    const auto& params = doc.at("params");
    for (auto& [name, t] : model.named_parameters()) {
      if (!params.contains(name)) throw Error(Errc::parse_error, "checkpoint " + path + " lacks parameter " + name);
      const auto shape = params[name].at("shape").get<diff::Shape>();
      const auto data = params[name].at("data").get<std::vector<double>>();
      if (shape != t.shape() || data.size() != t.numel()) {
        throw Error(Errc::shape_mismatch, "checkpoint parameter " + name + " has shape " + diff::shape_str(shape) +
                                              ", expected " + diff::shape_str(t.shape()));
      }
      auto dst = t.mutable_data();
      std::copy(data.begin(), data.end(), dst.begin());
    }
    if (result) {
      result->best_epoch = doc.at("best_epoch").get<std::size_t>();
      result->best_val_auc = doc.at("best_val_auc").get<double>();
      result->rng_state = doc.at("rng_state").get<std::string>();
    }
    return model;
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, "checkpoint " + path + " is malformed", e.what());
  }
}

std::string format_metric(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_metrics(std::ostream& out, const std::vector<EpochMetrics>& rows, const std::string& generated) {
  out << "# generated " << generated << '\n' << "epoch,split,loss,auc,acc\n";
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.split << ',' << format_metric(r.loss) << ',' << format_metric(r.auc) << ','
        << format_metric(r.acc) << '\n';
  }
}

}  // namespace hypkt::tracker
