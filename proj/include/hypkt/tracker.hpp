#pragma once

// Tangent-space knowledge tracer: fusion of question/concept embeddings with
// the response, difficulty-gated GRU recurrence, next-response prediction,
// concept mastery readout, and the joint training loop.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "hypkt/diffcore.hpp"
#include "hypkt/hgnn.hpp"
#include "hypkt/interactions.hpp"
#include "hypkt/kgraph.hpp"
#include "hypkt/manifold.hpp"

namespace hypkt::tracker {

using diff::Tensor;

enum class Mode { full, no_hyp, no_con };

Mode parse_mode(const std::string& s);
std::string to_string(Mode m);

struct TrackerParams {
  Tensor fuse_w;  // [(d + 2) x d]
  Tensor fuse_b;  // [1 x d]
  Tensor gate_wd;  // [1 x d], multiplies q_diff
  Tensor gate_wl;  // [1 x d], multiplies the mean concept level
  Tensor gate_b;   // [1 x d]
  Tensor gru_wx;  // [d x 3d], columns: update, reset, candidate
  Tensor gru_uh;  // [d x 3d]
  Tensor gru_b;   // [1 x 3d]
  Tensor head_w;  // [2d x 1]
  Tensor head_b;  // [1]

  static TrackerParams init(std::size_t dim, std::mt19937_64& rng);
  std::vector<std::pair<std::string, Tensor>> named() const;
  std::size_t dim() const { return fuse_b.numel(); }
};

// tanh([x ; onehot(r)] W + b), onehot(1) = (1, 0), onehot(0) = (0, 1).
Tensor fuse_input(const Tensor& tangent, const std::vector<int>& responses, const TrackerParams& p);

// sigmoid(q_diff * W_d + level_mean * W_L + b), rows [B x d].
Tensor difficulty_gate(const Tensor& q_diff, const Tensor& level_mean, const TrackerParams& p);

// GRU in tangent coordinates with the update gate scaled by `gate`:
// h' = (1 - z*D) h + (z*D) n.
Tensor hgru_step(const Tensor& x, const Tensor& h_prev, const Tensor& gate, const TrackerParams& p);

// sigmoid([h ; q] w + b), [B x 1].
Tensor predict(const Tensor& hidden, const Tensor& question_tangent, const TrackerParams& p);

// sigmoid(h . c / sqrt(d)) for every concept row, [B x C].
Tensor mastery(const Tensor& hidden, const Tensor& concept_tangents);

// Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7].
Tensor bce_loss(const Tensor& predictions, const std::vector<int>& labels);

Tensor total_loss(const Tensor& l_kt, const Tensor& l_con, double alpha);

// ---- model and training -----------------------------------------------------------

struct TrainConfig {
  Mode mode = Mode::full;
  std::size_t dim = 32;
  std::size_t layers = 2;
  std::size_t heads = 2;
  double dropout = 0.0;
  double tau = 0.2;
  std::size_t negatives = 16;
  hgnn::Similarity similarity = hgnn::Similarity::cosine;
  double alpha = 0.1;
  double lr = 0.01;
  double clip = 5.0;
  std::size_t epochs = 30;
  std::size_t batch_size = 4;
  std::size_t window = 200;
  double val_ratio = 0.125;
  double init_curvature = -1.0;
  bool learn_curvature = true;
  bool fuse_aligned = false;
  // Student-level train/test protocol used by the pipeline around train().
  double train_ratio = 0.8;
  std::uint64_t seed = 0;

  void validate() const;
  // Canonical key=value text; hashed into checkpoints.
  std::string canonical() const;
};

struct Model {
  TrainConfig config;
  kgraph::KnowledgeGraph graph_real;
  kgraph::KnowledgeGraph graph_syn;
  hgnn::MessageGraph message_real;
  hgnn::MessageGraph message_syn;
  hgnn::Encoder encoder;
  Tensor table_real;
  Tensor table_syn;
  Tensor theta_real;
  Tensor theta_syn;
  TrackerParams tracker;

  static Model create(const TrainConfig& config, kgraph::KnowledgeGraph graph_real, kgraph::KnowledgeGraph graph_syn);

  // Every learnable tensor under a stable name (thetas included).
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> trainable() const;
  double kappa_real() const;
  double kappa_syn() const;
};

// One interaction mapped onto the real graph.
struct Step {
  std::size_t question = 0;                 // node index in message_real
  std::vector<std::size_t> concepts;        // node indices in message_real
  int correct = 0;
  double difficulty = 0.0;
  double level_mean = 1.0;
};

using Sequence = std::vector<Step>;

// Chunks into windows and resolves ids; unknown question ids raise.
std::vector<Sequence> prepare(const Model& model, const std::vector<toolkit::StudentSequence>& sequences);

struct ForwardResult {
  Tensor predictions;       // [M x 1], every step of every sequence
  std::vector<int> labels;  // aligned with predictions
  Tensor kt_loss;
  Tensor con_loss;          // undefined in no_con mode or when not requested
  Tensor loss;
  Tensor hidden;   // [B x d] final state per sequence, in batch order
  Tensor tangent;  // [N x d] real-graph node tangents used by the tracker
};

// Forward over a batch of sequences; contrastive term drawn with `rng` when
// `with_contrastive`.
ForwardResult forward(const Model& model, const std::vector<const Sequence*>& batch, bool with_contrastive,
                      std::mt19937_64* rng);

// Concept id -> mastery probability after the last step of `sequence`.
std::map<std::string, double> mastery_readout(const Model& model, const Sequence& sequence);

struct Scores {
  std::vector<double> predictions;
  std::vector<int> labels;
  double loss = 0.0;
};

Scores evaluate(const Model& model, const std::vector<Sequence>& sequences, std::size_t batch_size = 16);

struct EpochMetrics {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0.0;
  double auc = 0.0;
  double acc = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> history;  // train and val rows per epoch
  std::size_t best_epoch = 0;
  double best_val_auc = 0.0;
  std::string rng_state;
};

// Trains in place and leaves the best-validation parameters loaded.
// `train_sequences` may include synthetic sequences; validation students are
// carved from `train_sequences` before any synthetic data is appended.
TrainResult train(Model& model, const std::vector<toolkit::StudentSequence>& train_sequences,
                  const std::vector<toolkit::StudentSequence>& synthetic_sequences = {},
                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

// ---- persistence --------------------------------------------------------------------

void save_checkpoint(const std::string& path, const Model& model, const TrainResult& result);
Model load_checkpoint(const std::string& path, TrainResult* result = nullptr);

// "# generated <utc time>" then epoch,split,loss,auc,acc rows.
void write_metrics(std::ostream& out, const std::vector<EpochMetrics>& rows, const std::string& generated);
std::string format_metric(double v);

}  // namespace hypkt::tracker
