#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "hypkt/error.hpp"
#include "hypkt/metrics.hpp"
#include "hypkt/tracker.hpp"
#include "support.hpp"

using namespace hypkt;
using namespace hypkt::tracker;
using diff::Tensor;

namespace {

void fill(const Tensor& t, double v) {
  Tensor copy = t;
  for (double& x : copy.mutable_data()) x = v;
}

void randomize(const Tensor& t, std::mt19937_64& rng, double scale) {
  Tensor copy = t;
  std::normal_distribution<double> nd(0.0, scale);
  for (double& x : copy.mutable_data()) x = nd(rng);
}

Tensor random_rows(std::mt19937_64& rng, std::size_t rows, std::size_t d, double lo, double hi, bool grad = false) {
  return Tensor::from({rows, d}, testing::uniform_vec(rng, rows * d, lo, hi), grad);
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Textbook GRU with scalar loops: h' = (1-z) h + z n.
std::vector<double> plain_gru(const std::vector<double>& x, const std::vector<double>& h, const TrackerParams& p) {
  const std::size_t d = h.size();
  auto wx = p.gru_wx.data(), uh = p.gru_uh.data(), b = p.gru_b.data();
  auto affine = [&](std::size_t col, const std::vector<double>& v, std::span<const double> w) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += v[i] * w[i * 3 * d + col];
    return s;
  };
  std::vector<double> out(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double z = sig(affine(j, x, wx) + affine(j, h, uh) + b[j]);
    const double r = sig(affine(d + j, x, wx) + affine(d + j, h, uh) + b[d + j]);
    const double n = std::tanh(affine(2 * d + j, x, wx) + r * affine(2 * d + j, h, uh) + b[2 * d + j]);
    out[j] = (1.0 - z) * h[j] + z * n;
  }
  return out;
}

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig c;
  c.dim = 8;
  c.layers = 1;
  c.heads = 2;
  c.epochs = 3;
  c.batch_size = 4;
  c.lr = 0.1;
  c.negatives = 4;
  c.seed = seed;
  return c;
}

Model toy_model(const TrainConfig& c) {
  auto [real, syn] = testing::toy_pair();
  return Model::create(c, real, syn);
}

std::vector<std::vector<double>> values(const Model& m) {
  std::vector<std::vector<double>> out;
  for (auto& [name, t] : m.named_parameters()) out.push_back(t.to_vector());
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("fusion appends a one-hot response before a tanh layer") {
  std::mt19937_64 rng(1);
  auto p = TrackerParams::init(4, rng);
  const Tensor x = random_rows(rng, 2, 4, -1, 1);

  SUBCASE("zero weights give tanh(bias)") {
    fill(p.fuse_w, 0.0);
    Tensor b = p.fuse_b;
    const std::vector<double> bias{0.3, -0.2, 1.5, 0.0};
    std::copy(bias.begin(), bias.end(), b.mutable_data().begin());
    const auto y = fuse_input(x, {1, 0}, p);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(y.at(i, j) == doctest::Approx(std::tanh(bias[j])).epsilon(1e-15));
  }
  SUBCASE("correct picks row d, incorrect row d+1") {
    Tensor w = p.fuse_w;
    fill(w, 0.0);
    auto v = w.mutable_data();
    for (std::size_t j = 0; j < 4; ++j) {
      v[4 * 4 + j] = 0.1 * (j + 1);
      v[5 * 4 + j] = -0.1 * (j + 1);
    }
    const auto y = fuse_input(Tensor::zeros({2, 4}), {1, 0}, p);
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(y.at(0, j) == doctest::Approx(std::tanh(0.1 * (j + 1))));
      CHECK(y.at(1, j) == doctest::Approx(std::tanh(-0.1 * (j + 1))));
    }
  }
  SUBCASE("response changes the output") {
    const Tensor same = Tensor::from({2, 4}, {0.1, 0.2, 0.3, 0.4, 0.1, 0.2, 0.3, 0.4});
    const auto y = fuse_input(same, {1, 0}, p);
    double gap = 0.0;
    for (std::size_t j = 0; j < 4; ++j) gap += std::abs(y.at(0, j) - y.at(1, j));
    CHECK(gap > 1e-6);
  }
  CHECK_THROWS_AS(fuse_input(x, {1, 2}, p), Error);
  CHECK_THROWS_AS(fuse_input(x, {1}, p), Error);
}

TEST_CASE("difficulty gate") {
  std::mt19937_64 rng(2);
  auto p = TrackerParams::init(3, rng);
  SUBCASE("zero weights") {
    fill(p.gate_wd, 0.0);
    fill(p.gate_wl, 0.0);
    const auto g = difficulty_gate(Tensor::from({1, 1}, {0.7}), Tensor::from({1, 1}, {3.0}), p);
    for (double v : g.data()) CHECK(v == 0.5);
  }
  SUBCASE("unit weights at the top of the range") {
    fill(p.gate_wd, 1.0);
    fill(p.gate_wl, 1.0);
    const auto g = difficulty_gate(Tensor::from({1, 1}, {1.0}), Tensor::from({1, 1}, {4.0}), p);
    for (double v : g.data()) CHECK(v == doctest::Approx(0.9933071490757153).epsilon(1e-14));
  }
  SUBCASE("monotone in difficulty for non-negative W_d") {
    Tensor wd = p.gate_wd;
    for (double& v : wd.mutable_data()) v = std::abs(v);
    double prev_min = 0.0;
    for (int k = 0; k <= 10; ++k) {
      const auto g = difficulty_gate(Tensor::from({1, 1}, {k / 10.0}), Tensor::from({1, 1}, {2.0}), p);
      double lo = 1.0;
      for (std::size_t j = 0; j < 3; ++j) {
        CHECK(g.at(0, j) > 0.0);
        CHECK(g.at(0, j) < 1.0);
        lo = std::min(lo, g.at(0, j));
      }
      if (k > 0) {
        const auto before = difficulty_gate(Tensor::from({1, 1}, {(k - 1) / 10.0}), Tensor::from({1, 1}, {2.0}), p);
        for (std::size_t j = 0; j < 3; ++j) CHECK(g.at(0, j) >= before.at(0, j));
      }
      prev_min = lo;
    }
    CHECK(prev_min > 0.0);
  }
}

TEST_CASE("gated recurrence") {
  std::mt19937_64 rng(3);
  const std::size_t d = 5;
  auto p = TrackerParams::init(d, rng);
  randomize(p.gru_b, rng, 0.5);
  const Tensor x = random_rows(rng, 3, d, -1, 1);
  const Tensor h = random_rows(rng, 3, d, -1, 1);

  SUBCASE("closed gate keeps the state") {
    const auto out = hgru_step(x, h, Tensor::zeros({3, d}), p);
    for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == h.data()[i]);
  }
  SUBCASE("open gate is a plain GRU") {
    const auto out = hgru_step(x, h, Tensor::full({3, d}, 1.0), p);
    for (std::size_t i = 0; i < 3; ++i) {
      std::vector<double> xi(x.data().begin() + i * d, x.data().begin() + (i + 1) * d);
      std::vector<double> hi(h.data().begin() + i * d, h.data().begin() + (i + 1) * d);
      const auto ref = plain_gru(xi, hi, p);
      for (std::size_t j = 0; j < d; ++j) CHECK(out.at(i, j) == doctest::Approx(ref[j]).epsilon(1e-13));
    }
  }
  SUBCASE("gradient check through one step") {
    const Tensor xg = random_rows(rng, 3, d, -1, 1, true);
    const Tensor hg = random_rows(rng, 3, d, -1, 1, true);
    const Tensor q = random_rows(rng, 3, 1, 0, 1);
    const Tensor lv = random_rows(rng, 3, 1, 1, 4);
    auto f = [&] { return diff::sum(diff::square(hgru_step(xg, hg, difficulty_gate(q, lv, p), p))); };
    std::vector<Tensor> params{p.gru_wx, p.gru_uh, p.gru_b, p.gate_wd, p.gate_wl, p.gate_b, xg, hg};
    CHECK(diff::grad_check(f, params) < 1e-4);
  }
  SUBCASE("hyperbolic view of the state stays on the manifold") {
    Tensor state = Tensor::zeros({3, d});
    const Tensor kappa = Tensor::scalar(-2.0);
    for (int t = 0; t < 20; ++t) {
      state = hgru_step(random_rows(rng, 3, d, -1, 1), state, random_rows(rng, 3, d, 0, 1), p);
      const auto view = manifold::expmap0(state, kappa);
      for (std::size_t i = 0; i < 3; ++i) {
        double inner = -view.at(i, 0) * view.at(i, 0);
        for (std::size_t j = 1; j <= d; ++j) inner += view.at(i, j) * view.at(i, j);
        CHECK(std::abs(inner + 0.5) < 1e-8);
      }
    }
  }
}

TEST_CASE("prediction head and mastery readout") {
  std::mt19937_64 rng(4);
  auto p = TrackerParams::init(4, rng);
  const Tensor h = random_rows(rng, 3, 4, -2, 2);
  const Tensor q = random_rows(rng, 3, 4, -2, 2);
  const auto y = predict(h, q, p);
  for (double v : y.data()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  const auto y2 = predict(h, q, p);
  for (std::size_t i = 0; i < 3; ++i) CHECK(y.data()[i] == y2.data()[i]);
  fill(p.head_w, 0.0);
  const auto flat = predict(h, q, p);
  for (double v : flat.data()) CHECK(v == 0.5);

  const Tensor concepts = random_rows(rng, 6, 4, -1, 1);
  const auto k0 = mastery(Tensor::zeros({1, 4}), concepts);
  CHECK(k0.extent(1) == 6);
  for (double v : k0.data()) CHECK(v == 0.5);
  const auto k = mastery(h, concepts);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t c = 0; c < 6; ++c) {
      double dot = 0.0;
      for (std::size_t j = 0; j < 4; ++j) dot += h.at(i, j) * concepts.at(c, j);
      CHECK(k.at(i, c) == doctest::Approx(sig(dot / 2.0)).epsilon(1e-14));
      CHECK(k.at(i, c) >= 0.0);
      CHECK(k.at(i, c) <= 1.0);
    }
  }
}

TEST_CASE("losses") {
  CHECK(bce_loss(Tensor::from({1, 1}, {0.5}), {1}).item() == doctest::Approx(0.6931471805599453).epsilon(1e-15));
  CHECK(bce_loss(Tensor::from({1, 1}, {0.3}), {1}).item() ==
        doctest::Approx(bce_loss(Tensor::from({1, 1}, {0.7}), {0}).item()).epsilon(1e-15));
  CHECK(bce_loss(Tensor::from({2, 1}, {1.0, 0.0}), {1, 0}).item() < 1e-6);
  CHECK_THROWS_AS(bce_loss(Tensor::from({2, 1}, {0.5, 0.5}), {1}), Error);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng() % 50;
    auto p = testing::uniform_vec(rng, n, 0.0, 1.0);
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng() % 2);
    double ref = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = std::min(std::max(p[i], 1e-7), 1.0 - 1e-7);
      ref += y[i] == 1 ? -std::log(c) : -std::log(1.0 - c);
    }
    ref /= static_cast<double>(n);
    CHECK(std::abs(bce_loss(Tensor::from({n, 1}, p), y).item() - ref) < 1e-12);
  }

  CHECK(total_loss(Tensor::scalar(0.7), Tensor::scalar(0.3), 0.1).item() == doctest::Approx(0.73).epsilon(1e-15));
  CHECK(total_loss(Tensor::scalar(0.7), Tensor::scalar(0.4), 0.1).item() >
        total_loss(Tensor::scalar(0.7), Tensor::scalar(0.3), 0.1).item());
  CHECK_THROWS_AS(total_loss(Tensor::scalar(0.7), Tensor::scalar(0.3), 0.0), Error);
  CHECK(total_loss(Tensor::scalar(0.7), Tensor(), 0.1).item() == 0.7);
}

TEST_CASE("model forward over sequences") {
  auto cfg = small_config(11);
  Model m = toy_model(cfg);
  std::mt19937_64 rng(6);
  for (auto& [name, t] : m.named_parameters())
    if (name.rfind("emb.", 0) == 0 || name.rfind("enc.att", 0) == 0) randomize(t, rng, 0.5);
  const auto seqs = prepare(m, testing::toy_sequences(m.graph_real, 3, 20, 9));
  REQUIRE(seqs.size() == 3);
  std::vector<const Sequence*> batch{&seqs[0], &seqs[1], &seqs[2]};

  SUBCASE("ragged batch equals per-sequence runs") {
    Sequence shorter(seqs[1].begin(), seqs[1].begin() + 7);
    std::vector<const Sequence*> ragged{&seqs[0], &shorter, &seqs[2]};
    const auto r = forward(m, ragged, false, nullptr);
    CHECK(r.labels.size() == 47);
    std::vector<double> joined;
    for (const Sequence* s : ragged) {
      const auto one = forward(m, {s}, false, nullptr);
      joined.insert(joined.end(), one.predictions.data().begin(), one.predictions.data().end());
    }
    std::vector<double> sorted_r(r.predictions.data().begin(), r.predictions.data().end());
    std::sort(sorted_r.begin(), sorted_r.end());
    std::sort(joined.begin(), joined.end());
    for (std::size_t i = 0; i < joined.size(); ++i) CHECK(sorted_r[i] == doctest::Approx(joined[i]).epsilon(1e-12));
    const auto solo = forward(m, {&shorter}, false, nullptr);
    for (std::size_t j = 0; j < cfg.dim; ++j) CHECK(r.hidden.at(1, j) == doctest::Approx(solo.hidden.at(0, j)).epsilon(1e-12));
  }
  SUBCASE("first prediction comes from an empty state") {
    const auto r = forward(m, {&seqs[0]}, false, nullptr);
    const auto q = diff::gather_rows(r.tangent, {seqs[0][0].question});
    CHECK(r.predictions.at(0, 0) == doctest::Approx(predict(Tensor::zeros({1, cfg.dim}), q, m.tracker).item()));
  }
  SUBCASE("gradient check over length-20 sequences on a parameter sample") {
    std::mt19937_64 neg_rng(3);
    const auto state = neg_rng;
    auto f = [&] {
      neg_rng = state;
      return forward(m, batch, true, &neg_rng).loss;
    };
    CHECK(diff::grad_check(f, m.trainable(), 1e-5, 0.05, 17) < 1e-3);
  }
  SUBCASE("mastery readout covers every concept") {
    const auto k = mastery_readout(m, seqs[0]);
    CHECK(k.size() == m.graph_real.concepts().size());
    for (auto& [id, v] : k) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  SUBCASE("unknown question") {
    std::vector<toolkit::StudentSequence> bad{{"s", {{"s", "q99", {"c1"}, 1, 0}}}};
    CHECK_THROWS_AS(prepare(m, bad), Error);
  }
}

TEST_CASE("training") {
  auto [real, syn] = testing::toy_pair();
  const auto data = testing::toy_sequences(real, 16, 30, 21);

  SUBCASE("zero step size leaves parameters unchanged") {
    auto cfg = small_config(5);
    cfg.lr = 0.0;
    Model m = Model::create(cfg, real, syn);
    const auto before = values(m);
    train(m, data);
    CHECK(values(m) == before);
  }
  SUBCASE("same seed twice gives the same trajectory and checkpoint bytes") {
    const auto dir = std::filesystem::temp_directory_path();
    const auto a = (dir / "hypkt_ckpt_a.json").string(), b = (dir / "hypkt_ckpt_b.json").string();
    std::vector<std::vector<EpochMetrics>> runs;
    for (const auto& path : {a, b}) {
      Model m = Model::create(small_config(8), real, syn);
      const auto r = train(m, data);
      runs.push_back(r.history);
      save_checkpoint(path, m, r);
    }
    REQUIRE(runs[0].size() == runs[1].size());
    for (std::size_t i = 0; i < runs[0].size(); ++i) {
      CHECK(runs[0][i].loss == runs[1][i].loss);
      CHECK(runs[0][i].auc == runs[1][i].auc);
    }
    CHECK(slurp(a) == slurp(b));

    TrainResult back;
    Model loaded = load_checkpoint(a, &back);
    const auto c = (dir / "hypkt_ckpt_c.json").string();
    save_checkpoint(c, loaded, back);
    CHECK(slurp(a) == slurp(c));
    Model fresh = Model::create(small_config(8), real, syn);
    const auto r = train(fresh, data);
    const auto seqs = prepare(fresh, data);
    const auto s1 = evaluate(fresh, seqs), s2 = evaluate(loaded, seqs);
    CHECK(s1.predictions == s2.predictions);
    CHECK(r.best_epoch == back.best_epoch);
    for (const auto& p : {a, b, c}) std::filesystem::remove(p);
  }
  SUBCASE("learns to separate strong and weak students") {
    auto cfg = small_config(2);
    cfg.epochs = 15;
    cfg.lr = 0.3;
    cfg.val_ratio = 0.0;
    Model m = Model::create(cfg, real, syn);
    const auto before = evaluate(m, prepare(m, data));
    train(m, data);
    const auto after = evaluate(m, prepare(m, data));
    MESSAGE("train loss " << before.loss << " -> " << after.loss);
    CHECK(after.loss < before.loss);
    CHECK(toolkit::auc(after.predictions, after.labels) > 0.7);
  }
  SUBCASE("every mode trains") {
    for (Mode mode : {Mode::full, Mode::no_hyp, Mode::no_con}) {
      auto cfg = small_config(4);
      cfg.mode = mode;
      cfg.epochs = 1;
      Model m = Model::create(cfg, real, syn);
      const auto r = train(m, data);
      CHECK(r.history.size() == 2);
      CHECK(std::isfinite(r.history[0].loss));
    }
    auto cfg = small_config(4);
    cfg.fuse_aligned = true;
    cfg.similarity = hgnn::Similarity::distance;
    cfg.epochs = 1;
    Model m = Model::create(cfg, real, syn);
    CHECK(std::isfinite(train(m, data).history[0].loss));
  }
  SUBCASE("non-finite loss aborts with the epoch") {
    Model m = Model::create(small_config(4), real, syn);
    Tensor b = m.tracker.head_b;
    b.mutable_data()[0] = std::nan("");
    try {
      train(m, data);
      FAIL("expected divergence");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::divergence);
      CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
    }
  }
  SUBCASE("bad settings") {
    auto cfg = small_config(1);
    cfg.alpha = 0.0;
    CHECK_THROWS_AS(Model::create(cfg, real, syn), Error);
    CHECK_THROWS_AS(parse_mode("nohyp"), Error);
    CHECK(parse_mode("no-hyp") == Mode::no_hyp);
  }
}

TEST_CASE("metrics log") {
  std::ostringstream out;
  write_metrics(out, {{1, "train", 0.5, 0.75, 0.625}, {1, "val", 0.25, std::nan(""), 1.0}}, "2024-01-01T00:00:00Z");
  CHECK(out.str() ==
        "# generated 2024-01-01T00:00:00Z\nepoch,split,loss,auc,acc\n1,train,0.500000,0.750000,0.625000\n"
        "1,val,0.250000,nan,1.000000\n");
}
