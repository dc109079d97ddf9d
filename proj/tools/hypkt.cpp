// hypkt: command-line front end. Every subcommand takes --config, --seed and
// --out; errors print one "error: <code>: <message>" line and exit 1, usage
// problems exit 2.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "hypkt/config.hpp"
#include "hypkt/error.hpp"
#include "hypkt/pipeline.hpp"

using namespace hypkt;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "run configuration (key = value file)");
  cmd->add_option("--seed", c.seed, "override the configured seed");
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
}

toolkit::RunConfig setup(const Common& c) {
  toolkit::RunConfig cfg;
  if (!c.config.empty()) {
    if (!fs::exists(c.config)) throw Error(Errc::io_error, "config file not found: " + c.config);
    cfg = toolkit::load_config(c.config);
  }
  if (c.seed) cfg.set_seed(*c.seed);
  fs::create_directories(c.out);
  return cfg;
}

std::string out_path(const Common& c, const std::string& name) { return (fs::path(c.out) / name).string(); }

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::io_error, "cannot write " + path);
  return f;
}

std::vector<agents::TeacherAnnotation> annotations_for(const toolkit::RunConfig& cfg) {
  if (!cfg.annotations.empty()) return toolkit::load_annotations(cfg.annotations);
  if (cfg.questions.empty()) throw Error(Errc::invalid_argument, "configure 'annotations' or 'questions'");
  auto client = toolkit::make_client(cfg);
  return toolkit::annotate(toolkit::read_questions(cfg.questions), *client);
}

int cmd_ingest(const Common& c) {
  const auto cfg = setup(c);
  toolkit::LoadReport report;
  const auto logs = toolkit::load_logs(cfg, cfg.interactions, &report);
  const auto path = out_path(c, "interactions.csv");
  auto f = open_out(path);
  toolkit::write_interactions(f, logs, toolkit::Format::csv);
  std::printf("students=%zu interactions=%zu malformed=%zu out=%s\n", logs.size(), toolkit::interaction_count(logs),
              report.malformed, path.c_str());
  for (const auto& p : report.problems) std::fprintf(stderr, "warning: %s\n", p.c_str());
  return 0;
}

int cmd_graph(const Common& c) {
  const auto cfg = setup(c);
  if (cfg.questions.empty()) throw Error(Errc::invalid_argument, "configure 'questions' for graph");
  auto client = toolkit::make_client(cfg);
  const auto annotations = toolkit::annotate(toolkit::read_questions(cfg.questions), *client);
  {
    auto f = open_out(out_path(c, "annotations.jsonl"));
    agents::write_annotations(f, annotations);
  }
  const auto syn = agents::build_catalog(annotations);
  kgraph::save_graph(out_path(c, "graph_syn.jsonl"), syn);
  std::printf("questions=%zu concepts=%zu hierarchy_edges=%zu\n", syn.questions().size(), syn.concepts().size(),
              syn.hie_edges().size());
  if (!cfg.interactions.empty()) {
    std::size_t missing = 0;
    const auto real = toolkit::real_graph(toolkit::load_logs(cfg, cfg.interactions), annotations, &missing, true);
    kgraph::save_graph(out_path(c, "graph_real.jsonl"), real);
    std::printf("real: questions=%zu concepts=%zu students=%zu unannotated_concepts=%zu\n", real.questions().size(),
                real.concepts().size(), real.students().size(), missing);
  }
  return 0;
}

int cmd_hyperbolicity(const Common& c) {
  const auto cfg = setup(c);
  kgraph::KnowledgeGraph g = [&] {
    if (!cfg.graph.empty()) return kgraph::load_graph(cfg.graph);
    if (!cfg.interactions.empty()) {
      return toolkit::real_graph(toolkit::load_logs(cfg, cfg.interactions), annotations_for(cfg), nullptr, true);
    }
    throw Error(Errc::invalid_argument, "configure 'graph' or 'interactions' for hyperbolicity");
  }();
  const auto table = toolkit::format_hyperbolicity(toolkit::hyperbolicity_table(g, cfg.gromov));
  auto f = open_out(out_path(c, "hyperbolicity.csv"));
  f << table;
  std::fputs(table.c_str(), stdout);
  return 0;
}

int cmd_synth(const Common& c) {
  const auto cfg = setup(c);
  const auto traces = toolkit::synthesize(cfg, annotations_for(cfg));
  const auto path = out_path(c, "synthetic.csv");
  auto f = open_out(path);
  agents::write_traces(f, traces);
  std::size_t n = 0, correct = 0;
  for (const auto& t : traces) {
    n += t.records.size();
    for (const auto& r : t.records) correct += r.response;
  }
  std::printf("students=%zu interactions=%zu correct_rate=%.4f out=%s\n", traces.size(), n,
              n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0, path.c_str());
  return 0;
}

int cmd_train(const Common& c) {
  const auto cfg = setup(c);
  const auto logs = toolkit::load_logs(cfg, cfg.interactions);
  std::vector<toolkit::StudentSequence> synthetic;
  if (!cfg.synthetic.empty()) synthetic = toolkit::load_interactions(cfg.synthetic, toolkit::Format::csv);
  const auto run = toolkit::run_training(cfg, logs, annotations_for(cfg), synthetic);
  if (run.unannotated > 0) std::fprintf(stderr, "warning: %zu concepts had no teacher level; used 1\n", run.unannotated);
  tracker::save_checkpoint(out_path(c, "checkpoint.json"), run.model, run.result);
  auto rows = run.result.history;
  rows.push_back(run.test);
  {
    auto f = open_out(out_path(c, "metrics.csv"));
    tracker::write_metrics(f, rows, toolkit::utc_timestamp());
  }
  std::printf("best_epoch=%zu auc=%s acc=%s\n", run.test.epoch, tracker::format_metric(run.test.auc).c_str(),
              tracker::format_metric(run.test.acc).c_str());
  return 0;
}

int cmd_eval(const Common& c) {
  const auto cfg = setup(c);
  const std::string ckpt = cfg.checkpoint.empty() ? out_path(c, "checkpoint.json") : cfg.checkpoint;
  tracker::TrainResult meta;
  const auto model = tracker::load_checkpoint(ckpt, &meta);
  const auto m = toolkit::test_metrics(model, toolkit::load_logs(cfg, cfg.interactions), meta.best_epoch);
  const std::string line = "auc=" + tracker::format_metric(m.auc) + " acc=" + tracker::format_metric(m.acc) +
                           " loss=" + tracker::format_metric(m.loss);
  auto f = open_out(out_path(c, "eval.txt"));
  f << line << '\n';
  std::printf("%s\n", line.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyperbolic knowledge tracing pipeline"};
  app.require_subcommand(1);
  app.footer("Configuration keys:\n" + toolkit::config_schema());
  Common common;
  struct Sub {
    const char* name;
    const char* help;
    int (*run)(const Common&);
  };
  const Sub subs[] = {{"ingest", "validate and normalize an interaction log", cmd_ingest},
                      {"graph", "annotate questions and write knowledge graphs", cmd_graph},
                      {"hyperbolicity", "Gromov delta of the H-all/H-ek/H-e/H-k views", cmd_hyperbolicity},
                      {"synth", "simulate student traces over the annotated catalog", cmd_synth},
                      {"train", "train the tracker; writes checkpoint.json and metrics.csv", cmd_train},
                      {"eval", "test-split AUC/ACC of a checkpoint", cmd_eval}};
  std::vector<std::pair<CLI::App*, const Sub*>> commands;
  for (const auto& s : subs) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    add_common(cmd, common);
    commands.emplace_back(cmd, &s);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::fputs("usage: hypkt {ingest|graph|hyperbolicity|synth|train|eval} [--config FILE] [--seed N] [--out DIR]\n",
               stderr);
    return 2;
  }
  try {
    for (auto& [cmd, sub] : commands)
      if (cmd->parsed()) return sub->run(common);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 1;
  }
  return 2;
}
