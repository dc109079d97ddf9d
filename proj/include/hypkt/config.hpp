#pragma once

// Flat key = value run configuration. One setting per line, '#' starts a
// comment, dotted keys group related settings. Relative paths resolve
// against the directory holding the config file. See config_schema().

#include <cstdint>
#include <iosfwd>
#include <string>

#include "hypkt/agents.hpp"
#include "hypkt/interactions.hpp"
#include "hypkt/kgraph.hpp"
#include "hypkt/tracker.hpp"

namespace hypkt::toolkit {

struct SynthSettings {
  std::size_t profiles = 40;  // half high, half low proficiency
  std::size_t steps = 50;
  double high = 0.9;
  double low = 0.1;
  double lambda = 0.05;
  agents::StudentConfig student;
};

struct RunConfig {
  std::uint64_t seed = 0;

  // Inputs. Empty means unset; set paths must exist when the file is loaded.
  std::string interactions;
  std::string questions;
  std::string annotations;
  std::string graph;
  std::string synthetic;
  std::string checkpoint;

  std::string format = "auto";  // csv | jsonl | auto (by extension)
  ColumnMap columns;
  std::string backend = "mock";  // mock | http

  SynthSettings synth;
  kgraph::GromovOptions gromov;
  tracker::TrainConfig train;

  // Copies the run seed into the nested settings that carry their own.
  void set_seed(std::uint64_t s);
  void validate() const;
};

// `origin` names the source in error messages; `base_dir` anchors relative paths.
RunConfig parse_config(std::istream& in, const std::string& origin, const std::string& base_dir);
RunConfig load_config(const std::string& path);

// Key reference, one line per key with its default.
std::string config_schema();

}  // namespace hypkt::toolkit
