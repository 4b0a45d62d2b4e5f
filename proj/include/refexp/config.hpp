// Copyright 2026 The refexp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef REFEXP_CONFIG_HPP_
#define REFEXP_CONFIG_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "refexp/dataset.hpp"
#include "refexp/evaluation.hpp"
#include "refexp/semisup.hpp"
#include "refexp/training.hpp"

namespace refexp {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::size_t line, const std::string& what)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct DataConfig {
  std::uint64_t seed = 1;
  // External JSONL dataset; when empty the corpus is generated.
  std::string path;
  CorpusConfig corpus;
  // Fraction of training objects whose expressions are hidden for semisup.
  double hidden_fraction = 0.5;
  std::size_t vocab_min_count = kDefaultMinCount;
};

struct SemiSupSettings {
  std::size_t ensemble_size = 2;
  std::vector<std::uint64_t> ensemble_seeds;
  CandidateMode filter_mode = CandidateMode::kGt;
  bool warm_start = false;
};

struct RunSpec {
  std::string name;
  TrainingConfig train;
};

struct ExperimentSpec {
  DataConfig data;
  TrainingConfig train;
  EvalConfig eval;
  SemiSupSettings semisup;
  // Every run is repeated once per seed; the seed replaces train.seed.
  std::vector<std::uint64_t> seeds{1};
  std::vector<Split> eval_splits{Split::kTest};
  bool parallel_runs = false;
  std::vector<RunSpec> runs;
};

bool operator==(const ExperimentSpec& a, const ExperimentSpec& b);

// Line-oriented `key = value` text with [data], [train], [eval], [semisup],
// [experiment] and [run NAME] sections. A run section starts from the
// [train] values wherever it appears in the file. `#` starts a comment line.
ExperimentSpec parse_config(const std::string& text);
ExperimentSpec load_config(const std::filesystem::path& path);
// Every key with its value, defaults included; parse_config reads it back
// to an equal spec.
std::string resolved_config(const ExperimentSpec& spec);
// The [train] keys of one config, in resolved form.
std::string training_config_text(const TrainingConfig& config);

SemiSupConfig semisup_config(const ExperimentSpec& spec);

}  // namespace refexp

#endif  // REFEXP_CONFIG_HPP_
