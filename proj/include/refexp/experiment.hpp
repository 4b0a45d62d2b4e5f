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

#ifndef REFEXP_EXPERIMENT_HPP_
#define REFEXP_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "refexp/config.hpp"
#include "refexp/dataset.hpp"
#include "refexp/evaluation.hpp"
#include "refexp/training.hpp"

namespace refexp {

// Loads data.path when set, else generates the corpus from data.seed.
Dataset prepare_dataset(const DataConfig& config);

std::uint64_t checkpoint_hash(const SpeakerModel& model);

struct RunOutcome {
  std::string name;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::map<Split, EvalReport> reports;
  std::uint64_t checkpoint_hash = 0;
  double train_seconds = 0.0;
  double final_loss = 0.0;
};

struct ExperimentOutcome {
  std::vector<RunOutcome> runs;
  std::uint64_t dataset_hash = 0;
  bool ok() const;
  // Mean of a run's cell over its seeds, for completed runs.
  double mean_p1(const std::string& run, Split split, CandidateMode c, DescriptionMode d) const;
  double mean_oracle(const std::string& run, Split split) const;
};

// Trains and evaluates every run for every seed. When `out_dir` is not
// empty, writes resolved.cfg, one JSON, checkpoint and history per run,
// results.csv and manifest.json (rewritten after each run).
ExperimentOutcome run_experiment(const ExperimentSpec& spec, const Dataset& data,
                                 const std::filesystem::path& out_dir, std::ostream* log = nullptr);

}  // namespace refexp

#endif  // REFEXP_EXPERIMENT_HPP_
