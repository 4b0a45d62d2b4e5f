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

#ifndef REFEXP_SEMISUP_HPP_
#define REFEXP_SEMISUP_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "refexp/dataset.hpp"
#include "refexp/evaluation.hpp"
#include "refexp/training.hpp"

namespace refexp {

struct SemiSupConfig {
  TrainingConfig generator;
  TrainingConfig retrain;
  // Members are trained with `ensemble_seeds` when given, else generator.seed + 1, + 2, ...
  std::size_t ensemble_size = 2;
  std::vector<std::uint64_t> ensemble_seeds;
  BeamConfig beam;
  CandidateMode filter_mode = CandidateMode::kGt;
  EvalConfig eval;
  // Retrain starting from the generator's weights instead of a fresh init.
  bool warm_start = false;
  std::size_t vocab_min_count = kDefaultMinCount;
};

// Throws std::invalid_argument on an empty ensemble or repeated member seeds.
void validate(const SemiSupConfig& config);
std::vector<std::uint64_t> member_seeds(const SemiSupConfig& config);

// One top-beam caption per box, in input order (D_bb+auto).
std::vector<RefExample> auto_caption(const SpeakerModel& generator, const Vocabulary& vocab, const Dataset& d,
                                     std::span<const BoxOnly> boxes, const BeamConfig& beam);

// Keeps a caption only if every member picks a box with IoU > 0.5 against
// its region. Order preserving.
std::vector<RefExample> filter_generated(std::span<const SpeakerModel> ensemble, const Vocabulary& vocab,
                                         const Dataset& d, std::span<const RefExample> captions, CandidateMode mode,
                                         const EvalConfig& eval);

struct BootstrapReport {
  std::size_t bb = 0;
  std::size_t bb_auto = 0;
  std::size_t filtered = 0;
  double retention = 0.0;
  bool zero_retention = false;
  EvalReport baseline;
  EvalReport retrained;

  nlohmann::json to_json() const;
};

struct BootstrapResult {
  SpeakerModel generator;
  SpeakerModel retrained;
  std::vector<SpeakerModel> ensemble;
  std::vector<RefExample> captions;
  std::vector<RefExample> filtered;
  Vocabulary vocab;
  BootstrapReport report;
};

// `labeled` plus the box-only records of `source`; scenes missing from
// `labeled` are copied, shared scene ids must describe the same scene.
Dataset with_unlabeled(Dataset labeled, const Dataset& source);

// Labeled data is the train split of `d`; box-only data is d.unlabeled.
BootstrapResult bootstrap(const SemiSupConfig& config, const Dataset& d, Split eval_split);

}  // namespace refexp

#endif  // REFEXP_SEMISUP_HPP_
