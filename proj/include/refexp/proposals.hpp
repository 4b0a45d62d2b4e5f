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

#ifndef REFEXP_PROPOSALS_HPP_
#define REFEXP_PROPOSALS_HPP_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "refexp/scene.hpp"

namespace refexp {

// Intersection over union of two valid boxes.
double iou(const Region& a, const Region& b);

// Synthetic stand-in for a class-agnostic box proposer followed by a
// classifier: jittered copies of every ground-truth box plus uniform
// distractors, each with a noisy category label and a confidence score.
struct ProposalConfig {
  // Std-dev of centre shifts (relative to box extent) and of log-scale changes.
  double jitter = 0.12;
  std::size_t per_object = 3;
  std::size_t distractors = 4;
  // Probability that a proposal derived from an object gets a wrong label.
  double label_noise = 0.1;
  // Proposals scoring below this are discarded.
  double score_threshold = 0.3;
};

struct ProposalSet {
  std::vector<Region> regions;
};

ProposalSet generate_proposals(const Scene& scene, const ProposalConfig& config, std::uint64_t seed);

// Fraction of scene objects with at least one proposal at IoU > 0.5.
double proposal_recall(const Scene& scene, const ProposalSet& proposals);

}  // namespace refexp

#endif  // REFEXP_PROPOSALS_HPP_
