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

#ifndef REFEXP_COMPREHENSION_HPP_
#define REFEXP_COMPREHENSION_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "refexp/featurizer.hpp"
#include "refexp/scene.hpp"
#include "refexp/speaker.hpp"
#include "refexp/vocabulary.hpp"

namespace refexp {

struct Comprehension {
  std::size_t chosen = 0;
  Region region;
  // log p(S | R, I) per candidate, in candidate order.
  std::vector<double> scores;
  // Candidate indices, best first.
  std::vector<std::size_t> ranking;
};

// Index of the largest score; the earliest wins ties.
std::size_t argmax_first(std::span<const double> scores);
// Candidate order by descending score, ties by index.
std::vector<std::size_t> rank_scores(std::span<const double> scores);
// p(R | S, I) under a uniform prior over the candidates.
std::vector<double> posterior(std::span<const double> log_likelihoods);

// R* = argmax_R p(S | R, I). Candidate labels and scores are ignored.
Comprehension comprehend(const SpeakerModel& model, const Scene& scene, const Expression& e,
                         std::span<const Region> candidates);

}  // namespace refexp

#endif  // REFEXP_COMPREHENSION_HPP_
