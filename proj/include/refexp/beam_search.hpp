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

#ifndef REFEXP_BEAM_SEARCH_HPP_
#define REFEXP_BEAM_SEARCH_HPP_

#include <cstddef>
#include <vector>

#include "refexp/scene.hpp"
#include "refexp/speaker.hpp"
#include "refexp/vocabulary.hpp"

namespace refexp {

struct BeamConfig {
  std::size_t beam_size = 3;
  // Words per sentence; <eos> is forced once a hypothesis reaches this length.
  std::size_t max_len = 10;
  // Ranks finished sentences by log-prob / word count. Off by default.
  bool length_normalize = false;

  friend bool operator==(const BeamConfig&, const BeamConfig&) = default;
};

struct Hypothesis {
  Expression expression;
  double log_prob = 0.0;
};

// Beam search from <bos>. <bos> and <unk> are never emitted and every
// sentence has at least one word. The beam keeps `beam_size` unfinished
// hypotheses. A sentence ending in <eos> is kept when it ranks in the
// step's top `beam_size` candidates, or when the step pruned no
// unfinished candidate. Results are sorted by score, ties by token ids.
std::vector<Hypothesis> beam_search(const ConditionedSpeaker& speaker, std::size_t vocab_size,
                                    const BeamConfig& config);
std::vector<Hypothesis> beam_search(const SpeakerModel& model, const Scene& scene, const Region& region,
                                    const BeamConfig& config);

// Most probable next token at every step, same token restrictions as beam_search.
Hypothesis greedy_decode(const ConditionedSpeaker& speaker, std::size_t vocab_size, std::size_t max_len);

}  // namespace refexp

#endif  // REFEXP_BEAM_SEARCH_HPP_
