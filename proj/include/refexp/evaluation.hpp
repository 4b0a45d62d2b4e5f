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

#ifndef REFEXP_EVALUATION_HPP_
#define REFEXP_EVALUATION_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "refexp/beam_search.hpp"
#include "refexp/dataset.hpp"
#include "refexp/proposals.hpp"
#include "refexp/speaker.hpp"

namespace refexp {

enum class CandidateMode { kGt, kProposal };
enum class DescriptionMode { kGt, kGen };

std::string_view to_string(CandidateMode m);
std::string_view to_string(DescriptionMode m);
std::optional<CandidateMode> parse_candidate_mode(std::string_view s);

struct EvalConfig {
  BeamConfig beam;
  ProposalConfig proposals;
  std::uint64_t proposal_seed = 7;

  friend bool operator==(const EvalConfig& a, const EvalConfig& b) {
    return a.beam == b.beam && a.proposal_seed == b.proposal_seed && a.proposals.jitter == b.proposals.jitter &&
           a.proposals.per_object == b.proposals.per_object && a.proposals.distractors == b.proposals.distractors &&
           a.proposals.label_noise == b.proposals.label_noise &&
           a.proposals.score_threshold == b.proposals.score_threshold;
  }
};

// One listener decision: scores over candidates, and the true box.
struct RankedCase {
  std::vector<Region> candidates;
  std::vector<double> scores;
  Region truth;
};

// Top-ranked candidate has IoU > 0.5 with the truth. Empty candidate lists fail.
bool hit_at_1(const RankedCase& c);
double precision_at_1(std::span<const RankedCase> cases);

// The oracle resolver maps `words` to exactly the target object.
// Out-of-grammar word sequences count as failures.
bool oracle_listener_hit(const Scene& scene, const Region& target, std::span<const std::string> words);

struct EvalCell {
  std::size_t hits = 0;
  std::size_t total = 0;
  std::size_t empty_candidates = 0;
  double p1() const { return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0; }
};

struct EvalReport {
  // cells[candidate mode][description mode]
  std::array<std::array<EvalCell, 2>, 2> cells{};
  std::size_t count = 0;
  double mean_gt_length = 0.0;
  double mean_gen_length = 0.0;
  double oracle_listener = 0.0;

  const EvalCell& cell(CandidateMode c, DescriptionMode d) const {
    return cells[static_cast<int>(c)][static_cast<int>(d)];
  }
  nlohmann::json to_json() const;
};

// Per-scene proposals, seeded by the scene id.
ProposalSet scene_proposals(const Scene& scene, const EvalConfig& config);
std::map<const Scene*, ProposalSet> proposal_map(const Dataset& d, const EvalConfig& config);

struct EvalInput {
  const Scene* scene = nullptr;
  Region region;
  std::vector<std::string> words;
};

std::vector<EvalInput> eval_inputs(const Dataset& d, Split split);

// The full 2x2 grid plus generation statistics.
EvalReport evaluate(const SpeakerModel& model, const Vocabulary& vocab, std::span<const EvalInput> inputs,
                    const EvalConfig& config);
// A single cell; cheaper than the whole grid.
double precision_at_1(const SpeakerModel& model, const Vocabulary& vocab, std::span<const EvalInput> inputs,
                      CandidateMode candidates, DescriptionMode descriptions, const EvalConfig& config);
double oracle_listener_accuracy(const SpeakerModel& model, const Vocabulary& vocab,
                                std::span<const EvalInput> inputs, const BeamConfig& beam);

// Top beam-search sentence for a region, as words.
std::vector<std::string> generate_words(const SpeakerModel& model, const Vocabulary& vocab, const Scene& scene,
                                        const Region& region, const BeamConfig& beam);

}  // namespace refexp

#endif  // REFEXP_EVALUATION_HPP_
