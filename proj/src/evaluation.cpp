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

#include "refexp/evaluation.hpp"

#include <map>
#include <optional>
#include <stdexcept>

#include "refexp/comprehension.hpp"
#include "refexp/grammar.hpp"
#include "refexp/hash.hpp"
#include "refexp/parallel.hpp"
#include "refexp/rng.hpp"

namespace refexp {

std::string_view to_string(CandidateMode m) { return m == CandidateMode::kGt ? "gt" : "proposal"; }
std::string_view to_string(DescriptionMode m) { return m == DescriptionMode::kGt ? "gt" : "gen"; }

std::optional<CandidateMode> parse_candidate_mode(std::string_view s) {
  if (s == "gt") return CandidateMode::kGt;
  if (s == "proposal" || s == "synthetic") return CandidateMode::kProposal;
  return std::nullopt;
}

bool hit_at_1(const RankedCase& c) {
  if (c.candidates.empty()) return false;
  if (c.scores.size() != c.candidates.size()) throw std::invalid_argument("hit_at_1: score count mismatch");
  return iou(c.candidates[argmax_first(c.scores)], c.truth) > 0.5;
}

double precision_at_1(std::span<const RankedCase> cases) {
  if (cases.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& c : cases) hits += hit_at_1(c) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(cases.size());
}

bool oracle_listener_hit(const Scene& scene, const Region& target, std::span<const std::string> words) {
  try {
    const auto found = oracle_resolve(scene, words);
    return found.size() == 1 && found.front().same_box(target);
  } catch (const std::invalid_argument&) {
    return false;
  }
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  for (auto c : {CandidateMode::kGt, CandidateMode::kProposal})
    for (auto d : {DescriptionMode::kGt, DescriptionMode::kGen}) {
      const EvalCell& e = cell(c, d);
      const std::string key = std::string(to_string(c)) + "/" + std::string(to_string(d));
      j["grid"][key] = {{"p1", e.p1()}, {"hits", e.hits}, {"total", e.total}, {"empty_candidates", e.empty_candidates}};
    }
  j["count"] = count;
  j["mean_gt_length"] = mean_gt_length;
  j["mean_gen_length"] = mean_gen_length;
  j["oracle_listener"] = oracle_listener;
  return j;
}

ProposalSet scene_proposals(const Scene& scene, const EvalConfig& config) {
  return generate_proposals(scene, config.proposals, derive_seed(config.proposal_seed, {fnv1a64(scene.id)}));
}

std::map<const Scene*, ProposalSet> proposal_map(const Dataset& d, const EvalConfig& config) {
  std::map<const Scene*, ProposalSet> out;
  for (const auto& s : d.scenes()) out.emplace(&s, scene_proposals(s, config));
  return out;
}

std::vector<EvalInput> eval_inputs(const Dataset& d, Split split) {
  std::vector<EvalInput> out;
  for (const auto* ex : d.split(split)) out.push_back({&d.scene(ex->scene_id), ex->region, ex->words});
  return out;
}

std::vector<std::string> generate_words(const SpeakerModel& model, const Vocabulary& vocab, const Scene& scene,
                                        const Region& region, const BeamConfig& beam) {
  const auto hyps = beam_search(model, scene, region, beam);
  if (hyps.empty()) return {};
  return decode(vocab, hyps.front().expression);
}

namespace {

struct ExampleOutcome {
  std::array<std::array<int, 2>, 2> hit{};
  std::array<bool, 2> empty{};
  std::size_t gen_length = 0;
  bool oracle = false;
};

struct Plan {
  bool gt_candidates = true;
  bool proposal_candidates = true;
  bool gt_descriptions = true;
  bool gen_descriptions = true;
};

std::vector<ExampleOutcome> run(const SpeakerModel& model, const Vocabulary& vocab, std::span<const EvalInput> inputs,
                                const EvalConfig& config, const Plan& plan) {
  std::map<const Scene*, ProposalSet> proposals;
  if (plan.proposal_candidates)
    for (const auto& in : inputs)
      if (!proposals.count(in.scene)) proposals.emplace(in.scene, scene_proposals(*in.scene, config));

  std::vector<ExampleOutcome> out(inputs.size());
  parallel_for(inputs.size(), [&](std::size_t i) {
    const EvalInput& in = inputs[i];
    ExampleOutcome& o = out[i];
    std::array<std::optional<Expression>, 2> desc;
    if (plan.gt_descriptions) desc[0] = encode(vocab, in.words);
    if (plan.gen_descriptions) {
      const auto hyps = beam_search(model, *in.scene, in.region, config.beam);
      if (!hyps.empty()) {
        desc[1] = hyps.front().expression;
        o.gen_length = hyps.front().expression.word_count();
        o.oracle = oracle_listener_hit(*in.scene, in.region, decode(vocab, *desc[1]));
      }
    }
    for (int c = 0; c < 2; ++c) {
      if (c == 0 && !plan.gt_candidates) continue;
      if (c == 1 && !plan.proposal_candidates) continue;
      const std::vector<Region> cands = c == 0 ? in.scene->object_regions() : proposals.at(in.scene).regions;
      if (cands.empty()) {
        o.empty[c] = true;
        continue;
      }
      for (int d = 0; d < 2; ++d) {
        if (!desc[d]) continue;
        const Comprehension r = comprehend(model, *in.scene, *desc[d], cands);
        o.hit[c][d] = iou(r.region, in.region) > 0.5 ? 1 : 0;
      }
    }
  });
  return out;
}

}  // namespace

EvalReport evaluate(const SpeakerModel& model, const Vocabulary& vocab, std::span<const EvalInput> inputs,
                    const EvalConfig& config) {
  const auto outcomes = run(model, vocab, inputs, config, Plan{});
  EvalReport r;
  r.count = inputs.size();
  std::size_t gt_len = 0, gen_len = 0, oracle = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& o = outcomes[i];
    for (int c = 0; c < 2; ++c)
      for (int d = 0; d < 2; ++d) {
        r.cells[c][d].total += 1;
        r.cells[c][d].hits += static_cast<std::size_t>(o.hit[c][d]);
        if (o.empty[c]) r.cells[c][d].empty_candidates += 1;
      }
    gt_len += inputs[i].words.size();
    gen_len += o.gen_length;
    oracle += o.oracle ? 1 : 0;
  }
  if (r.count > 0) {
    const double n = static_cast<double>(r.count);
    r.mean_gt_length = static_cast<double>(gt_len) / n;
    r.mean_gen_length = static_cast<double>(gen_len) / n;
    r.oracle_listener = static_cast<double>(oracle) / n;
  }
  return r;
}

double precision_at_1(const SpeakerModel& model, const Vocabulary& vocab, std::span<const EvalInput> inputs,
                      CandidateMode candidates, DescriptionMode descriptions, const EvalConfig& config) {
  if (inputs.empty()) return 0.0;
  Plan plan;
  plan.gt_candidates = candidates == CandidateMode::kGt;
  plan.proposal_candidates = !plan.gt_candidates;
  plan.gt_descriptions = descriptions == DescriptionMode::kGt;
  plan.gen_descriptions = !plan.gt_descriptions;
  const auto outcomes = run(model, vocab, inputs, config, plan);
  std::size_t hits = 0;
  for (const auto& o : outcomes)
    hits += static_cast<std::size_t>(o.hit[static_cast<int>(candidates)][static_cast<int>(descriptions)]);
  return static_cast<double>(hits) / static_cast<double>(inputs.size());
}

double oracle_listener_accuracy(const SpeakerModel& model, const Vocabulary& vocab,
                                std::span<const EvalInput> inputs, const BeamConfig& beam) {
  if (inputs.empty()) return 0.0;
  std::vector<char> hit(inputs.size(), 0);
  parallel_for(inputs.size(), [&](std::size_t i) {
    hit[i] = oracle_listener_hit(*inputs[i].scene, inputs[i].region,
                                 generate_words(model, vocab, *inputs[i].scene, inputs[i].region, beam));
  });
  std::size_t n = 0;
  for (char h : hit) n += h ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(inputs.size());
}

}  // namespace refexp
