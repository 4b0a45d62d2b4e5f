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

#include "refexp/semisup.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "refexp/comprehension.hpp"
#include "refexp/parallel.hpp"

namespace refexp {

void validate(const SemiSupConfig& c) {
  validate(c.generator);
  validate(c.retrain);
  if (c.ensemble_size < 1) throw std::invalid_argument("semisup: ensemble must have at least one member");
  if (!c.ensemble_seeds.empty() && c.ensemble_seeds.size() != c.ensemble_size)
    throw std::invalid_argument("semisup: ensemble_seeds must list one seed per member");
  const auto seeds = member_seeds(c);
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw std::invalid_argument("semisup: ensemble member seeds must be distinct");
  if (c.vocab_min_count < 1) throw std::invalid_argument("semisup: vocab_min_count must be >= 1");
}

std::vector<std::uint64_t> member_seeds(const SemiSupConfig& c) {
  if (!c.ensemble_seeds.empty()) return c.ensemble_seeds;
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < c.ensemble_size; ++i) out.push_back(c.generator.seed + 1 + i);
  return out;
}

std::vector<RefExample> auto_caption(const SpeakerModel& generator, const Vocabulary& vocab, const Dataset& d,
                                     std::span<const BoxOnly> boxes, const BeamConfig& beam) {
  std::vector<RefExample> out(boxes.size());
  parallel_for(boxes.size(), [&](std::size_t i) {
    const BoxOnly& b = boxes[i];
    out[i] = {b.id, b.scene_id, b.region, generate_words(generator, vocab, d.scene(b.scene_id), b.region, beam),
              Split::kTrain};
  });
  return out;
}

std::vector<RefExample> filter_generated(std::span<const SpeakerModel> ensemble, const Vocabulary& vocab,
                                         const Dataset& d, std::span<const RefExample> captions, CandidateMode mode,
                                         const EvalConfig& eval) {
  if (ensemble.empty()) throw std::invalid_argument("filter_generated: empty ensemble");
  std::vector<char> keep(captions.size(), 0);
  parallel_for(captions.size(), [&](std::size_t i) {
    const RefExample& ex = captions[i];
    const Scene& scene = d.scene(ex.scene_id);
    const std::vector<Region> cands =
        mode == CandidateMode::kGt ? scene.object_regions() : scene_proposals(scene, eval).regions;
    if (cands.empty()) return;
    const Expression e = encode(vocab, ex.words);
    for (const auto& m : ensemble)
      if (iou(comprehend(m, scene, e, cands).region, ex.region) <= 0.5) return;
    keep[i] = 1;
  });
  std::vector<RefExample> out;
  for (std::size_t i = 0; i < captions.size(); ++i)
    if (keep[i]) out.push_back(captions[i]);
  return out;
}

nlohmann::json BootstrapReport::to_json() const {
  return {{"bb", bb},
          {"bb_auto", bb_auto},
          {"filtered", filtered},
          {"retention", retention},
          {"zero_retention", zero_retention},
          {"baseline", baseline.to_json()},
          {"retrained", retrained.to_json()}};
}

Dataset with_unlabeled(Dataset labeled, const Dataset& source) {
  for (const auto& s : source.scenes()) {
    const Scene* have = labeled.find_scene(s.id);
    if (!have) labeled.add_scene(s);
    else if (!(*have == s)) throw std::invalid_argument("scene " + s.id + " differs between the two datasets");
  }
  labeled.unlabeled.insert(labeled.unlabeled.end(), source.unlabeled.begin(), source.unlabeled.end());
  return labeled;
}

BootstrapResult bootstrap(const SemiSupConfig& config, const Dataset& d, Split eval_split) {
  validate(config);
  std::vector<RefExample> labeled;
  for (const auto* ex : d.split(Split::kTrain)) labeled.push_back(*ex);
  if (labeled.empty()) throw std::invalid_argument("bootstrap: no labeled training examples");
  for (const auto& b : d.unlabeled)
    for (const auto& ex : labeled)
      if (ex.scene_id == b.scene_id && ex.region.same_box(b.region))
        throw std::invalid_argument("bootstrap: box-only record " + b.id + " is also labeled (" + ex.id + ")");

  const auto corpus = d.train_corpus();
  Vocabulary vocab = build_vocabulary(corpus, config.vocab_min_count);

  TrainOptions opts;
  std::map<const Scene*, ProposalSet> props;
  if (config.generator.negative_strategy == NegativeStrategy::kHardProposal ||
      config.retrain.negative_strategy == NegativeStrategy::kHardProposal) {
    props = proposal_map(d, config.eval);
    opts.proposals = &props;
  }

  const auto labeled_examples = make_examples(d, labeled, vocab);
  SpeakerModel generator = train(config.generator, labeled_examples, vocab, opts).model;

  std::vector<RefExample> captions = auto_caption(generator, vocab, d, d.unlabeled, config.beam);
  std::vector<SpeakerModel> ensemble;
  std::vector<RefExample> filtered;
  if (!captions.empty()) {
    for (auto seed : member_seeds(config)) {
      TrainingConfig member = config.generator;
      member.seed = seed;
      ensemble.push_back(train(member, labeled_examples, vocab, opts).model);
    }
    filtered = filter_generated(ensemble, vocab, d, captions, config.filter_mode, config.eval);
  }

  std::vector<RefExample> union_set = labeled;
  union_set.insert(union_set.end(), filtered.begin(), filtered.end());
  const auto union_examples = make_examples(d, union_set, vocab);
  TrainOptions retrain_opts = opts;
  if (config.warm_start) retrain_opts.initial = &generator;
  SpeakerModel retrained = train(config.retrain, union_examples, vocab, retrain_opts).model;

  BootstrapReport report;
  report.bb = d.unlabeled.size();
  report.bb_auto = captions.size();
  report.filtered = filtered.size();
  report.retention = captions.empty() ? 0.0 : static_cast<double>(filtered.size()) / static_cast<double>(captions.size());
  report.zero_retention = filtered.empty();
  const auto inputs = eval_inputs(d, eval_split);
  report.baseline = evaluate(generator, vocab, inputs, config.eval);
  report.retrained = evaluate(retrained, vocab, inputs, config.eval);

  return {std::move(generator), std::move(retrained), std::move(ensemble), std::move(captions),
          std::move(filtered),  std::move(vocab),     std::move(report)};
}

}  // namespace refexp
