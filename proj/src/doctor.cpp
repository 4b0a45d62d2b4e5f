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

#include "refexp/doctor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "refexp/rng.hpp"

namespace refexp {

TinyFixture tiny_fixture(std::uint64_t seed) {
  std::vector<SceneObject> objects = {
      {Category::kBall, Color::kRed, SizeClass::kSmall, Region{4, 6, 20, 22, {}, {}}},
      {Category::kBall, Color::kBlue, SizeClass::kLarge, Region{30, 20, 56, 46, {}, {}}},
  };
  Scene scene("tiny", 64, 64, std::move(objects));
  Vocabulary vocab({"ball", "red", "blue", "leftmost"});
  ModelDims dims;
  dims.embed = 4;
  dims.hidden = 4;
  dims.vocab = vocab.size();
  dims.featurizer.feat = 4;
  dims.featurizer.channels = 2;
  dims.featurizer.patch = 8;
  SpeakerModel model = SpeakerModel::create(dims, vocab.hash(), seed);
  const std::vector<std::string> words = {"leftmost", "red", "ball"};
  return {scene, vocab, std::move(model), encode(vocab, words), scene.objects[0].box, scene.objects[1].box};
}

GradCheckReport check_objective_gradients(Objective objective, std::uint64_t seed, const GradCheckOptions& options) {
  TinyFixture fx = tiny_fixture(seed);
  Rng rng = make_rng(seed, {0x6d61736b});
  const auto masks = make_dropout_masks(fx.model.dims, fx.expression.tokens.size() - 1, 0.5, rng);
  FeatureCache cache;
  const LossContext ctx{&cache, &masks};

  double margin = 0.1;
  if (objective == Objective::kMmiMaxMargin) {
    // Put the hinge well inside its active branch.
    Tape probe(&fx.model.params);
    const NodeId pos = ml_loss_on_tape(probe, fx.model, fx.scene, fx.target, fx.expression, ctx);
    const NodeId neg = ml_loss_on_tape(probe, fx.model, fx.scene, fx.negative, fx.expression, ctx);
    margin = std::max(0.0, probe.scalar(neg) - probe.scalar(pos)) + 1.0;
  }
  const std::vector<Region> negatives = {fx.negative};
  const LossBuilder f = [&](Tape& tape) {
    switch (objective) {
      case Objective::kMl: return ml_loss_on_tape(tape, fx.model, fx.scene, fx.target, fx.expression, ctx);
      case Objective::kMmiSoftmax:
        return mmi_softmax_on_tape(tape, fx.model, fx.scene, fx.target, fx.expression, negatives, ctx);
      case Objective::kMmiMaxMargin:
        return mmi_maxmargin_on_tape(tape, fx.model, fx.scene, fx.target, fx.expression, fx.negative, margin, 1.0,
                                     ctx);
    }
    throw std::logic_error("unreachable");
  };
  return grad_check(f, fx.model.params, options);
}

std::vector<Hypothesis> enumerate_sentences(const ConditionedSpeaker& speaker, std::size_t vocab_size,
                                            std::size_t max_len) {
  std::vector<TokenId> words;
  for (TokenId t = kReservedTokens; t < vocab_size; ++t) words.push_back(t);
  std::vector<Hypothesis> out;
  std::vector<std::vector<TokenId>> frontier{{kBos}};
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<std::vector<TokenId>> next;
    for (const auto& prefix : frontier)
      for (TokenId w : words) {
        auto s = prefix;
        s.push_back(w);
        next.push_back(s);
        s.push_back(kEos);
        Expression e{s};
        out.push_back({e, speaker.score(e)});
      }
    frontier = std::move(next);
  }
  return out;
}

RandomSpeaker random_speaker(std::uint64_t seed, std::size_t words) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < words; ++i) names.push_back("w" + std::to_string(i));
  const Vocabulary vocab(names);
  ModelDims dims;
  dims.embed = 3;
  dims.hidden = 4;
  dims.vocab = vocab.size();
  dims.featurizer.feat = 3;
  dims.featurizer.channels = 2;
  dims.featurizer.patch = 8;
  SpeakerModel model = SpeakerModel::create(dims, vocab.hash(), seed);
  Rng rng = make_rng(seed, {0x7370});
  // Sharpen some models so the search has real decisions to make.
  const double gain = 1.0 + 4.0 * uniform01(rng);
  for (double& v : model.params.value(model.out_w).data) v *= gain;
  for (double& v : model.params.value(model.out_b).data) v = gain * (2.0 * uniform01(rng) - 1.0);
  VisualVector visual;
  for (std::size_t i = 0; i < dims.featurizer.feat; ++i) {
    visual.region_feat.push_back(2.0 * uniform01(rng) - 1.0);
    visual.scene_feat.push_back(2.0 * uniform01(rng) - 1.0);
  }
  for (double& v : visual.loc) v = uniform01(rng);
  return {std::move(model), std::move(visual)};
}

bool run_doctor(const DoctorOptions& options, std::ostream& out) {
  bool ok = true;
  char buf[200];
  for (auto o : {Objective::kMl, Objective::kMmiSoftmax, Objective::kMmiMaxMargin}) {
    const GradCheckReport r = check_objective_gradients(o, options.seed);
    std::snprintf(buf, sizeof buf, "%s grad check %s: %zu entries, max rel error %.3g\n", r.passed ? "PASS" : "FAIL",
                  std::string(to_string(o)).c_str(), r.checked, r.max_rel_error);
    out << buf;
    ok = ok && r.passed;
  }

  std::size_t exact = 0;
  for (std::size_t i = 0; i < options.beam_models; ++i) {
    const RandomSpeaker rs = random_speaker(derive_seed(options.seed, {0xbea, i}));
    const ConditionedSpeaker speaker(rs.model, rs.visual);
    auto all = enumerate_sentences(speaker, rs.model.dims.vocab, 3);
    const auto best = std::max_element(all.begin(), all.end(), [](const Hypothesis& a, const Hypothesis& b) {
      if (a.log_prob != b.log_prob) return a.log_prob < b.log_prob;
      return a.expression.tokens > b.expression.tokens;
    });
    BeamConfig cfg;
    cfg.beam_size = options.beam_size;
    cfg.max_len = 3;
    const auto found = beam_search(speaker, rs.model.dims.vocab, cfg);
    if (!found.empty() && found.front().expression == best->expression && found.front().log_prob == best->log_prob)
      ++exact;
  }
  const bool beam_ok = exact == options.beam_models;
  std::snprintf(buf, sizeof buf, "%s beam search vs enumeration: %zu/%zu exact (beam %zu, max_len 3)\n",
                beam_ok ? "PASS" : "FAIL", exact, options.beam_models, options.beam_size);
  out << buf;
  return ok && beam_ok;
}

}  // namespace refexp
