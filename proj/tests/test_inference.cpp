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


#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "refexp/beam_search.hpp"
#include "refexp/comprehension.hpp"
#include "refexp/dataset.hpp"
#include "refexp/doctor.hpp"
#include "refexp/evaluation.hpp"
#include "refexp/proposals.hpp"
#include "refexp/rng.hpp"

using namespace refexp;

namespace {

Region box(double x0, double y0, double x1, double y1) { return Region{x0, y0, x1, y1, {}, {}}; }

// Counts unit cells; exact for integer corners.
double grid_iou(const Region& a, const Region& b) {
  int inter = 0, uni = 0;
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) {
      const double cx = x + 0.5, cy = y + 0.5;
      const bool ia = cx > a.x_tl && cx < a.x_br && cy > a.y_tl && cy < a.y_br;
      const bool ib = cx > b.x_tl && cx < b.x_br && cy > b.y_tl && cy < b.y_br;
      inter += ia && ib;
      uni += ia || ib;
    }
  return double(inter) / double(uni);
}

Region random_box(Rng& rng) {
  const double x0 = double(uniform_index(rng, 20)), y0 = double(uniform_index(rng, 20));
  const double x1 = x0 + 1 + double(uniform_index(rng, 24 - std::size_t(x0) - 1));
  const double y1 = y0 + 1 + double(uniform_index(rng, 24 - std::size_t(y0) - 1));
  return box(x0, y0, x1, y1);
}

Scene toy_scene() {
  return Scene("toy", 64, 64,
               {SceneObject{Category::kBall, Color::kRed, SizeClass::kSmall, box(2, 2, 18, 18)},
                SceneObject{Category::kBall, Color::kBlue, SizeClass::kSmall, box(24, 4, 40, 20)},
                SceneObject{Category::kBox, Color::kRed, SizeClass::kLarge, box(30, 30, 56, 56)}});
}

// One word, a one-unit LSTM whose sign flips after that word, and an output
// layer that turns the sign into a certain choice.
SpeakerModel certain_model() {
  ModelDims d;
  d.embed = 1;
  d.hidden = 1;
  d.vocab = 4;
  d.featurizer.patch = 8;
  d.featurizer.channels = 1;
  d.featurizer.feat = 2;
  SpeakerModel m = SpeakerModel::create(d, 0, 1);
  for (double& x : m.params.value(m.wv).data) x = 0.0;
  for (double& x : m.params.value(m.wh).data) x = 0.0;
  m.params.value(m.wx).data = {0.0, 0.0, 0.0, 1.0};
  m.params.value(m.gate_b).data = {50.0, -50.0, 50.0, 0.0};
  m.params.value(m.embed).data = {5.0, 0.0, 0.0, -5.0};
  m.params.value(m.out_w).data = {0.0, -1000.0, 0.0, 1000.0};
  m.params.value(m.out_b).data = {0.0, 0.0, 0.0, 0.0};
  return m;
}

}  // namespace

TEST_CASE("iou examples") {
  CHECK(iou(box(0, 0, 2, 2), box(0, 0, 2, 2)) == 1.0);
  CHECK(iou(box(0, 0, 2, 2), box(3, 3, 5, 5)) == 0.0);
  CHECK(iou(box(0, 0, 2, 2), box(2, 0, 4, 2)) == 0.0);
  CHECK(iou(box(0, 0, 2, 2), box(1, 0, 3, 2)) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("iou agrees with cell counting on random boxes") {
  Rng rng = make_rng(17, {});
  for (int i = 0; i < 1000; ++i) {
    const Region a = random_box(rng), b = random_box(rng);
    CHECK(iou(a, b) == doctest::Approx(grid_iou(a, b)).epsilon(1e-12));
    CHECK(iou(a, b) == iou(b, a));
  }
}

TEST_CASE("beam search decoding contracts") {
  SUBCASE("beam 1 is greedy") {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
      const RandomSpeaker rs = random_speaker(seed, 3);
      const ConditionedSpeaker sp(rs.model, rs.visual);
      BeamConfig cfg;
      cfg.beam_size = 1;
      cfg.max_len = 5;
      const auto beam = beam_search(sp, rs.model.dims.vocab, cfg);
      const Hypothesis g = greedy_decode(sp, rs.model.dims.vocab, 5);
      REQUIRE_FALSE(beam.empty());
      CHECK(beam.front().expression == g.expression);
      CHECK(beam.front().log_prob == doctest::Approx(g.log_prob).epsilon(1e-12));
    }
  }
  SUBCASE("wide beam finds the enumerated argmax") {
    for (std::uint64_t seed = 100; seed < 200; ++seed) {
      const RandomSpeaker rs = random_speaker(seed, 2);
      const ConditionedSpeaker sp(rs.model, rs.visual);
      const auto all = enumerate_sentences(sp, rs.model.dims.vocab, 3);
      double best = -1e300;
      for (const auto& h : all) best = std::max(best, h.log_prob);
      BeamConfig cfg;
      cfg.beam_size = 8;
      cfg.max_len = 3;
      const auto beam = beam_search(sp, rs.model.dims.vocab, cfg);
      REQUIRE_FALSE(beam.empty());
      CHECK(beam.front().log_prob == best);
      CHECK(sp.score(beam.front().expression) == doctest::Approx(beam.front().log_prob).epsilon(1e-12));
    }
  }
  SUBCASE("a certain path comes back with log-prob zero") {
    const SpeakerModel m = certain_model();
    VisualVector v;
    v.region_feat = {0, 0};
    v.scene_feat = {0, 0};
    const ConditionedSpeaker sp(m, v);
    BeamConfig cfg;
    cfg.max_len = 4;
    const auto beam = beam_search(sp, 4, cfg);
    REQUIRE_FALSE(beam.empty());
    CHECK(beam.front().expression == Expression{{kBos, 3, kEos}});
    CHECK(beam.front().log_prob == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("output hygiene") {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
      const RandomSpeaker rs = random_speaker(seed, 3);
      const ConditionedSpeaker sp(rs.model, rs.visual);
      BeamConfig cfg;
      cfg.beam_size = 4;
      cfg.max_len = 3;
      const auto beam = beam_search(sp, rs.model.dims.vocab, cfg);
      for (std::size_t i = 0; i < beam.size(); ++i) {
        const auto& t = beam[i].expression.tokens;
        CHECK(t.front() == kBos);
        CHECK(t.back() == kEos);
        CHECK(t.size() >= 3);
        CHECK(t.size() <= 5);
        for (std::size_t k = 1; k + 1 < t.size(); ++k) CHECK(t[k] >= kReservedTokens);
        if (i > 0) CHECK(beam[i - 1].log_prob >= beam[i].log_prob);
      }
      CHECK(beam_search(sp, rs.model.dims.vocab, cfg).front().expression == beam.front().expression);
    }
    const RandomSpeaker rs = random_speaker(1, 2);
    BeamConfig bad;
    bad.beam_size = 0;
    CHECK_THROWS_AS(beam_search(ConditionedSpeaker(rs.model, rs.visual), rs.model.dims.vocab, bad),
                    std::invalid_argument);
  }
}

TEST_CASE("top-1 log-prob does not drop as the beam widens") {
  std::size_t violations = 0, checked = 0;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    const RandomSpeaker rs = random_speaker(seed, 3);
    const ConditionedSpeaker sp(rs.model, rs.visual);
    double prev = -1e300;
    for (std::size_t b = 1; b <= 6; ++b) {
      BeamConfig cfg;
      cfg.beam_size = b;
      cfg.max_len = 4;
      const double top = beam_search(sp, rs.model.dims.vocab, cfg).front().log_prob;
      if (top < prev) ++violations;
      prev = std::max(prev, top);
      ++checked;
    }
  }
  INFO("violations " << violations << " of " << checked);
  CHECK(violations == 0);
}

TEST_CASE("proposal generator") {
  const Scene s = toy_scene();
  SUBCASE("noise-free proposals are the ground truth") {
    ProposalConfig c;
    c.jitter = 0;
    c.label_noise = 0;
    c.per_object = 1;
    c.distractors = 0;
    const ProposalSet p = generate_proposals(s, c, 3);
    REQUIRE(p.regions.size() == s.objects.size());
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
      CHECK(p.regions[i].same_box(s.objects[i].box));
      CHECK(p.regions[i].category_label == s.objects[i].category);
    }
  }
  SUBCASE("a threshold of one discards everything") {
    ProposalConfig c;
    c.score_threshold = 1.0;
    CHECK(generate_proposals(s, c, 3).regions.empty());
  }
  SUBCASE("boxes stay in the scene with scores in range") {
    for (std::uint64_t seed = 0; seed < 50; ++seed)
      for (const auto& r : generate_proposals(s, ProposalConfig{}, seed).regions) {
        CHECK(r.valid());
        CHECK(r.within(64, 64));
        REQUIRE(r.score.has_value());
        CHECK(*r.score >= 0.0);
        CHECK(*r.score <= 1.0);
      }
    CHECK(generate_proposals(s, ProposalConfig{}, 4).regions == generate_proposals(s, ProposalConfig{}, 4).regions);
  }
  SUBCASE("default recall over 1000 scenes") {
    const GenConfig g;
    std::size_t hit = 0, total = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      const Scene sc = generate_scene(g, seed);
      const ProposalSet p = generate_proposals(sc, ProposalConfig{}, seed + 7);
      hit += std::size_t(std::lround(proposal_recall(sc, p) * double(sc.objects.size())));
      total += sc.objects.size();
    }
    const double recall = double(hit) / double(total);
    INFO("recall " << recall);
    CHECK(recall >= 0.95);
  }
}

TEST_CASE("comprehension ranks by raw likelihood") {
  const Scene s = toy_scene();
  TinyFixture fx = tiny_fixture(2);
  const std::vector<Region> cands = s.object_regions();

  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const TinyFixture f = tiny_fixture(seed);
    const Comprehension c = comprehend(f.model, s, f.expression, cands);
    std::vector<double> direct;
    for (const auto& r : cands) direct.push_back(score_expression(f.model, s, r, f.expression));
    CHECK(c.scores == direct);
    CHECK(c.chosen == argmax_first(direct));
    CHECK(c.region.same_box(cands[c.chosen]));
    // Uniform prior: the posterior argmax is the likelihood argmax.
    CHECK(argmax_first(posterior(direct)) == c.chosen);
    double z = 0;
    for (double p : posterior(direct)) z += p;
    CHECK(z == doctest::Approx(1.0).epsilon(1e-12));
    // Positive rescaling leaves the choice alone.
    std::vector<double> scaled = direct;
    for (double& x : scaled) x *= 3.5;
    CHECK(argmax_first(scaled) == c.chosen);
    CHECK(c.ranking.front() == c.chosen);
    CHECK(c.ranking.size() == cands.size());
  }

  SUBCASE("labels are ignored") {
    std::vector<Region> labeled = cands;
    for (auto& r : labeled) {
      r.category_label = Category::kCone;
      r.score = 0.1;
    }
    CHECK(comprehend(fx.model, s, fx.expression, labeled).scores ==
          comprehend(fx.model, s, fx.expression, cands).scores);
  }
  SUBCASE("ties go to the earliest candidate") {
    for (double& x : fx.model.params.value(fx.model.wv).data) x = 0.0;
    CHECK(comprehend(fx.model, s, fx.expression, cands).chosen == 0);
    CHECK(argmax_first(std::vector<double>{1.0, 2.0, 2.0}) == 1);
    CHECK(rank_scores(std::vector<double>{1.0, 2.0, 2.0}) == std::vector<std::size_t>{1, 2, 0});
  }
  SUBCASE("single candidate") {
    const std::vector<Region> one = {cands[2]};
    CHECK(comprehend(fx.model, s, fx.expression, one).chosen == 0);
    CHECK_THROWS(comprehend(fx.model, s, fx.expression, std::vector<Region>{}));
  }
}

TEST_CASE("precision at 1") {
  SUBCASE("perfect ranker") {
    std::vector<RankedCase> cases;
    for (int i = 0; i < 10; ++i) {
      RankedCase c;
      c.candidates = {box(0, 0, 10, 10), box(20, 20, 30, 30), box(40, 0, 50, 10)};
      c.truth = c.candidates[std::size_t(i % 3)];
      c.scores = {0, 0, 0};
      c.scores[std::size_t(i % 3)] = 1;
      cases.push_back(c);
    }
    CHECK(precision_at_1(cases) == 1.0);
  }
  SUBCASE("uniformly random ranker over k candidates") {
    Rng rng = make_rng(99, {});
    for (std::size_t k : {2u, 3u, 5u}) {
      std::vector<RankedCase> cases;
      const std::size_t n = 20000;
      for (std::size_t i = 0; i < n; ++i) {
        RankedCase c;
        for (std::size_t j = 0; j < k; ++j) {
          c.candidates.push_back(box(double(12 * j), 0, double(12 * j + 10), 10));
          c.scores.push_back(uniform01(rng));
        }
        c.truth = c.candidates[uniform_index(rng, k)];
        cases.push_back(c);
      }
      const double p = 1.0 / double(k);
      const double sigma = std::sqrt(p * (1 - p) / double(n));
      CHECK(std::abs(precision_at_1(cases) - p) < 3 * sigma);
    }
  }
  SUBCASE("IoU threshold is strict") {
    RankedCase c;
    c.candidates = {box(0, 0, 3, 1)};
    c.scores = {0};
    c.truth = box(1, 0, 3, 1);  // IoU 2/3
    CHECK(hit_at_1(c));
    c.truth = box(0, 0, 6, 1);  // IoU exactly 0.5
    CHECK_FALSE(hit_at_1(c));
  }
}

TEST_CASE("oracle listener") {
  const Scene s = toy_scene();
  CHECK_FALSE(oracle_listener_hit(s, s.objects[0].box, std::vector<std::string>{"ball"}));
  CHECK(oracle_listener_hit(s, s.objects[0].box, std::vector<std::string>{"red", "ball"}));
  CHECK(oracle_listener_hit(s, s.objects[2].box, std::vector<std::string>{"box"}));
  CHECK_FALSE(oracle_listener_hit(s, s.objects[0].box, std::vector<std::string>{"blue", "ball"}));
  // Out-of-grammar output is a miss, not an error.
  CHECK_FALSE(oracle_listener_hit(s, s.objects[0].box, std::vector<std::string>{"<unk>", "ball"}));
  CHECK_FALSE(oracle_listener_hit(s, s.objects[0].box, std::vector<std::string>{"red", "red"}));

  CorpusConfig c;
  c.sizes = {100, 20, 100};
  const Dataset d = generate_corpus(c, 8);
  for (const auto& in : eval_inputs(d, Split::kTest)) CHECK(oracle_listener_hit(*in.scene, in.region, in.words));
}

TEST_CASE("evaluation report shape") {
  CorpusConfig c;
  c.sizes = {60, 10, 30};
  const Dataset d = generate_corpus(c, 3);
  const Vocabulary vocab = build_vocabulary(d.train_corpus(), 1);
  ModelDims dims;
  dims.embed = 6;
  dims.hidden = 6;
  dims.vocab = vocab.size();
  dims.featurizer.feat = 4;
  dims.featurizer.channels = 2;
  dims.featurizer.patch = 8;
  const SpeakerModel m = SpeakerModel::create(dims, vocab.hash(), 5);
  const auto inputs = eval_inputs(d, Split::kTest);
  const EvalConfig cfg;
  const EvalReport r = evaluate(m, vocab, inputs, cfg);
  CHECK(r.count == 30);
  for (auto cm : {CandidateMode::kGt, CandidateMode::kProposal})
    for (auto dm : {DescriptionMode::kGt, DescriptionMode::kGen}) {
      const EvalCell& cell = r.cell(cm, dm);
      CHECK(cell.total == 30);
      CHECK(cell.p1() >= 0.0);
      CHECK(cell.p1() <= 1.0);
      CHECK(precision_at_1(m, vocab, inputs, cm, dm, cfg) == cell.p1());
    }
  CHECK(r.oracle_listener == oracle_listener_accuracy(m, vocab, inputs, cfg.beam));
  const auto j = r.to_json();
  CHECK(j["grid"].contains("gt/gt"));
  CHECK(j["grid"].contains("proposal/gen"));
  CHECK(j["count"] == 30);

  ::setenv("REFEXP_THREADS", "3", 1);
  const EvalReport t = evaluate(m, vocab, inputs, cfg);
  ::unsetenv("REFEXP_THREADS");
  CHECK(t.to_json() == j);
}
