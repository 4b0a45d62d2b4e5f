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
#include <cstdlib>
#include <set>

#include "refexp/dataset.hpp"
#include "refexp/doctor.hpp"
#include "refexp/proposals.hpp"
#include "refexp/rng.hpp"
#include "refexp/training.hpp"

using namespace refexp;

namespace {

Region box(double x0, double y0, double x1, double y1) { return Region{x0, y0, x1, y1, {}, {}}; }

// Removes every path from the visual input to the gates, so all regions score alike.
void blind(SpeakerModel& m) {
  for (double& x : m.params.value(m.wv).data) x = 0.0;
}

double lse(std::vector<double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double s = 0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

Scene crowd() {
  return Scene("c", 64, 64,
               {SceneObject{Category::kBall, Color::kRed, SizeClass::kSmall, box(2, 2, 18, 18)},
                SceneObject{Category::kBall, Color::kBlue, SizeClass::kSmall, box(22, 2, 38, 18)},
                SceneObject{Category::kBall, Color::kRed, SizeClass::kLarge, box(40, 36, 63, 60)},
                SceneObject{Category::kBox, Color::kRed, SizeClass::kSmall, box(2, 40, 18, 56)},
                SceneObject{Category::kCone, Color::kWhite, SizeClass::kSmall, box(44, 2, 60, 18)}});
}

const Dataset& small_dataset() {
  static const Dataset d = [] {
    CorpusConfig c;
    c.sizes = {240, 40, 40};
    return generate_corpus(c, 21);
  }();
  return d;
}

TrainingConfig quick_config(Objective o) {
  TrainingConfig c;
  c.objective = o;
  c.max_iterations = 20;
  c.lr_half_every = 10;
  c.batch_size = 4;
  c.embed = 8;
  c.hidden = 8;
  c.feat = 8;
  c.conv_channels = 2;
  c.patch = 8;
  return c;
}

}  // namespace

TEST_CASE("ml loss of a uniform model is L ln|V|") {
  TinyFixture fx = tiny_fixture(1);
  for (double& x : fx.model.params.value(fx.model.out_w).data) x = 0.0;
  const TrainExample ex{&fx.scene, fx.target, fx.expression};
  const double V = double(fx.vocab.size());
  const LossResult r = ml_loss(fx.model, std::span(&ex, 1));
  // Three words and the end token.
  CHECK(r.loss == doctest::Approx(4.0 * std::log(V)).epsilon(1e-12));

  // Summed over the batch.
  const std::vector<TrainExample> two = {ex, TrainExample{&fx.scene, fx.negative, encode(fx.vocab, std::vector<std::string>{"blue"})}};
  CHECK(ml_loss(fx.model, two).loss == doctest::Approx(6.0 * std::log(V)).epsilon(1e-12));
  CHECK_THROWS(ml_loss(fx.model, std::span<const TrainExample>{}));
}

TEST_CASE("softmax loss identities") {
  SUBCASE("identical scores give ln(n)") {
    TinyFixture fx = tiny_fixture(3);
    blind(fx.model);
    const std::vector<Region> one = {fx.negative};
    CHECK(mmi_softmax_loss(fx.model, fx.scene, fx.target, fx.expression, one).loss ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    const std::vector<Region> two = {fx.negative, box(40, 2, 60, 18)};
    CHECK(mmi_softmax_loss(fx.model, fx.scene, fx.target, fx.expression, two).loss ==
          doctest::Approx(std::log(3.0)).epsilon(1e-12));
  }
  SUBCASE("direct formula on random models") {
    const Scene s = crowd();
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      TinyFixture fx = tiny_fixture(seed);
      Rng rng = make_rng(seed, {});
      const std::size_t t = uniform_index(rng, s.objects.size());
      std::vector<Region> negs;
      for (std::size_t i = 0; i < s.objects.size(); ++i)
        if (i != t) negs.push_back(s.objects[i].box);
      std::vector<double> scores = {score_expression(fx.model, s, s.objects[t].box, fx.expression)};
      for (const auto& n : negs) scores.push_back(score_expression(fx.model, s, n, fx.expression));
      const double want = -(scores[0] - lse(scores));
      const double got = mmi_softmax_loss(fx.model, s, s.objects[t].box, fx.expression, negs).loss;
      CHECK(std::abs(got - want) < 1e-9);
      CHECK(got >= 0.0);
    }
  }
  SUBCASE("invalid negatives") {
    TinyFixture fx = tiny_fixture(4);
    const std::vector<Region> self = {fx.target};
    CHECK_THROWS_AS(mmi_softmax_loss(fx.model, fx.scene, fx.target, fx.expression, self), std::invalid_argument);
    CHECK_THROWS_AS(mmi_softmax_loss(fx.model, fx.scene, fx.target, fx.expression, std::vector<Region>{}),
                    std::invalid_argument);
  }
}

TEST_CASE("max-margin loss cases") {
  SUBCASE("equal scores pay the margin") {
    TinyFixture fx = tiny_fixture(5);
    blind(fx.model);
    const double nll = -score_expression(fx.model, fx.scene, fx.target, fx.expression);
    CHECK(mmi_maxmargin_loss(fx.model, fx.scene, fx.target, fx.expression, fx.negative, 0.1, 1.0).loss ==
          doctest::Approx(nll + 0.1).epsilon(1e-12));
    CHECK(mmi_maxmargin_loss(fx.model, fx.scene, fx.target, fx.expression, fx.negative, 0.0, 1.0).loss ==
          doctest::Approx(nll).epsilon(1e-12));
    CHECK(mmi_maxmargin_loss(fx.model, fx.scene, fx.target, fx.expression, fx.negative, 0.1, 0.0).loss ==
          doctest::Approx(nll).epsilon(1e-12));
  }
  SUBCASE("direct formula on random models") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      TinyFixture fx = tiny_fixture(seed);
      const double pos = score_expression(fx.model, fx.scene, fx.target, fx.expression);
      const double neg = score_expression(fx.model, fx.scene, fx.negative, fx.expression);
      for (double M : {0.0, 0.1, 1.0, 5.0})
        for (double w : {0.5, 1.0, 2.0}) {
          const double want = -pos + w * std::max(0.0, M - pos + neg);
          const double got = mmi_maxmargin_loss(fx.model, fx.scene, fx.target, fx.expression, fx.negative, M, w).loss;
          CHECK(got == doctest::Approx(want).epsilon(1e-12));
        }
    }
  }
  SUBCASE("satisfied margin leaves only the likelihood term") {
    TinyFixture fx = tiny_fixture(6);
    const double pos = score_expression(fx.model, fx.scene, fx.target, fx.expression);
    const double neg = score_expression(fx.model, fx.scene, fx.negative, fx.expression);
    const Region& better = pos >= neg ? fx.target : fx.negative;
    const Region& worse = pos >= neg ? fx.negative : fx.target;
    const double gap = std::abs(pos - neg);
    const double top = std::max(pos, neg);
    CHECK(mmi_maxmargin_loss(fx.model, fx.scene, better, fx.expression, worse, gap * 0.5, 1.0).loss ==
          doctest::Approx(-top).epsilon(1e-12));
  }
}

TEST_CASE("objective gradients match finite differences") {
  for (Objective o : {Objective::kMl, Objective::kMmiSoftmax, Objective::kMmiMaxMargin}) {
    const GradCheckReport r = check_objective_gradients(o, 1);
    INFO(to_string(o));
    CHECK(r.passed);
    CHECK(r.max_rel_error < 1e-4);
    CHECK(r.checked > 0);
  }
}

TEST_CASE("sample_negatives strategies") {
  const Scene s = crowd();
  const Region& target = s.objects[0].box;

  SUBCASE("easy_gt draws any other object") {
    const auto n = sample_negatives(NegativeStrategy::kEasyGt, s, target, nullptr, 10, 1);
    CHECK(n.size() == 4);
    for (const auto& r : n) CHECK_FALSE(r.same_box(target));
    const auto k2 = sample_negatives(NegativeStrategy::kEasyGt, s, target, nullptr, 2, 1);
    CHECK(k2.size() == 2);
    CHECK(k2 == sample_negatives(NegativeStrategy::kEasyGt, s, target, nullptr, 2, 1));
  }
  SUBCASE("hard_gt keeps the target's category") {
    const auto n = sample_negatives(NegativeStrategy::kHardGt, s, target, nullptr, 5, 3);
    CHECK(n.size() == 2);
    for (const auto& r : n) CHECK(s.objects[*s.find_object(r)].category == Category::kBall);
    // The box has no same-category partner.
    CHECK_THROWS_AS(sample_negatives(NegativeStrategy::kHardGt, s, s.objects[3].box, nullptr, 5, 3),
                    NoEligibleNegativesError);
    const auto fb = sample_negatives_or_easy(NegativeStrategy::kHardGt, s, s.objects[3].box, nullptr, 5, 3);
    CHECK(fb.size() == 4);
  }
  SUBCASE("exactly one same-category partner is returned regardless of k") {
    const Scene two("p", 64, 64,
                    {SceneObject{Category::kBar, Color::kRed, SizeClass::kSmall, box(2, 2, 30, 14)},
                     SceneObject{Category::kBar, Color::kRed, SizeClass::kLarge, box(2, 30, 40, 48)},
                     SceneObject{Category::kCone, Color::kRed, SizeClass::kSmall, box(44, 2, 60, 18)}});
    for (std::size_t k : {1u, 5u}) {
      const auto n = sample_negatives(NegativeStrategy::kHardGt, two, two.objects[0].box, nullptr, k, 9);
      REQUIRE(n.size() == 1);
      CHECK(n[0].same_box(two.objects[1].box));
    }
  }
  SUBCASE("hard_proposal uses labels and IoU") {
    ProposalSet ps;
    Region same_label_far = box(22, 2, 38, 18);
    same_label_far.category_label = Category::kBall;
    Region same_label_near = box(3, 3, 18, 18);
    same_label_near.category_label = Category::kBall;
    Region other_label = box(40, 36, 63, 60);
    other_label.category_label = Category::kBox;
    ps.regions = {same_label_far, same_label_near, other_label};
    const auto n = sample_negatives(NegativeStrategy::kHardProposal, s, target, &ps, 5, 1);
    REQUIRE(n.size() == 1);
    CHECK(n[0].same_box(same_label_far));
    CHECK_THROWS_AS(sample_negatives(NegativeStrategy::kHardProposal, s, target, nullptr, 5, 1),
                    std::invalid_argument);
  }
  SUBCASE("different seeds permute the pool") {
    std::set<std::vector<double>> firsts;
    for (std::uint64_t seed = 0; seed < 40; ++seed)
      firsts.insert({sample_negatives(NegativeStrategy::kEasyGt, s, target, nullptr, 1, seed)[0].x_tl});
    CHECK(firsts.size() == 4);
  }
}

TEST_CASE("training config validation") {
  TrainingConfig c;
  CHECK_NOTHROW(validate(c));
  c.negatives = 0;
  CHECK_THROWS_AS(validate(c), std::invalid_argument);
  c = {};
  c.margin = -1;
  CHECK_THROWS_AS(validate(c), std::invalid_argument);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(validate(c), std::invalid_argument);
  c = {};
  c.dropout = 1.0;
  CHECK_THROWS_AS(validate(c), std::invalid_argument);
  CHECK(parse_objective("mmi_maxmargin") == Objective::kMmiMaxMargin);
  CHECK(parse_negative_strategy("hard_proposal") == NegativeStrategy::kHardProposal);
  CHECK_FALSE(parse_objective("mle").has_value());
}

TEST_CASE("train contracts") {
  const Dataset& d = small_dataset();
  const Vocabulary vocab = build_vocabulary(d.train_corpus());
  const auto examples = make_examples(d, Split::kTrain, vocab);
  REQUIRE(examples.size() == 240);

  SUBCASE("zero learning rate leaves parameters untouched") {
    TrainingConfig c = quick_config(Objective::kMmiMaxMargin);
    c.lr = 0.0;
    const TrainResult r = train(c, examples, vocab);
    const SpeakerModel fresh = SpeakerModel::create(model_dims(c, vocab.size()), vocab.hash(), c.seed);
    CHECK(r.model.params == fresh.params);
    CHECK(r.history.records.size() == c.max_iterations);
  }
  SUBCASE("objectives share one parameter count") {
    std::set<std::size_t> counts;
    for (Objective o : {Objective::kMl, Objective::kMmiSoftmax, Objective::kMmiMaxMargin}) {
      TrainingConfig c = quick_config(o);
      c.max_iterations = 2;
      counts.insert(train(c, examples, vocab).model.parameter_count());
    }
    CHECK(counts.size() == 1);
  }
  SUBCASE("bit-reproducible and independent of the thread count") {
    TrainingConfig c = quick_config(Objective::kMmiSoftmax);
    const TrainResult a = train(c, examples, vocab);
    const TrainResult b = train(c, examples, vocab);
    CHECK(a.model.params == b.model.params);
    ::setenv("REFEXP_THREADS", "3", 1);
    const TrainResult t = train(c, examples, vocab);
    ::unsetenv("REFEXP_THREADS");
    CHECK(a.model.params == t.model.params);
    for (std::size_t i = 0; i < a.history.records.size(); ++i)
      CHECK(a.history.records[i].loss == t.history.records[i].loss);
    c.seed = 2;
    CHECK_FALSE(train(c, examples, vocab).model.params == a.model.params);
  }
  SUBCASE("learning rate halves on schedule") {
    TrainingConfig c = quick_config(Objective::kMl);
    const TrainResult r = train(c, examples, vocab);
    CHECK(r.history.records[0].lr == 0.01);
    CHECK(r.history.records[9].lr == 0.01);
    CHECK(r.history.records[10].lr == 0.005);
    CHECK(r.history.to_csv().rfind("iteration,loss,lr,val_p1,seconds\n", 0) == 0);
  }
  SUBCASE("hard proposal negatives need proposals") {
    TrainingConfig c = quick_config(Objective::kMmiMaxMargin);
    c.negative_strategy = NegativeStrategy::kHardProposal;
    CHECK_THROWS_AS(train(c, examples, vocab), std::invalid_argument);
  }
  SUBCASE("validation callback runs once per epoch") {
    TrainingConfig c = quick_config(Objective::kMl);
    c.max_iterations = 130;  // 60 iterations per epoch
    TrainOptions opts;
    std::size_t calls = 0;
    opts.validate = [&](const SpeakerModel&) {
      ++calls;
      return 0.5;
    };
    const TrainResult r = train(c, examples, vocab, opts);
    CHECK(calls == 3);
    CHECK(r.history.records.back().val_p1.has_value());
  }
}

TEST_CASE("training on the default corpus halves the loss within 2000 iterations") {
  const Dataset d = generate_corpus(CorpusConfig{}, 1);
  const Vocabulary vocab = build_vocabulary(d.train_corpus());
  const auto examples = make_examples(d, Split::kTrain, vocab);
  REQUIRE(examples.size() >= 3000);
  TrainingConfig c;
  c.max_iterations = 2000;
  const TrainResult r = train(c, examples, vocab);
  const double early = r.history.mean_loss(0, 10);
  const double late = r.history.mean_loss(1900, 2000);
  INFO("early " << early << " late " << late);
  CHECK(late <= 0.5 * early);
}
