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

#include <cmath>
#include <functional>

#include "refexp/featurizer.hpp"
#include "refexp/rng.hpp"
#include "refexp/speaker.hpp"

using namespace refexp;

namespace {

Region box(double x0, double y0, double x1, double y1) { return Region{x0, y0, x1, y1, {}, {}}; }

Tensor constant_raster(std::size_t h, std::size_t w, std::array<double, 3> c) {
  Tensor t(Shape{h, w, 3}, 0.0);
  for (std::size_t i = 0; i < h * w; ++i)
    for (std::size_t k = 0; k < 3; ++k) t.data[i * 3 + k] = c[k];
  return t;
}

Scene two_ball_scene() {
  return Scene("t", 64, 64,
               {SceneObject{Category::kBall, Color::kRed, SizeClass::kSmall, box(4, 4, 20, 20)},
                SceneObject{Category::kBall, Color::kBlue, SizeClass::kLarge, box(30, 28, 56, 54)}});
}

ModelDims tiny_dims(std::size_t vocab, std::size_t hidden = 4) {
  ModelDims d;
  d.embed = 3;
  d.hidden = hidden;
  d.vocab = vocab;
  d.featurizer.patch = 8;
  d.featurizer.channels = 2;
  d.featurizer.feat = 4;
  return d;
}

// Every word sequence over the non-reserved ids with length in [1, L].
void for_each_sentence(std::size_t vocab, std::size_t L, const std::function<void(const Expression&)>& f) {
  std::vector<TokenId> words;
  std::function<void()> rec = [&]() {
    if (!words.empty()) {
      Expression e;
      e.tokens.push_back(kBos);
      e.tokens.insert(e.tokens.end(), words.begin(), words.end());
      e.tokens.push_back(kEos);
      f(e);
    }
    if (words.size() == L) return;
    for (TokenId w = kReservedTokens; w < vocab; ++w) {
      words.push_back(w);
      rec();
      words.pop_back();
    }
  };
  rec();
}

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("location_vector follows the box geometry") {
  auto eq = [](std::array<double, 5> a, std::array<double, 5> b) {
    for (std::size_t i = 0; i < 5; ++i)
      if (std::abs(a[i] - b[i]) > 1e-15) return false;
    return true;
  };
  CHECK(eq(location_vector(box(0, 0, 100, 100), 100, 100), {0, 0, 1, 1, 1}));
  CHECK(eq(location_vector(box(0, 0, 50, 50), 100, 100), {0, 0, 0.5, 0.5, 0.25}));
  CHECK(eq(location_vector(box(50, 25, 150, 75), 200, 100), {0.25, 0.25, 0.75, 0.75, 0.25}));
  CHECK_THROWS_AS(location_vector(box(10, 10, 10, 20), 100, 100), std::invalid_argument);
}

TEST_CASE("warp_region keeps aspect ratio and pads with the crop mean") {
  SUBCASE("square box is a pure resize") {
    Tensor r(Shape{8, 8, 3}, 0.0);
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) r.data[(y * 8 + x) * 3] = double(y * 8 + x);
    const Tensor p = warp_region(r, box(0, 0, 8, 8), 8);
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) CHECK(p.data[y * 8 + x] == double(y * 8 + x));
  }
  SUBCASE("2:1 box gets a quarter of padding rows above and below") {
    // Left half of the crop is 1, right half 0; mean 0.5 goes to the margins.
    Tensor r(Shape{16, 32, 3}, 0.0);
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x) r.data[(y * 32 + x) * 3] = 1.0;
    const Tensor p = warp_region(r, box(0, 0, 32, 16), 8);
    for (std::size_t row = 0; row < 8; ++row) {
      const bool pad = row < 2 || row >= 6;
      for (std::size_t x = 0; x < 8; ++x) {
        const double v = p.data[row * 8 + x];
        if (pad) CHECK(v == 0.5);
        else CHECK(v == (x < 4 ? 1.0 : 0.0));
      }
    }
  }
  SUBCASE("constant crop gives a constant patch") {
    const Tensor r = constant_raster(20, 20, {0.2, 0.4, 0.6});
    const Tensor p = warp_region(r, box(3, 5, 17, 9), 16);
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t i = 0; i < 256; ++i) CHECK(p.data[k * 256 + i] == doctest::Approx(0.2 * double(k + 1)));
  }
}

TEST_CASE("extract_features is pure and zero-preserving") {
  FeaturizerDims d;
  Rng rng = make_rng(3, {});
  ParamStore ps;
  const auto layout = add_featurizer_params(ps, d, rng);
  CHECK_FALSE(ps.trainable(layout.conv_w));
  CHECK(ps.trainable(layout.fc_w));
  const Tensor patch = warp_region(two_ball_scene().raster, box(4, 4, 20, 20), d.patch);
  CHECK(extract_features(ps, layout, patch) == extract_features(ps, layout, patch));
  CHECK(extract_features(ps, layout, patch).size() == d.feat);

  for (ParamId id : {layout.conv_b, layout.fc_b})
    for (double& v : ps.value(id).data) v = 0.0;
  const auto z = extract_features(ps, layout, Tensor(Shape{3, d.patch, d.patch}, 0.0));
  for (double v : z) CHECK(v == 0.0);

  // The tape path agrees with the direct one.
  Tape tape(&ps);
  const NodeId n = extract_features(tape, layout, patch);
  const auto direct = extract_features(ps, layout, patch);
  for (std::size_t i = 0; i < d.feat; ++i) CHECK(tape.value(n)[i] == doctest::Approx(direct[i]).epsilon(1e-12));
}

TEST_CASE("visual_vector layout") {
  const Scene s = two_ball_scene();
  FeaturizerDims d;
  d.feat = 32;
  Rng rng = make_rng(5, {});
  ParamStore ps;
  const auto layout = add_featurizer_params(ps, d, rng);
  const VisualVector full = visual_vector(ps, layout, s, s.full_box());
  CHECK(full.region_feat == full.scene_feat);
  CHECK(full.loc == std::array<double, 5>{0, 0, 1, 1, 1});
  CHECK(full.size() == 69);
  CHECK(full.concat().size() == 69);

  const VisualVector a = visual_vector(ps, layout, s, s.objects[0].box);
  const VisualVector b = visual_vector(ps, layout, s, s.objects[1].box);
  CHECK(a.loc != b.loc);
  CHECK(a.scene_feat == b.scene_feat);
}

TEST_CASE("LSTM step matches a hand computation with two hidden units") {
  ModelDims d = tiny_dims(4, 2);
  d.embed = 1;
  SpeakerModel m = SpeakerModel::create(d, 0, 1);
  VisualVector v;
  v.region_feat.assign(d.featurizer.feat, 0.0);
  v.scene_feat.assign(d.featurizer.feat, 0.0);
  v.loc = {0.5, 0, 0, 0, 0};
  // Only loc[0] feeds the gates; word embeddings are fixed numbers.
  for (double& x : m.params.value(m.wv).data) x = 0.0;
  for (std::size_t r = 0; r < 8; ++r) m.params.value(m.wv).at(r, 2 * d.featurizer.feat) = 0.1 * double(r + 1);
  for (std::size_t r = 0; r < 8; ++r) m.params.value(m.wx).at(r, 0) = -0.05 * double(r);
  for (double& x : m.params.value(m.wh).data) x = 0.2;
  for (double& x : m.params.value(m.gate_b).data) x = 0.0;
  m.params.value(m.embed).data = {0.3, -0.7, 1.1, 0.9};
  m.params.value(m.out_w).data = {1, 0, 0, 1, 1, 1, -1, 2};
  m.params.value(m.out_b).data = {0.0, 0.1, 0.2, 0.3};

  auto hand = [&](const std::array<double, 2>& h, const std::array<double, 2>& c, double x) {
    std::array<double, 8> g{};
    for (std::size_t r = 0; r < 8; ++r) g[r] = 0.1 * double(r + 1) * 0.5 - 0.05 * double(r) * x + 0.2 * (h[0] + h[1]);
    std::array<double, 2> h2{}, c2{};
    for (std::size_t j = 0; j < 2; ++j) {
      c2[j] = sigm(g[2 + j]) * c[j] + sigm(g[j]) * std::tanh(g[6 + j]);
      h2[j] = sigm(g[4 + j]) * std::tanh(c2[j]);
    }
    return std::pair{h2, c2};
  };

  ConditionedSpeaker cs(m, v);
  const StepOutput o1 = cs.step(cs.initial_state(), kBos);
  auto [h1, c1] = hand({0, 0}, {0, 0}, 0.3);
  CHECK(o1.state.hidden[0] == doctest::Approx(h1[0]).epsilon(1e-12));
  CHECK(o1.state.hidden[1] == doctest::Approx(h1[1]).epsilon(1e-12));
  CHECK(o1.state.cell[0] == doctest::Approx(c1[0]).epsilon(1e-12));

  const StepOutput o2 = cs.step(o1.state, 3);
  auto [h2, c2] = hand(h1, c1, 0.9);
  CHECK(o2.state.hidden[0] == doctest::Approx(h2[0]).epsilon(1e-12));
  CHECK(o2.state.cell[1] == doctest::Approx(c2[1]).epsilon(1e-12));

  const std::array<double, 4> logits = {h2[0] + 0.0, h2[1] + 0.1, h2[0] + h2[1] + 0.2, -h2[0] + 2 * h2[1] + 0.3};
  double z = 0;
  for (double l : logits) z += std::exp(l);
  for (std::size_t k = 0; k < 4; ++k) CHECK(o2.log_probs[k] == doctest::Approx(logits[k] - std::log(z)).epsilon(1e-12));
}

TEST_CASE("step distributions are normalized") {
  const Scene s = two_ball_scene();
  const SpeakerModel m = SpeakerModel::create(tiny_dims(7), 0, 9);
  const VisualVector v = visual_vector(m.params, m.featurizer, s, s.objects[0].box);
  ConditionedSpeaker cs(m, v);
  LstmState st = cs.initial_state();
  for (TokenId w : {kBos, TokenId{3}, TokenId{5}, TokenId{4}}) {
    StepOutput o = cs.step(st, w);
    double total = 0;
    for (double lp : o.log_probs) {
      CHECK(lp <= 0.0);
      total += std::exp(lp);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    st = o.state;
  }
  CHECK_THROWS_AS(cs.step(st, 7), std::out_of_range);

  SUBCASE("zero output layer is uniform") {
    SpeakerModel z = m;
    for (double& x : z.params.value(z.out_w).data) x = 0.0;
    const StepOutput o = ConditionedSpeaker(z, v).step(ConditionedSpeaker(z, v).initial_state(), kBos);
    for (double lp : o.log_probs) CHECK(lp == doctest::Approx(-std::log(7.0)).epsilon(1e-12));

    // L words plus the end token, each at ln|V|.
    Expression e{{kBos, 3, 4, 5, kEos}};
    CHECK(ConditionedSpeaker(z, v).score(e) == doctest::Approx(-4.0 * std::log(7.0)).epsilon(1e-12));
  }
}

TEST_CASE("dropout masks") {
  const ModelDims d = tiny_dims(6, 8);
  Rng rng = make_rng(1, {});
  const auto masks = make_dropout_masks(d, 3, 0.5, rng);
  CHECK(masks.size() == 3);
  for (const auto& m : masks) {
    CHECK(m.embed.size() == d.embed);
    CHECK(m.output.size() == d.hidden);
    for (double x : m.output.data) CHECK((x == 0.0 || x == 2.0));
  }
  Rng rng0 = make_rng(1, {});
  for (const auto& m : make_dropout_masks(d, 2, 0.0, rng0))
    for (double x : m.output.data) CHECK(x == 1.0);
  CHECK_THROWS_AS(make_dropout_masks(d, 1, 1.0, rng), std::invalid_argument);
}

TEST_CASE("expression probabilities form a sub-distribution") {
  const Scene s = two_ball_scene();
  const std::size_t V = 5, L = 4;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SpeakerModel m = SpeakerModel::create(tiny_dims(V), 0, seed);
    const VisualVector v = visual_vector(m.params, m.featurizer, s, s.objects[1].box);
    double total = 0;
    for_each_sentence(V, L, [&](const Expression& e) { total += std::exp(ConditionedSpeaker(m, v).score(e)); });
    CHECK(total <= 1.0 + 1e-12);

    // With <bos> and <unk> suppressed, the empty sentence, finished sentences
    // and unfinished length-L prefixes account for all the mass.
    m.params.value(m.out_b)[kBos] = -1e9;
    m.params.value(m.out_b)[kUnk] = -1e9;
    ConditionedSpeaker cs(m, v);
    double finished = std::exp(cs.step(cs.initial_state(), kBos).log_probs[kEos]), open = 0;
    for_each_sentence(V, L, [&](const Expression& e) {
      const double lp = cs.score(e);
      finished += std::exp(lp);
      if (e.word_count() == L) {
        LstmState st = cs.initial_state();
        for (std::size_t t = 0; t < L; ++t) st = cs.step(st, e.tokens[t]).state;
        // Mass of this prefix continuing past L words.
        const double stop = std::exp(cs.step(st, e.tokens[L]).log_probs[kEos]);
        open += std::exp(lp) / stop * (1.0 - stop);
      }
    });
    CHECK(finished + open == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("score_expression agrees across entry points") {
  const Scene s = two_ball_scene();
  const SpeakerModel m = SpeakerModel::create(tiny_dims(6), 0, 4);
  const Expression e{{kBos, 3, 5, 4, kEos}};
  const double direct = score_expression(m, s, s.objects[0].box, e);
  CHECK(direct < 0.0);
  const VisualVector v = visual_vector(m.params, m.featurizer, s, s.objects[0].box);
  CHECK(ConditionedSpeaker(m, v).score(e) == direct);

  // Sum of per-step log-probabilities of the realized tokens.
  ConditionedSpeaker cs(m, v);
  LstmState st = cs.initial_state();
  double acc = 0;
  for (std::size_t t = 0; t + 1 < e.tokens.size(); ++t) {
    StepOutput o = cs.step(st, e.tokens[t]);
    acc += o.log_probs[e.tokens[t + 1]];
    st = o.state;
  }
  CHECK(acc == doctest::Approx(direct).epsilon(1e-12));

  Tape tape(&m.params);
  const NodeId vis = visual_on_tape(tape, m.params, m.featurizer, s, s.objects[0].box);
  CHECK(tape.scalar(score_on_tape(tape, m, vis, e)) == doctest::Approx(direct).epsilon(1e-10));

  CHECK_THROWS(ConditionedSpeaker(m, v).score(Expression{{kBos, kEos}}));
  CHECK(score_expression(m, s, s.objects[0].box, e) == direct);
}

TEST_CASE("checkpoint round trip preserves the model") {
  const SpeakerModel m = SpeakerModel::create(tiny_dims(6), 77, 4);
  const SpeakerModel back = SpeakerModel::from_checkpoint(m.to_checkpoint(), 77);
  CHECK(back.params == m.params);
  CHECK(back.dims.vocab == m.dims.vocab);
  CHECK_THROWS(SpeakerModel::from_checkpoint(m.to_checkpoint(), 78));
}
