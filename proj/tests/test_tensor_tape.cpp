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
#include <limits>

#include "refexp/checkpoint.hpp"
#include "refexp/grad_check.hpp"
#include "refexp/optim.hpp"
#include "refexp/rng.hpp"
#include "refexp/tape.hpp"

using namespace refexp;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = scale * (2.0 * uniform01(rng) - 1.0);
  return t;
}

// Reduces a node to a scalar through a fixed random projection.
NodeId project(Tape& tape, NodeId x, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = tape.value(x).size();
  const NodeId w = tape.input(random_tensor({1, n}, rng));
  NodeId flat = x;
  if (tape.value(x).rank() != 1) flat = tape.slice(x, 0, n);
  return tape.affine(w, flat);
}

}  // namespace

TEST_CASE("tensor rejects inconsistent shapes") {
  CHECK_THROWS_AS(Tensor(Shape{2, 3}, std::vector<double>(5)), std::invalid_argument);
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), std::invalid_argument);
  CHECK(Tensor(Shape{2, 3}).size() == 6);
}

TEST_CASE("primitive values") {
  Tape tape;
  SUBCASE("sigmoid of zero") {
    const NodeId y = tape.sigmoid(tape.input(Tensor::vector({0.0})));
    CHECK(tape.value(y)[0] == 0.5);
  }
  SUBCASE("log-softmax-pick over equal logits") {
    const NodeId y = tape.log_softmax_pick(tape.input(Tensor::vector({1.0, 1.0})), 0);
    CHECK(tape.scalar(y) == doctest::Approx(std::log(0.5)).epsilon(1e-15));
  }
  SUBCASE("affine with identity weight") {
    Tensor eye(Shape{3, 3});
    for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    const Tensor x = Tensor::vector({1.5, -2.0, 0.25});
    const NodeId y = tape.affine(tape.input(eye), tape.input(x), tape.input(Tensor(Shape{3})));
    CHECK(tape.value(y) == x);
  }
  SUBCASE("log-softmax exponentiates to one") {
    Rng rng(3);
    const NodeId y = tape.log_softmax(tape.input(random_tensor({7}, rng, 20.0)));
    double s = 0.0;
    for (double v : tape.value(y).data) s += std::exp(v);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  SUBCASE("log-softmax is stable for large logits") {
    const NodeId y = tape.log_softmax(tape.input(Tensor::vector({1000.0, 1000.0})));
    CHECK(tape.value(y).all_finite());
    CHECK(tape.value(y)[0] == doctest::Approx(std::log(0.5)));
  }
}

TEST_CASE("shape mismatches name the op and shapes") {
  Tape tape;
  const NodeId a = tape.input(Tensor(Shape{3}));
  const NodeId b = tape.input(Tensor(Shape{4}));
  try {
    tape.add(a, b);
    FAIL("expected a shape error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("add") != std::string::npos);
    CHECK(msg.find("[3]") != std::string::npos);
    CHECK(msg.find("[4]") != std::string::npos);
  }
  CHECK_THROWS_AS(tape.affine(tape.input(Tensor(Shape{2, 5})), a), std::invalid_argument);
  CHECK_THROWS_AS(tape.mul(a, b), std::invalid_argument);
  CHECK_THROWS_AS(tape.embed(tape.input(Tensor(Shape{2, 3})), 2), std::invalid_argument);
  CHECK_THROWS_AS(tape.log_softmax_pick(a, 3), std::invalid_argument);
  CHECK_THROWS_AS(tape.dropout(a, Tensor(Shape{4})), std::invalid_argument);
}

TEST_CASE("backward basics") {
  ParamStore ps;
  const ParamId x = ps.add("x", Tensor::vector({3.0}));
  Tape tape(&ps);
  const NodeId xn = tape.param(x);
  const NodeId loss = tape.scale(tape.mul(xn, xn), 0.5);
  const Gradients g = tape.backward(loss);
  CHECK(g[x][0] == 3.0);
  SUBCASE("backward is pure") { CHECK(tape.backward(loss) == g); }
  SUBCASE("constant loss has zero gradient") {
    Tape t2(&ps);
    t2.param(x);
    const NodeId c = t2.input(Tensor::scalar(2.0));
    CHECK(t2.backward(c)[x][0] == 0.0);
  }
  SUBCASE("non-scalar loss is rejected") {
    Tape t2(&ps);
    const NodeId v = t2.input(Tensor(Shape{2}));
    CHECK_THROWS_AS(t2.backward(v), std::invalid_argument);
  }
  SUBCASE("frozen parameters receive no gradient") {
    ps.set_trainable(x, false);
    Tape t2(&ps);
    const NodeId xn2 = t2.param(x);
    CHECK(t2.backward(t2.mul(xn2, xn2))[x][0] == 0.0);
  }
}

TEST_CASE("grad_check on simple functions") {
  ParamStore ps;
  ps.add("x", Tensor::vector({2.0}));
  auto square = [](Tape& t) {
    const NodeId x = t.param(0);
    return t.mul(x, x);
  };
  const auto r = grad_check(square, ps);
  CHECK(r.passed);
  CHECK(r.checked == 1);
  CHECK(r.max_rel_error < 1e-6);
  CHECK(ps.value(0)[0] == 2.0);

  auto constant = [](Tape& t) {
    t.param(0);
    return t.input(Tensor::scalar(5.0));
  };
  CHECK(grad_check(constant, ps).passed);

  auto broken = [](Tape& t) {
    const NodeId x = t.param(0);
    return t.log_softmax_pick(t.concat(std::vector<NodeId>{x, t.input(Tensor::vector({std::log(0.0)}))}), 1);
  };
  const auto bad = grad_check(broken, ps);
  CHECK_FALSE(bad.passed);
  CHECK(bad.nonfinite > 0);
}

TEST_CASE("every primitive matches finite differences") {
  Rng rng(11);
  ParamStore ps;
  const ParamId a = ps.add("a", random_tensor({6}, rng));
  const ParamId b = ps.add("b", random_tensor({6}, rng));
  const ParamId w = ps.add("w", random_tensor({4, 6}, rng));
  const ParamId bias = ps.add("bias", random_tensor({4}, rng));
  const ParamId table = ps.add("table", random_tensor({5, 3}, rng));
  const ParamId img = ps.add("img", random_tensor({2, 6, 6}, rng));
  const ParamId kern = ps.add("kern", random_tensor({3, 2, 3, 3}, rng, 0.5));
  const ParamId kb = ps.add("kb", random_tensor({3}, rng, 0.1));
  Rng mrng(5);
  Tensor mask(Shape{6});
  for (double& v : mask.data) v = uniform01(mrng) < 0.5 ? 0.0 : 2.0;

  using Op = std::function<NodeId(Tape&)>;
  const std::vector<std::pair<const char*, Op>> ops = {
      {"affine", [&](Tape& t) { return t.affine(t.param(w), t.param(a), t.param(bias)); }},
      {"add", [&](Tape& t) { return t.add(t.param(a), t.param(b)); }},
      {"sub", [&](Tape& t) { return t.sub(t.param(a), t.param(b)); }},
      {"mul", [&](Tape& t) { return t.mul(t.param(a), t.param(b)); }},
      {"scale", [&](Tape& t) { return t.scale(t.param(a), -1.7); }},
      {"add_scalar", [&](Tape& t) { return t.add_scalar(t.param(a), 0.3); }},
      {"sigmoid", [&](Tape& t) { return t.sigmoid(t.param(a)); }},
      {"tanh", [&](Tape& t) { return t.tanh(t.param(a)); }},
      {"relu", [&](Tape& t) { return t.relu(t.param(a)); }},
      {"concat", [&](Tape& t) { return t.concat(std::vector<NodeId>{t.param(a), t.param(b), t.param(bias)}); }},
      {"slice", [&](Tape& t) { return t.slice(t.param(a), 2, 3); }},
      {"embed", [&](Tape& t) { return t.embed(t.param(table), 3); }},
      {"log_softmax", [&](Tape& t) { return t.log_softmax(t.param(a)); }},
      {"pick", [&](Tape& t) { return t.pick(t.param(a), 4); }},
      {"log_softmax_pick", [&](Tape& t) { return t.log_softmax_pick(t.param(a), 1); }},
      {"dropout", [&](Tape& t) { return t.dropout(t.param(a), mask); }},
      {"sum", [&](Tape& t) { return t.sum(std::vector<NodeId>{t.param(a), t.param(b), t.param(a)}); }},
      {"stack", [&](Tape& t) {
         return t.stack(std::vector<NodeId>{t.pick(t.param(a), 0), t.pick(t.param(b), 5)});
       }},
      {"logsumexp", [&](Tape& t) { return t.logsumexp(t.param(a)); }},
      {"conv2d", [&](Tape& t) { return t.conv2d(t.param(kern), t.param(kb), t.param(img)); }},
      {"avgpool2", [&](Tape& t) { return t.avgpool2(t.param(img)); }},
  };
  std::uint64_t s = 100;
  for (const auto& [name, op] : ops) {
    CAPTURE(name);
    const std::uint64_t seed = ++s;
    const auto r = grad_check([&](Tape& t) { return project(t, op(t), seed); }, ps);
    CHECK(r.passed);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("random LSTM cell loss matches finite differences") {
  Rng rng(21);
  const std::size_t H = 4, X = 3;
  ParamStore ps;
  const ParamId wx = ps.add("wx", random_tensor({4 * H, X}, rng));
  const ParamId wh = ps.add("wh", random_tensor({4 * H, H}, rng));
  const ParamId b = ps.add("b", random_tensor({4 * H}, rng));
  const ParamId out = ps.add("out", random_tensor({5, H}, rng));
  const Tensor x0 = random_tensor({X}, rng), x1 = random_tensor({X}, rng);
  auto f = [&](Tape& t) {
    NodeId h = t.input(Tensor(Shape{H})), c = t.input(Tensor(Shape{H}));
    std::vector<NodeId> terms;
    for (const Tensor* x : {&x0, &x1}) {
      const NodeId g = t.affine(t.param(wh), h, t.affine(t.param(wx), t.input(*x), t.param(b)));
      const NodeId i = t.sigmoid(t.slice(g, 0, H)), fg = t.sigmoid(t.slice(g, H, H));
      const NodeId o = t.sigmoid(t.slice(g, 2 * H, H)), gg = t.tanh(t.slice(g, 3 * H, H));
      c = t.add(t.mul(fg, c), t.mul(i, gg));
      h = t.mul(o, t.tanh(c));
      terms.push_back(t.log_softmax_pick(t.affine(t.param(out), h), terms.size() + 1));
    }
    return t.scale(t.sum(terms), -1.0);
  };
  const auto r = grad_check(f, ps);
  CHECK(r.passed);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("clip_global_norm") {
  ParamStore ps;
  ps.add("p", Tensor::vector({0.0, 0.0}));
  Gradients g = Gradients::zeros_like(ps);
  g[0] = Tensor::vector({3.0, 4.0});
  CHECK(clip_global_norm(g, 10.0) == g);
  g[0] = Tensor::vector({6.0, 8.0});
  const Gradients c = clip_global_norm(g, 5.0);
  CHECK(c[0][0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(c[0][1] == doctest::Approx(4.0).epsilon(1e-15));

  SUBCASE("norm is global across tensors") {
    ParamStore two;
    two.add("a", Tensor::vector({0.0}));
    two.add("b", Tensor::vector({0.0}));
    Gradients h = Gradients::zeros_like(two);
    h[0] = Tensor::vector({12.0});
    h[1] = Tensor::vector({16.0});
    const Gradients hc = clip_global_norm(h, 10.0);
    CHECK(hc[0][0] == doctest::Approx(6.0).epsilon(1e-15));
    CHECK(hc[1][0] == doctest::Approx(8.0).epsilon(1e-15));
  }
  SUBCASE("idempotent") {
    Rng rng(9);
    ParamStore big;
    big.add("a", Tensor(Shape{17}));
    big.add("b", Tensor(Shape{5, 3}));
    for (int trial = 0; trial < 200; ++trial) {
      Gradients r = Gradients::zeros_like(big);
      for (auto& t : r.tensors) t = random_tensor(t.shape, rng, 50.0 * uniform01(rng));
      const double m = 0.1 + 20.0 * uniform01(rng);
      const Gradients once = clip_global_norm(r, m);
      CHECK(clip_global_norm(once, m) == once);
    }
  }
}

TEST_CASE("sgd schedule and step") {
  const LrSchedule s{0.01, 50000};
  CHECK(s.at(0) == 0.01);
  CHECK(s.at(49999) == 0.01);
  CHECK(s.at(50000) == 0.005);
  CHECK(s.at(100000) == 0.0025);

  ParamStore ps;
  ps.add("p", Tensor::vector({1.0, -2.0}));
  ps.add("frozen", Tensor::vector({5.0}), false);
  Gradients g = Gradients::zeros_like(ps);
  const ParamStore before = ps;
  sgd_step(ps, g, s, 0);
  CHECK(ps == before);
  g[0] = Tensor::vector({10.0, 20.0});
  g[1] = Tensor::vector({1.0});
  sgd_step(ps, g, s, 0);
  CHECK(ps.value(0)[0] == doctest::Approx(0.9));
  CHECK(ps.value(0)[1] == doctest::Approx(-2.2));
  CHECK(ps.value(1)[0] == 5.0);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(4);
  Checkpoint c;
  c.vocab_hash = 0x1234abcdULL;
  c.dims = {{"embed", 32}, {"hidden", 64}};
  c.params.add("w", random_tensor({3, 4}, rng));
  c.params.add("v", Tensor::vector({std::numeric_limits<double>::denorm_min(), -0.0, 1e308}), false);
  const std::string bytes = encode_checkpoint(c);
  const Checkpoint d = decode_checkpoint(bytes);
  CHECK(d == c);
  CHECK(encode_checkpoint(d) == bytes);
  CHECK(std::signbit(d.params.value(1)[1]));

  CHECK_THROWS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)));
  CHECK_THROWS(decode_checkpoint(bytes + "x"));
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS(decode_checkpoint(bad));
}
