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

#include "refexp/speaker.hpp"

#include <cmath>
#include <stdexcept>

namespace refexp {

namespace {

Tensor uniform_tensor(Shape shape, double r, Rng& rng) {
  Tensor t(std::move(shape), 0.0);
  for (double& v : t.data) v = (2.0 * uniform01(rng) - 1.0) * r;
  return t;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// y += W x for a row-major [rows, cols] matrix, one accumulator per row.
void matvec_add(const Tensor& w, const double* x, double* y) {
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  const double* wp = w.data.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = wp + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] += acc;
  }
}

std::int64_t dim_value(const Checkpoint& ckpt, const std::string& key) {
  for (const auto& [k, v] : ckpt.dims)
    if (k == key) return v;
  throw std::runtime_error("checkpoint lacks dimension '" + key + "'");
}

}  // namespace

SpeakerModel SpeakerModel::create(const ModelDims& dims, std::uint64_t vocab_hash, std::uint64_t seed) {
  if (dims.embed == 0 || dims.hidden == 0 || dims.vocab <= kReservedTokens)
    throw std::invalid_argument("model dims must be positive and the vocabulary must hold a word");
  SpeakerModel m;
  m.dims = dims;
  m.vocab_hash = vocab_hash;
  Rng rng = make_rng(seed, {0x1417});
  m.featurizer = add_featurizer_params(m.params, dims.featurizer, rng, dims.conv_trainable);

  const std::size_t E = dims.embed, H = dims.hidden, V = dims.vocab, Vis = dims.visual_size();
  // The three gate matrices together form one [4H, E + Vis + H] matrix.
  const double gate_r = 1.0 / std::sqrt(double(E + Vis + H));
  m.params.add("embed", uniform_tensor(Shape{V, E}, 1.0 / std::sqrt(double(E)), rng));
  m.params.add("lstm.wx", uniform_tensor(Shape{4 * H, E}, gate_r, rng));
  m.params.add("lstm.wv", uniform_tensor(Shape{4 * H, Vis}, gate_r, rng));
  m.params.add("lstm.wh", uniform_tensor(Shape{4 * H, H}, gate_r, rng));
  Tensor bias(Shape{4 * H}, 0.0);
  for (std::size_t i = H; i < 2 * H; ++i) bias[i] = 1.0;
  m.params.add("lstm.b", std::move(bias));
  m.params.add("out.w", uniform_tensor(Shape{V, H}, 1.0 / std::sqrt(double(H)), rng));
  m.params.add("out.b", Tensor(Shape{V}, 0.0));
  m.bind_ids();
  return m;
}

void SpeakerModel::bind_ids() {
  auto id = [&](const char* name) {
    auto p = params.find(name);
    if (!p) throw std::runtime_error(std::string("model is missing parameter '") + name + "'");
    return *p;
  };
  featurizer.conv_w = id("feat.conv.w");
  featurizer.conv_b = id("feat.conv.b");
  featurizer.fc_w = id("feat.fc.w");
  featurizer.fc_b = id("feat.fc.b");
  embed = id("embed");
  wx = id("lstm.wx");
  wv = id("lstm.wv");
  wh = id("lstm.wh");
  gate_b = id("lstm.b");
  out_w = id("out.w");
  out_b = id("out.b");

  const std::size_t E = dims.embed, H = dims.hidden, V = dims.vocab, Vis = dims.visual_size();
  const auto& f = dims.featurizer;
  auto expect = [&](ParamId p, const Shape& s) {
    if (params.value(p).shape != s)
      throw std::runtime_error("parameter '" + params.name(p) + "' has shape " + shape_string(params.value(p).shape) +
                               ", expected " + shape_string(s));
  };
  expect(featurizer.conv_w, {f.channels, 3, f.kernel, f.kernel});
  expect(featurizer.conv_b, {f.channels});
  expect(featurizer.fc_w, {f.feat, f.pooled_size()});
  expect(featurizer.fc_b, {f.feat});
  expect(embed, {V, E});
  expect(wx, {4 * H, E});
  expect(wv, {4 * H, Vis});
  expect(wh, {4 * H, H});
  expect(gate_b, {4 * H});
  expect(out_w, {V, H});
  expect(out_b, {V});
  featurizer.dims = f;
}

Checkpoint SpeakerModel::to_checkpoint() const {
  Checkpoint c;
  c.vocab_hash = vocab_hash;
  c.dims = {{"embed", std::int64_t(dims.embed)},
            {"hidden", std::int64_t(dims.hidden)},
            {"vocab", std::int64_t(dims.vocab)},
            {"feat", std::int64_t(dims.featurizer.feat)},
            {"channels", std::int64_t(dims.featurizer.channels)},
            {"kernel", std::int64_t(dims.featurizer.kernel)},
            {"patch", std::int64_t(dims.featurizer.patch)},
            {"conv_trainable", dims.conv_trainable ? 1 : 0}};
  c.params = params;
  return c;
}

SpeakerModel SpeakerModel::from_checkpoint(const Checkpoint& ckpt, std::optional<std::uint64_t> expected_vocab_hash) {
  if (expected_vocab_hash && *expected_vocab_hash != ckpt.vocab_hash)
    throw std::runtime_error("checkpoint vocabulary hash does not match the dataset vocabulary");
  SpeakerModel m;
  m.vocab_hash = ckpt.vocab_hash;
  m.dims.embed = std::size_t(dim_value(ckpt, "embed"));
  m.dims.hidden = std::size_t(dim_value(ckpt, "hidden"));
  m.dims.vocab = std::size_t(dim_value(ckpt, "vocab"));
  m.dims.featurizer.feat = std::size_t(dim_value(ckpt, "feat"));
  m.dims.featurizer.channels = std::size_t(dim_value(ckpt, "channels"));
  m.dims.featurizer.kernel = std::size_t(dim_value(ckpt, "kernel"));
  m.dims.featurizer.patch = std::size_t(dim_value(ckpt, "patch"));
  m.dims.conv_trainable = dim_value(ckpt, "conv_trainable") != 0;
  m.params = ckpt.params;
  m.bind_ids();
  return m;
}

std::vector<StepMasks> make_dropout_masks(const ModelDims& dims, std::size_t steps, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must lie in [0, 1)");
  const double keep_scale = 1.0 / (1.0 - rate);
  auto draw = [&](std::size_t n) {
    Tensor m(Shape{n}, 0.0);
    for (double& v : m.data) v = uniform01(rng) < rate ? 0.0 : keep_scale;
    return m;
  };
  std::vector<StepMasks> out;
  out.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor e = draw(dims.embed);
    Tensor o = draw(dims.hidden);
    out.push_back({std::move(e), std::move(o)});
  }
  return out;
}

ConditionedSpeaker::ConditionedSpeaker(const SpeakerModel& model, const VisualVector& visual) : model_(&model) {
  const auto v = visual.concat();
  if (v.size() != model.dims.visual_size())
    throw std::invalid_argument("visual vector has " + std::to_string(v.size()) + " entries, model expects " +
                                std::to_string(model.dims.visual_size()));
  visual_proj_ = model.params.value(model.gate_b).data;
  matvec_add(model.params.value(model.wv), v.data(), visual_proj_.data());
}

LstmState ConditionedSpeaker::initial_state() const {
  const std::size_t H = model_->dims.hidden;
  return LstmState{std::vector<double>(H, 0.0), std::vector<double>(H, 0.0)};
}

StepOutput ConditionedSpeaker::step(const LstmState& state, TokenId word, const StepMasks* masks) const {
  const SpeakerModel& m = *model_;
  const std::size_t E = m.dims.embed, H = m.dims.hidden, V = m.dims.vocab;
  if (word >= V) throw std::out_of_range("step: word id " + std::to_string(word) + " outside vocabulary");

  const Tensor& table = m.params.value(m.embed);
  std::vector<double> x(table.data.begin() + std::ptrdiff_t(word * E), table.data.begin() + std::ptrdiff_t((word + 1) * E));
  if (masks)
    for (std::size_t i = 0; i < E; ++i) x[i] *= masks->embed[i];

  std::vector<double> gates = visual_proj_;
  matvec_add(m.params.value(m.wx), x.data(), gates.data());
  matvec_add(m.params.value(m.wh), state.hidden.data(), gates.data());

  StepOutput out;
  out.state.hidden.resize(H);
  out.state.cell.resize(H);
  for (std::size_t j = 0; j < H; ++j) {
    const double i = sigmoid(gates[j]);
    const double f = sigmoid(gates[H + j]);
    const double o = sigmoid(gates[2 * H + j]);
    const double g = std::tanh(gates[3 * H + j]);
    const double c = f * state.cell[j] + i * g;
    out.state.cell[j] = c;
    out.state.hidden[j] = o * std::tanh(c);
  }

  std::vector<double> h = out.state.hidden;
  if (masks)
    for (std::size_t j = 0; j < H; ++j) h[j] *= masks->output[j];
  out.log_probs = m.params.value(m.out_b).data;
  matvec_add(m.params.value(m.out_w), h.data(), out.log_probs.data());
  double mx = out.log_probs[0];
  for (double v : out.log_probs) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : out.log_probs) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  for (std::size_t k = 0; k < V; ++k) out.log_probs[k] -= lse;
  return out;
}

double ConditionedSpeaker::score(const Expression& e) const {
  check_expression(e, model_->dims.vocab);
  LstmState state = initial_state();
  double total = 0.0;
  for (std::size_t t = 0; t + 1 < e.tokens.size(); ++t) {
    StepOutput o = step(state, e.tokens[t]);
    total += o.log_probs[e.tokens[t + 1]];
    state = std::move(o.state);
  }
  return total;
}

StepOutput step(const SpeakerModel& model, const LstmState& state, TokenId word, const VisualVector& visual,
                const std::optional<DropoutSpec>& dropout) {
  ConditionedSpeaker s(model, visual);
  if (!dropout) return s.step(state, word);
  Rng rng = make_rng(dropout->seed, {0xd0});
  const auto masks = make_dropout_masks(model.dims, 1, dropout->rate, rng);
  return s.step(state, word, &masks[0]);
}

double score_expression(const SpeakerModel& model, const Scene& scene, const Region& region, const Expression& e) {
  check_expression(e, model.dims.vocab);
  return ConditionedSpeaker(model, visual_vector(model.params, model.featurizer, scene, region)).score(e);
}

NodeId score_on_tape(Tape& tape, const SpeakerModel& m, NodeId visual, const Expression& e,
                     const std::vector<StepMasks>* masks) {
  check_expression(e, m.dims.vocab);
  const std::size_t steps = e.tokens.size() - 1;
  if (masks && masks->size() < steps) throw std::invalid_argument("score_on_tape: too few dropout masks");
  const std::size_t H = m.dims.hidden;

  const NodeId visual_proj = tape.affine(tape.param(m.wv), visual, tape.param(m.gate_b));
  const NodeId table = tape.param(m.embed);
  const NodeId wx = tape.param(m.wx);
  const NodeId wh = tape.param(m.wh);
  const NodeId out_w = tape.param(m.out_w);
  const NodeId out_b = tape.param(m.out_b);

  NodeId h = tape.input(Tensor(Shape{H}, 0.0));
  NodeId c = tape.input(Tensor(Shape{H}, 0.0));
  std::vector<NodeId> terms;
  terms.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    NodeId x = tape.embed(table, e.tokens[t]);
    if (masks) x = tape.dropout(x, (*masks)[t].embed);
    const NodeId gates = tape.affine(wh, h, tape.affine(wx, x, visual_proj));
    const NodeId ig = tape.sigmoid(tape.slice(gates, 0, H));
    const NodeId fg = tape.sigmoid(tape.slice(gates, H, H));
    const NodeId og = tape.sigmoid(tape.slice(gates, 2 * H, H));
    const NodeId gg = tape.tanh(tape.slice(gates, 3 * H, H));
    c = tape.add(tape.mul(fg, c), tape.mul(ig, gg));
    h = tape.mul(og, tape.tanh(c));
    NodeId ho = h;
    if (masks) ho = tape.dropout(ho, (*masks)[t].output);
    terms.push_back(tape.log_softmax_pick(tape.affine(out_w, ho, out_b), e.tokens[t + 1]));
  }
  return tape.sum(terms);
}

}  // namespace refexp
