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

#include "refexp/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "refexp/parallel.hpp"
#include "refexp/rng.hpp"

namespace refexp {

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kTagOrder = 1;
constexpr std::uint64_t kTagPool = 2;
constexpr std::uint64_t kTagPick = 3;
constexpr std::uint64_t kTagDropout = 4;

}  // namespace

std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::kMl: return "ml";
    case Objective::kMmiSoftmax: return "mmi_softmax";
    case Objective::kMmiMaxMargin: return "mmi_maxmargin";
  }
  return "?";
}

std::string_view to_string(NegativeStrategy s) {
  switch (s) {
    case NegativeStrategy::kEasyGt: return "easy_gt";
    case NegativeStrategy::kHardGt: return "hard_gt";
    case NegativeStrategy::kHardProposal: return "hard_proposal";
  }
  return "?";
}

std::optional<Objective> parse_objective(std::string_view s) {
  for (auto o : {Objective::kMl, Objective::kMmiSoftmax, Objective::kMmiMaxMargin})
    if (to_string(o) == s) return o;
  return std::nullopt;
}

std::optional<NegativeStrategy> parse_negative_strategy(std::string_view s) {
  for (auto n : {NegativeStrategy::kEasyGt, NegativeStrategy::kHardGt, NegativeStrategy::kHardProposal})
    if (to_string(n) == s) return n;
  return std::nullopt;
}

void validate(const TrainingConfig& c) {
  auto fail = [](const std::string& what) { throw std::invalid_argument("training config: " + what); };
  if (c.negatives < 1) fail("negatives must be >= 1");
  if (!(c.margin >= 0.0)) fail("margin must be >= 0");
  if (!(c.margin_weight >= 0.0)) fail("margin_weight must be >= 0");
  if (c.batch_size < 1) fail("batch_size must be >= 1");
  if (!(c.lr >= 0.0) || !std::isfinite(c.lr)) fail("lr must be finite and >= 0");
  if (c.lr_half_every < 1) fail("lr_half_every must be >= 1");
  if (!(c.clip_norm > 0.0)) fail("clip_norm must be > 0");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (c.embed < 1 || c.hidden < 1 || c.feat < 1 || c.conv_channels < 1) fail("model sizes must be >= 1");
  if (c.patch < 4) fail("patch must be >= 4");
}

ModelDims model_dims(const TrainingConfig& c, std::size_t vocab_size) {
  ModelDims d;
  d.embed = c.embed;
  d.hidden = c.hidden;
  d.vocab = vocab_size;
  d.featurizer.patch = c.patch;
  d.featurizer.channels = c.conv_channels;
  d.featurizer.feat = c.feat;
  return d;
}

std::vector<TrainExample> make_examples(const Dataset& d, std::span<const RefExample> examples,
                                        const Vocabulary& vocab) {
  std::vector<TrainExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    const Scene* s = d.find_scene(ex.scene_id);
    if (!s) throw std::invalid_argument("example " + ex.id + ": unknown scene " + ex.scene_id);
    out.push_back({s, ex.region, encode(vocab, ex.words)});
  }
  return out;
}

std::vector<TrainExample> make_examples(const Dataset& d, Split split, const Vocabulary& vocab) {
  std::vector<RefExample> chosen;
  for (const auto* ex : d.split(split)) chosen.push_back(*ex);
  return make_examples(d, chosen, vocab);
}

namespace {

NodeId log_prob_node(Tape& tape, const SpeakerModel& model, const Scene& scene, const Region& region,
                     const Expression& e, const LossContext& ctx) {
  const NodeId v = visual_on_tape(tape, model.params, model.featurizer, scene, region, ctx.cache);
  return score_on_tape(tape, model, v, e, ctx.masks);
}

void check_negative(const Region& target, const Region& negative) {
  if (negative.same_box(target)) throw std::invalid_argument("negative region equals the target region");
}

}  // namespace

NodeId ml_loss_on_tape(Tape& tape, const SpeakerModel& model, const Scene& scene, const Region& region,
                       const Expression& e, const LossContext& ctx) {
  return tape.scale(log_prob_node(tape, model, scene, region, e, ctx), -1.0);
}

NodeId mmi_softmax_on_tape(Tape& tape, const SpeakerModel& model, const Scene& scene, const Region& region,
                           const Expression& e, std::span<const Region> negatives, const LossContext& ctx) {
  if (negatives.empty()) throw std::invalid_argument("mmi_softmax_loss: no negatives");
  for (const auto& n : negatives) check_negative(region, n);
  std::vector<NodeId> scores;
  scores.push_back(log_prob_node(tape, model, scene, region, e, ctx));
  for (const auto& n : negatives) scores.push_back(log_prob_node(tape, model, scene, n, e, ctx));
  const NodeId lse = tape.logsumexp(tape.stack(scores));
  return tape.sub(lse, scores.front());
}

NodeId mmi_maxmargin_on_tape(Tape& tape, const SpeakerModel& model, const Scene& scene, const Region& region,
                             const Expression& e, const Region& negative, double margin, double weight,
                             const LossContext& ctx) {
  check_negative(region, negative);
  const NodeId pos = log_prob_node(tape, model, scene, region, e, ctx);
  const NodeId neg = log_prob_node(tape, model, scene, negative, e, ctx);
  const NodeId hinge = tape.relu(tape.add_scalar(tape.sub(neg, pos), margin));
  return tape.add(tape.scale(pos, -1.0), tape.scale(hinge, weight));
}

LossResult ml_loss(const SpeakerModel& model, std::span<const TrainExample> batch, const LossContext& ctx) {
  if (batch.empty()) throw std::invalid_argument("ml_loss: empty batch");
  Tape tape(&model.params);
  std::vector<NodeId> terms;
  for (const auto& ex : batch) terms.push_back(ml_loss_on_tape(tape, model, *ex.scene, ex.region, ex.expression, ctx));
  const NodeId loss = tape.sum(terms);
  return {tape.scalar(loss), tape.backward(loss)};
}

LossResult mmi_softmax_loss(const SpeakerModel& model, const Scene& scene, const Region& region, const Expression& e,
                            std::span<const Region> negatives, const LossContext& ctx) {
  Tape tape(&model.params);
  const NodeId loss = mmi_softmax_on_tape(tape, model, scene, region, e, negatives, ctx);
  return {tape.scalar(loss), tape.backward(loss)};
}

LossResult mmi_maxmargin_loss(const SpeakerModel& model, const Scene& scene, const Region& region,
                              const Expression& e, const Region& negative, double margin, double weight,
                              const LossContext& ctx) {
  Tape tape(&model.params);
  const NodeId loss = mmi_maxmargin_on_tape(tape, model, scene, region, e, negative, margin, weight, ctx);
  return {tape.scalar(loss), tape.backward(loss)};
}

std::vector<Region> sample_negatives(NegativeStrategy strategy, const Scene& scene, const Region& target,
                                     const ProposalSet* proposals, std::size_t k, std::uint64_t seed) {
  std::optional<Category> category;
  if (auto idx = scene.find_object(target)) category = scene.objects[*idx].category;
  else category = target.category_label;

  std::vector<Region> eligible;
  switch (strategy) {
    case NegativeStrategy::kEasyGt:
      for (const auto& o : scene.objects)
        if (!o.box.same_box(target)) eligible.push_back(o.box);
      break;
    case NegativeStrategy::kHardGt:
      if (!category) throw std::invalid_argument("hard_gt: target category unknown");
      for (const auto& o : scene.objects)
        if (o.category == *category && !o.box.same_box(target)) eligible.push_back(o.box);
      break;
    case NegativeStrategy::kHardProposal:
      if (!proposals) throw std::invalid_argument("hard_proposal: proposals required");
      if (!category) throw std::invalid_argument("hard_proposal: target category unknown");
      for (const auto& p : proposals->regions)
        if (p.category_label == category && iou(p, target) < 0.5) eligible.push_back(p);
      break;
  }
  if (eligible.empty())
    throw NoEligibleNegativesError(std::string("no eligible ") + std::string(to_string(strategy)) +
                                   " negatives in scene " + scene.id);

  Rng rng(seed);
  const std::size_t take = std::min(k, eligible.size());
  for (std::size_t i = 0; i < take; ++i) std::swap(eligible[i], eligible[i + uniform_index(rng, eligible.size() - i)]);
  eligible.resize(take);
  return eligible;
}

std::vector<Region> sample_negatives_or_easy(NegativeStrategy strategy, const Scene& scene, const Region& target,
                                             const ProposalSet* proposals, std::size_t k, std::uint64_t seed) {
  try {
    return sample_negatives(strategy, scene, target, proposals, k, seed);
  } catch (const NoEligibleNegativesError&) {
  }
  if (strategy == NegativeStrategy::kEasyGt) return {};
  try {
    return sample_negatives(NegativeStrategy::kEasyGt, scene, target, nullptr, k, seed);
  } catch (const NoEligibleNegativesError&) {
    return {};
  }
}

std::string TrainHistory::to_csv() const {
  std::string out = "iteration,loss,lr,val_p1,seconds\n";
  char buf[160];
  for (const auto& r : records) {
    char val[40] = "";
    if (r.val_p1) std::snprintf(val, sizeof val, "%.6f", *r.val_p1);
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%s,%.3f\n", r.iteration, r.loss, r.lr, val, r.seconds);
    out += buf;
  }
  return out;
}

double TrainHistory::mean_loss(std::size_t from, std::size_t to) const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : records)
    if (r.iteration >= from && r.iteration < to) {
      s += r.loss;
      ++n;
    }
  if (n == 0) throw std::out_of_range("mean_loss: no records in range");
  return s / static_cast<double>(n);
}

TrainResult train(const TrainingConfig& config, std::span<const TrainExample> examples, const Vocabulary& vocab,
                  const TrainOptions& options) {
  validate(config);
  if (examples.empty()) throw std::invalid_argument("train: no training examples");
  for (const auto& ex : examples) {
    if (!ex.scene) throw std::invalid_argument("train: example without scene");
    check_expression(ex.expression, vocab.size());
  }
  if (config.objective != Objective::kMl && config.negative_strategy == NegativeStrategy::kHardProposal &&
      !options.proposals)
    throw std::invalid_argument("train: hard_proposal negatives need proposals");

  SpeakerModel model = options.initial ? *options.initial
                                       : SpeakerModel::create(model_dims(config, vocab.size()), vocab.hash(), config.seed);
  if (model.vocab_hash != vocab.hash() || model.dims.vocab != vocab.size())
    throw std::invalid_argument("train: initial model was built for a different vocabulary");

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  const LrSchedule schedule{config.lr, config.lr_half_every};
  const std::size_t n = examples.size();
  const std::size_t batch = config.batch_size;
  FeatureCache cache;

  std::vector<std::size_t> order(n);
  std::size_t order_epoch = SIZE_MAX;
  auto example_at = [&](std::size_t pos, std::size_t& epoch) {
    epoch = pos / n;
    if (epoch != order_epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng = make_rng(config.seed, {kTagOrder, epoch});
      std::shuffle(order.begin(), order.end(), rng);
      order_epoch = epoch;
    }
    return order[pos % n];
  };

  std::vector<Gradients> slot_grads(batch, Gradients::zeros_like(model.params));
  std::vector<double> slot_loss(batch, 0.0);
  std::vector<std::size_t> slot_example(batch), slot_epoch(batch);

  TrainHistory history;
  history.records.reserve(config.max_iterations);

  for (std::size_t it = 0; it < config.max_iterations; ++it) {
    for (std::size_t b = 0; b < batch; ++b) slot_example[b] = example_at(it * batch + b, slot_epoch[b]);

    parallel_for(batch, [&](std::size_t b) {
      const TrainExample& ex = examples[slot_example[b]];
      const std::size_t idx = slot_example[b];
      std::vector<StepMasks> masks;
      LossContext ctx{&cache, nullptr};
      if (config.dropout > 0.0) {
        Rng rng = make_rng(config.seed, {kTagDropout, it, b});
        masks = make_dropout_masks(model.dims, ex.expression.tokens.size() - 1, config.dropout, rng);
        ctx.masks = &masks;
      }
      Tape tape(&model.params);
      NodeId loss;
      std::vector<Region> negs;
      if (config.objective != Objective::kMl) {
        const ProposalSet* props = nullptr;
        if (options.proposals) {
          auto found = options.proposals->find(ex.scene);
          if (found != options.proposals->end()) props = &found->second;
        }
        NegativeStrategy strategy = config.negative_strategy;
        if (strategy == NegativeStrategy::kHardProposal && !props) strategy = NegativeStrategy::kEasyGt;
        negs = sample_negatives_or_easy(strategy, *ex.scene, ex.region, props, config.negatives,
                                        derive_seed(config.seed, {kTagPool, slot_epoch[b], idx}));
      }
      if (config.objective == Objective::kMl || negs.empty()) {
        loss = ml_loss_on_tape(tape, model, *ex.scene, ex.region, ex.expression, ctx);
      } else if (config.objective == Objective::kMmiSoftmax) {
        loss = mmi_softmax_on_tape(tape, model, *ex.scene, ex.region, ex.expression, negs, ctx);
      } else {
        Rng rng = make_rng(config.seed, {kTagPick, it, b});
        const Region& neg = negs[uniform_index(rng, negs.size())];
        loss = mmi_maxmargin_on_tape(tape, model, *ex.scene, ex.region, ex.expression, neg, config.margin,
                                     config.margin_weight, ctx);
      }
      slot_loss[b] = tape.scalar(loss);
      for (auto& t : slot_grads[b].tensors) t.fill(0.0);
      tape.backward_into(loss, slot_grads[b]);
    });

    double total = 0.0;
    Gradients g = Gradients::zeros_like(model.params);
    for (std::size_t b = 0; b < batch; ++b) {
      total += slot_loss[b];
      g.accumulate(slot_grads[b]);
    }
    if (!std::isfinite(total)) throw TrainingDivergedError(it, "non-finite loss " + std::to_string(total));
    if (!g.all_finite()) throw TrainingDivergedError(it, "non-finite gradient");

    g = clip_global_norm(std::move(g), config.clip_norm);
    sgd_step(model.params, g, schedule, it);

    IterationRecord rec;
    rec.iteration = it;
    rec.loss = total / static_cast<double>(batch);
    rec.lr = schedule.at(it);
    if (options.validate) {
      const bool last = it + 1 == config.max_iterations;
      const bool due = config.val_every > 0 ? (it + 1) % config.val_every == 0
                                            : ((it + 1) * batch) / n > (it * batch) / n;
      if (due || last) rec.val_p1 = options.validate(model);
    }
    rec.seconds = elapsed();
    history.records.push_back(rec);
    if (options.on_iteration) options.on_iteration(rec);
  }
  history.wall_seconds = elapsed();
  return {std::move(model), std::move(history)};
}

}  // namespace refexp
