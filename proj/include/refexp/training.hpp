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

#ifndef REFEXP_TRAINING_HPP_
#define REFEXP_TRAINING_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "refexp/dataset.hpp"
#include "refexp/featurizer.hpp"
#include "refexp/optim.hpp"
#include "refexp/proposals.hpp"
#include "refexp/speaker.hpp"

namespace refexp {

enum class Objective { kMl, kMmiSoftmax, kMmiMaxMargin };
enum class NegativeStrategy { kEasyGt, kHardGt, kHardProposal };

std::string_view to_string(Objective o);
std::string_view to_string(NegativeStrategy s);
std::optional<Objective> parse_objective(std::string_view s);
std::optional<NegativeStrategy> parse_negative_strategy(std::string_view s);

struct TrainingConfig {
  Objective objective = Objective::kMl;
  NegativeStrategy negative_strategy = NegativeStrategy::kHardGt;
  std::size_t negatives = 5;
  double margin = 0.1;
  double margin_weight = 1.0;
  std::size_t batch_size = 16;
  double lr = 0.01;
  std::size_t lr_half_every = 2000;
  std::size_t max_iterations = 6000;
  double clip_norm = 10.0;
  double dropout = 0.5;
  std::uint64_t seed = 1;
  // Validation precision@1 is measured every this many iterations (0 = once per epoch).
  std::size_t val_every = 0;
  std::size_t embed = 32;
  std::size_t hidden = 64;
  std::size_t feat = 32;
  std::size_t conv_channels = 8;
  std::size_t patch = 16;

  friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

// Throws std::invalid_argument naming the offending field.
void validate(const TrainingConfig& config);
ModelDims model_dims(const TrainingConfig& config, std::size_t vocab_size);

struct TrainExample {
  const Scene* scene = nullptr;
  Region region;
  Expression expression;
};

std::vector<TrainExample> make_examples(const Dataset& d, Split split, const Vocabulary& vocab);
std::vector<TrainExample> make_examples(const Dataset& d, std::span<const RefExample> examples,
                                        const Vocabulary& vocab);

// Shared per-example inputs of the loss builders.
struct LossContext {
  FeatureCache* cache = nullptr;
  // Dropout masks applied identically to the target and every negative pass.
  const std::vector<StepMasks>* masks = nullptr;
};

// -log p(S | R, I)
NodeId ml_loss_on_tape(Tape& tape, const SpeakerModel& model, const Scene& scene, const Region& region,
                       const Expression& e, const LossContext& ctx = {});
// -log [ p(S|R,I) / sum_{R' in {R} + negatives} p(S|R',I) ]
NodeId mmi_softmax_on_tape(Tape& tape, const SpeakerModel& model, const Scene& scene, const Region& region,
                           const Expression& e, std::span<const Region> negatives, const LossContext& ctx = {});
// -log p(S|R,I) + weight * max(0, margin - log p(S|R,I) + log p(S|R',I))
NodeId mmi_maxmargin_on_tape(Tape& tape, const SpeakerModel& model, const Scene& scene, const Region& region,
                             const Expression& e, const Region& negative, double margin, double weight,
                             const LossContext& ctx = {});

struct LossResult {
  double loss = 0.0;
  Gradients grads;
};

// Summed over the batch.
LossResult ml_loss(const SpeakerModel& model, std::span<const TrainExample> batch, const LossContext& ctx = {});
LossResult mmi_softmax_loss(const SpeakerModel& model, const Scene& scene, const Region& region, const Expression& e,
                            std::span<const Region> negatives, const LossContext& ctx = {});
LossResult mmi_maxmargin_loss(const SpeakerModel& model, const Scene& scene, const Region& region,
                              const Expression& e, const Region& negative, double margin, double weight,
                              const LossContext& ctx = {});

class NoEligibleNegativesError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Up to k distinct negatives drawn without replacement. Throws
// NoEligibleNegativesError when the strategy admits none.
std::vector<Region> sample_negatives(NegativeStrategy strategy, const Scene& scene, const Region& target,
                                     const ProposalSet* proposals, std::size_t k, std::uint64_t seed);
// Falls back to easy ground-truth negatives when the strategy admits none;
// returns an empty list only for single-object scenes.
std::vector<Region> sample_negatives_or_easy(NegativeStrategy strategy, const Scene& scene, const Region& target,
                                             const ProposalSet* proposals, std::size_t k, std::uint64_t seed);

struct IterationRecord {
  std::size_t iteration = 0;
  double loss = 0.0;  // mean per example
  double lr = 0.0;
  std::optional<double> val_p1;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<IterationRecord> records;
  double wall_seconds = 0.0;

  std::string to_csv() const;
  // Mean loss over iterations [from, to).
  double mean_loss(std::size_t from, std::size_t to) const;
};

class TrainingDivergedError : public std::runtime_error {
 public:
  TrainingDivergedError(std::size_t iteration, const std::string& what)
      : std::runtime_error("iteration " + std::to_string(iteration) + ": " + what), iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

struct TrainOptions {
  // Proposals per scene, required by the hard-proposal strategy.
  const std::map<const Scene*, ProposalSet>* proposals = nullptr;
  // Returns validation precision@1 for the current parameters.
  std::function<double(const SpeakerModel&)> validate;
  // Starts from these parameters instead of a fresh initialization.
  const SpeakerModel* initial = nullptr;
  // Called after every iteration.
  std::function<void(const IterationRecord&)> on_iteration;
};

struct TrainResult {
  SpeakerModel model;
  TrainHistory history;
};

TrainResult train(const TrainingConfig& config, std::span<const TrainExample> examples, const Vocabulary& vocab,
                  const TrainOptions& options = {});

}  // namespace refexp

#endif  // REFEXP_TRAINING_HPP_
