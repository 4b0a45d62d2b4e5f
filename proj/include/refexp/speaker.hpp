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

#ifndef REFEXP_SPEAKER_HPP_
#define REFEXP_SPEAKER_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "refexp/checkpoint.hpp"
#include "refexp/featurizer.hpp"
#include "refexp/rng.hpp"
#include "refexp/scene.hpp"
#include "refexp/tape.hpp"
#include "refexp/vocabulary.hpp"

namespace refexp {

struct ModelDims {
  std::size_t embed = 32;
  std::size_t hidden = 64;
  std::size_t vocab = 0;
  FeaturizerDims featurizer;
  bool conv_trainable = false;

  std::size_t visual_size() const { return 2 * featurizer.feat + 5; }
};

// LSTM speaker p(S | R, I). The visual vector enters every step through
// its own gate matrix, which is the same as concatenating it to the word
// embedding:  gates = b + Wv v + Wx embed(w) + Wh h,  rows ordered [i f o g].
class SpeakerModel {
 public:
  static SpeakerModel create(const ModelDims& dims, std::uint64_t vocab_hash, std::uint64_t seed);
  // Throws when `expected_vocab_hash` is given and differs from the checkpoint's.
  static SpeakerModel from_checkpoint(const Checkpoint& ckpt,
                                      std::optional<std::uint64_t> expected_vocab_hash = std::nullopt);
  Checkpoint to_checkpoint() const;

  ParamStore params;
  ModelDims dims;
  std::uint64_t vocab_hash = 0;
  FeaturizerLayout featurizer;
  ParamId embed = 0, wx = 0, wv = 0, wh = 0, gate_b = 0, out_w = 0, out_b = 0;

  std::size_t parameter_count() const { return params.entry_count(); }

 private:
  void bind_ids();
};

struct LstmState {
  std::vector<double> hidden;
  std::vector<double> cell;
  friend bool operator==(const LstmState&, const LstmState&) = default;
};

struct DropoutSpec {
  double rate = 0.5;
  std::uint64_t seed = 0;
};

struct StepOutput {
  LstmState state;
  std::vector<double> log_probs;
};

// Inverted-dropout masks for the embedding and output layers of one step.
struct StepMasks {
  Tensor embed;
  Tensor output;
};

std::vector<StepMasks> make_dropout_masks(const ModelDims& dims, std::size_t steps, double rate, Rng& rng);

// A speaker with the visual projection for one region precomputed.
class ConditionedSpeaker {
 public:
  ConditionedSpeaker(const SpeakerModel& model, const VisualVector& visual);

  LstmState initial_state() const;
  StepOutput step(const LstmState& state, TokenId word, const StepMasks* masks = nullptr) const;
  // log p(S | R, I) summed from <bos> through the <eos> emission.
  double score(const Expression& e) const;

 private:
  const SpeakerModel* model_;
  std::vector<double> visual_proj_;
};

StepOutput step(const SpeakerModel& model, const LstmState& state, TokenId word, const VisualVector& visual,
                const std::optional<DropoutSpec>& dropout = std::nullopt);

double score_expression(const SpeakerModel& model, const Scene& scene, const Region& region, const Expression& e);

// log p(S | R, I) on a tape, given the visual vector node. Masks, when
// present, must cover every step (expression length - 1).
NodeId score_on_tape(Tape& tape, const SpeakerModel& model, NodeId visual, const Expression& e,
                     const std::vector<StepMasks>* masks = nullptr);

}  // namespace refexp

#endif  // REFEXP_SPEAKER_HPP_
