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

#ifndef REFEXP_DOCTOR_HPP_
#define REFEXP_DOCTOR_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include "refexp/beam_search.hpp"
#include "refexp/grad_check.hpp"
#include "refexp/training.hpp"

namespace refexp {

// Two-object scene with a tiny model (E = Hd = F = 4) for gradient checks.
struct TinyFixture {
  Scene scene;
  Vocabulary vocab;
  SpeakerModel model;
  Expression expression;
  Region target;
  Region negative;
};

TinyFixture tiny_fixture(std::uint64_t seed);

// Central-difference check of one objective on the tiny fixture, with
// dropout masks. The max-margin check keeps the hinge away from its kink.
GradCheckReport check_objective_gradients(Objective objective, std::uint64_t seed,
                                          const GradCheckOptions& options = {});

// Every sentence of 1..max_len words over the non-reserved tokens, each
// followed by <eos>, scored exactly.
std::vector<Hypothesis> enumerate_sentences(const ConditionedSpeaker& speaker, std::size_t vocab_size,
                                            std::size_t max_len);

// A random speaker over two words, visual vector included.
struct RandomSpeaker {
  SpeakerModel model;
  VisualVector visual;
};
RandomSpeaker random_speaker(std::uint64_t seed, std::size_t words = 2);

struct DoctorOptions {
  std::uint64_t seed = 1;
  std::size_t beam_models = 100;
  std::size_t beam_size = 8;
};

// Runs the gradient checks and the enumeration test; prints one line per check.
bool run_doctor(const DoctorOptions& options, std::ostream& out);

}  // namespace refexp

#endif  // REFEXP_DOCTOR_HPP_
