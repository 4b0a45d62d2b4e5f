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

#include "refexp/beam_search.hpp"

#include <algorithm>
#include <stdexcept>

namespace refexp {

namespace {

struct Live {
  std::vector<TokenId> tokens;
  double log_prob = 0.0;
  LstmState state;
};

struct Candidate {
  std::size_t parent = 0;
  TokenId token = 0;
  double log_prob = 0.0;
  bool finished() const { return token == kEos; }
};

bool emittable(TokenId t) { return t != kBos && t != kUnk; }

double rank_score(const Hypothesis& h, bool normalize) {
  if (!normalize) return h.log_prob;
  return h.log_prob / static_cast<double>(std::max<std::size_t>(1, h.expression.word_count()));
}

}  // namespace

std::vector<Hypothesis> beam_search(const ConditionedSpeaker& speaker, std::size_t vocab_size,
                                    const BeamConfig& config) {
  if (config.beam_size < 1) throw std::invalid_argument("beam_search: beam_size must be >= 1");
  if (config.max_len < 1) throw std::invalid_argument("beam_search: max_len must be >= 1");

  std::vector<Live> live{{{kBos}, 0.0, speaker.initial_state()}};
  std::vector<Hypothesis> finished;

  for (std::size_t words = 0; !live.empty(); ++words) {
    std::vector<StepOutput> outs;
    outs.reserve(live.size());
    for (const auto& h : live) outs.push_back(speaker.step(h.state, h.tokens.back()));

    std::vector<Candidate> cands;
    for (std::size_t p = 0; p < live.size(); ++p)
      for (TokenId t = 0; t < vocab_size; ++t) {
        if (!emittable(t)) continue;
        if (t == kEos && words == 0) continue;
        if (t != kEos && words == config.max_len) continue;
        cands.push_back({p, t, live[p].log_prob + outs[p].log_probs[t]});
      }

    // Score descending, then lexicographic on the token sequence.
    std::stable_sort(cands.begin(), cands.end(), [&](const Candidate& a, const Candidate& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      if (a.parent != b.parent) return live[a.parent].tokens < live[b.parent].tokens;
      return a.token < b.token;
    });

    const std::size_t open =
        static_cast<std::size_t>(std::count_if(cands.begin(), cands.end(), [](auto& c) { return !c.finished(); }));
    const bool pruning = open > config.beam_size;

    std::vector<Live> next;
    for (std::size_t r = 0; r < cands.size(); ++r) {
      const Candidate& c = cands[r];
      std::vector<TokenId> tokens = live[c.parent].tokens;
      tokens.push_back(c.token);
      if (c.finished()) {
        if (!pruning || r < config.beam_size) finished.push_back({Expression{std::move(tokens)}, c.log_prob});
      } else if (next.size() < config.beam_size) {
        next.push_back({std::move(tokens), c.log_prob, outs[c.parent].state});
      }
    }
    live = std::move(next);

    // Log-probs only decrease as a sentence grows.
    if (!config.length_normalize && !finished.empty() && !live.empty()) {
      double best_done = finished.front().log_prob;
      for (const auto& f : finished) best_done = std::max(best_done, f.log_prob);
      if (best_done >= live.front().log_prob) break;
    }
  }

  std::stable_sort(finished.begin(), finished.end(), [&](const Hypothesis& a, const Hypothesis& b) {
    const double sa = rank_score(a, config.length_normalize), sb = rank_score(b, config.length_normalize);
    if (sa != sb) return sa > sb;
    return a.expression.tokens < b.expression.tokens;
  });
  return finished;
}

std::vector<Hypothesis> beam_search(const SpeakerModel& model, const Scene& scene, const Region& region,
                                    const BeamConfig& config) {
  const ConditionedSpeaker speaker(model, visual_vector(model.params, model.featurizer, scene, region));
  return beam_search(speaker, model.dims.vocab, config);
}

Hypothesis greedy_decode(const ConditionedSpeaker& speaker, std::size_t vocab_size, std::size_t max_len) {
  if (max_len < 1) throw std::invalid_argument("greedy_decode: max_len must be >= 1");
  Hypothesis h{Expression{{kBos}}, 0.0};
  LstmState state = speaker.initial_state();
  for (std::size_t words = 0;; ++words) {
    const StepOutput out = speaker.step(state, h.expression.tokens.back());
    TokenId best = kEos;
    bool have = false;
    for (TokenId t = 0; t < vocab_size; ++t) {
      if (!emittable(t)) continue;
      if (t == kEos && words == 0) continue;
      if (t != kEos && words == max_len) continue;
      if (!have || out.log_probs[t] > out.log_probs[best]) {
        best = t;
        have = true;
      }
    }
    h.expression.tokens.push_back(best);
    h.log_prob += out.log_probs[best];
    state = out.state;
    if (best == kEos) return h;
  }
}

}  // namespace refexp
