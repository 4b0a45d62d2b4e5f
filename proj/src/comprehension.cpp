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

#include "refexp/comprehension.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace refexp {

std::size_t argmax_first(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("argmax of an empty list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

std::vector<std::size_t> rank_scores(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::vector<double> posterior(std::span<const double> ll) {
  if (ll.empty()) return {};
  const double m = *std::max_element(ll.begin(), ll.end());
  std::vector<double> p(ll.size());
  double z = 0.0;
  for (std::size_t i = 0; i < ll.size(); ++i) z += (p[i] = std::exp(ll[i] - m));
  for (double& v : p) v /= z;
  return p;
}

Comprehension comprehend(const SpeakerModel& model, const Scene& scene, const Expression& e,
                         std::span<const Region> candidates) {
  if (candidates.empty()) throw std::invalid_argument("comprehend: no candidates");
  Comprehension out;
  out.scores.reserve(candidates.size());
  for (const auto& c : candidates) {
    Region box{c.x_tl, c.y_tl, c.x_br, c.y_br, {}, {}};
    out.scores.push_back(score_expression(model, scene, box, e));
  }
  out.chosen = argmax_first(out.scores);
  out.region = candidates[out.chosen];
  out.ranking = rank_scores(out.scores);
  return out;
}

}  // namespace refexp
