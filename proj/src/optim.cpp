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

#include "refexp/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace refexp {

double LrSchedule::at(std::size_t iteration) const {
  if (half_every == 0) throw std::invalid_argument("learning-rate half interval must be positive");
  return initial * std::ldexp(1.0, -static_cast<int>(iteration / half_every));
}

Gradients clip_global_norm(Gradients g, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_global_norm: max_norm must be positive");
  const double norm = g.global_norm();
  // Relative slack so a clipped set, whose norm can land one ulp above
  // max_norm, is left untouched by a second clip.
  if (norm > max_norm * (1.0 + 1e-12)) g.scale(max_norm / norm);
  return g;
}

void sgd_step(ParamStore& params, const Gradients& g, const LrSchedule& schedule, std::size_t iteration) {
  if (g.size() != params.size()) throw std::invalid_argument("sgd_step: gradient set does not match parameters");
  const double lr = schedule.at(iteration);
  for (ParamId p = 0; p < params.size(); ++p) {
    if (!params.trainable(p)) continue;
    auto& w = params.value(p).data;
    const auto& d = g[p].data;
    if (w.size() != d.size()) throw std::invalid_argument("sgd_step: shape mismatch for " + params.name(p));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * d[i];
  }
}

}  // namespace refexp
