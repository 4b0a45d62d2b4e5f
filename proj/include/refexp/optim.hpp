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

#ifndef REFEXP_OPTIM_HPP_
#define REFEXP_OPTIM_HPP_

#include <cstddef>

#include "refexp/tape.hpp"

namespace refexp {

// lr(i) = initial * 0.5^floor(i / half_every)
struct LrSchedule {
  double initial = 0.01;
  std::size_t half_every = 50000;

  double at(std::size_t iteration) const;
};

// Rescales all gradients jointly so their global L2 norm is at most max_norm.
Gradients clip_global_norm(Gradients g, double max_norm);

// Plain SGD: p -= lr(iteration) * g[p] for every trainable parameter.
void sgd_step(ParamStore& params, const Gradients& g, const LrSchedule& schedule, std::size_t iteration);

}  // namespace refexp

#endif  // REFEXP_OPTIM_HPP_
