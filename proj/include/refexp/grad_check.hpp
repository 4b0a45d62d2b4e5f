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

#ifndef REFEXP_GRAD_CHECK_HPP_
#define REFEXP_GRAD_CHECK_HPP_

#include <cstddef>
#include <functional>
#include <vector>

#include "refexp/tape.hpp"

namespace refexp {

struct GradCheckEntry {
  ParamId param = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  bool finite = true;
};

struct GradCheckReport {
  std::size_t checked = 0;
  std::size_t nonfinite = 0;
  double max_rel_error = 0.0;
  bool passed = true;
  std::vector<GradCheckEntry> failures;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tol = 1e-4;
  // Entries with |analytic| and |numeric| both below this are compared absolutely.
  double floor = 1e-6;
  // 0 checks every entry; otherwise at most this many evenly spaced entries per array.
  std::size_t max_entries_per_param = 0;
};

// Builds a scalar loss on a tape bound to the given store.
using LossBuilder = std::function<NodeId(Tape&)>;

double relative_error(double analytic, double numeric, double floor);

// Compares backward() against central differences for every trainable entry.
// The store is perturbed in place and restored before returning.
GradCheckReport grad_check(const LossBuilder& f, ParamStore& params, const GradCheckOptions& options = {});

}  // namespace refexp

#endif  // REFEXP_GRAD_CHECK_HPP_
