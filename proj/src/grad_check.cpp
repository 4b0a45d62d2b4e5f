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

#include "refexp/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace refexp {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const LossBuilder& f, ParamStore& params, const GradCheckOptions& options) {
  if (!(options.step > 0.0) || !(options.tol > 0.0))
    throw std::invalid_argument("grad_check: step and tol must be positive");

  Gradients analytic;
  {
    Tape tape(&params);
    const NodeId loss = f(tape);
    analytic = tape.backward(loss);
  }
  auto eval = [&]() {
    Tape tape(&params);
    return tape.scalar(f(tape));
  };

  GradCheckReport report;
  for (ParamId p = 0; p < params.size(); ++p) {
    if (!params.trainable(p)) continue;
    Tensor& value = params.value(p);
    const std::size_t n = value.size();
    std::size_t stride = 1;
    if (options.max_entries_per_param > 0 && n > options.max_entries_per_param)
      stride = (n + options.max_entries_per_param - 1) / options.max_entries_per_param;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = value[i];
      value[i] = saved + options.step;
      const double up = eval();
      value[i] = saved - options.step;
      const double down = eval();
      value[i] = saved;

      GradCheckEntry e{p, i, analytic[p][i], (up - down) / (2.0 * options.step), 0.0, true};
      ++report.checked;
      if (!std::isfinite(up) || !std::isfinite(down) || !std::isfinite(e.analytic)) {
        e.finite = false;
        ++report.nonfinite;
        report.passed = false;
        report.failures.push_back(e);
        continue;
      }
      e.rel_error = relative_error(e.analytic, e.numeric, options.floor);
      report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
      if (e.rel_error > options.tol) {
        report.passed = false;
        report.failures.push_back(e);
      }
    }
  }
  return report;
}

}  // namespace refexp
