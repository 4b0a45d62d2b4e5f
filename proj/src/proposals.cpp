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

#include "refexp/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "refexp/rng.hpp"

namespace refexp {

double iou(const Region& a, const Region& b) {
  const double iw = std::min(a.x_br, b.x_br) - std::max(a.x_tl, b.x_tl);
  const double ih = std::min(a.y_br, b.y_br) - std::max(a.y_tl, b.y_tl);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

namespace {

std::optional<Region> clip_box(double x0, double y0, double x1, double y1, const Scene& s) {
  Region r{std::clamp(x0, 0.0, double(s.width)), std::clamp(y0, 0.0, double(s.height)),
           std::clamp(x1, 0.0, double(s.width)), std::clamp(y1, 0.0, double(s.height)), {}, {}};
  if (r.width() < 1.0 || r.height() < 1.0) return std::nullopt;
  return r;
}

Category other_category(Category c, Rng& rng) {
  const auto n = kAllCategories.size();
  const std::size_t shift = 1 + uniform_index(rng, n - 1);
  return kAllCategories[(static_cast<std::size_t>(c) + shift) % n];
}

}  // namespace

ProposalSet generate_proposals(const Scene& scene, const ProposalConfig& c, std::uint64_t seed) {
  if (c.jitter < 0.0 || c.label_noise < 0.0 || c.label_noise > 1.0)
    throw std::invalid_argument("proposal config: jitter must be >= 0 and label_noise in [0,1]");
  Rng rng = make_rng(seed, {0x9b0});
  std::normal_distribution<double> gauss(0.0, 1.0);
  ProposalSet out;

  for (const auto& obj : scene.objects) {
    const Region& b = obj.box;
    for (std::size_t k = 0; k < c.per_object; ++k) {
      const double cx = b.center_x() + c.jitter * b.width() * gauss(rng);
      const double cy = b.center_y() + c.jitter * b.height() * gauss(rng);
      const double w = b.width() * std::exp(c.jitter * gauss(rng));
      const double h = b.height() * std::exp(c.jitter * gauss(rng));
      const bool wrong = uniform01(rng) < c.label_noise;
      const double u = 0.5 + 0.5 * uniform01(rng);
      auto r = clip_box(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h, scene);
      if (!r) continue;
      r->category_label = wrong ? other_category(obj.category, rng) : obj.category;
      r->score = std::min(iou(*r, b) * u, 1.0);
      if (*r->score >= c.score_threshold) out.regions.push_back(*r);
    }
  }
  for (std::size_t k = 0; k < c.distractors; ++k) {
    const double w = 8.0 + uniform01(rng) * 0.5 * scene.width;
    const double h = 8.0 + uniform01(rng) * 0.5 * scene.height;
    const double x = uniform01(rng) * std::max(0.0, scene.width - w);
    const double y = uniform01(rng) * std::max(0.0, scene.height - h);
    const Category label = kAllCategories[uniform_index(rng, kAllCategories.size())];
    const double score = 0.6 * uniform01(rng);
    auto r = clip_box(x, y, x + w, y + h, scene);
    if (!r) continue;
    r->category_label = label;
    r->score = score;
    if (score >= c.score_threshold) out.regions.push_back(*r);
  }
  return out;
}

double proposal_recall(const Scene& scene, const ProposalSet& proposals) {
  if (scene.objects.empty()) return 1.0;
  std::size_t hit = 0;
  for (const auto& o : scene.objects)
    if (std::any_of(proposals.regions.begin(), proposals.regions.end(),
                    [&](const Region& p) { return iou(p, o.box) > 0.5; }))
      ++hit;
  return double(hit) / double(scene.objects.size());
}

}  // namespace refexp
