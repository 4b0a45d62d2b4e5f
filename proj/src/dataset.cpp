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

#include "refexp/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <stdexcept>
#include <tuple>

#include "refexp/rng.hpp"

namespace refexp {

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
    case Split::kNone: return "none";
  }
  return "none";
}

std::optional<Split> parse_split(std::string_view s) {
  for (Split v : {Split::kTrain, Split::kVal, Split::kTest, Split::kNone})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

void Dataset::add_scene(Scene scene) {
  if (index_.count(scene.id)) throw std::invalid_argument("duplicate scene id: " + scene.id);
  index_.emplace(scene.id, scenes_.size());
  scenes_.push_back(std::move(scene));
}

const Scene* Dataset::find_scene(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &scenes_[it->second];
}

const Scene& Dataset::scene(const std::string& id) const {
  const Scene* s = find_scene(id);
  if (!s) throw std::out_of_range("unknown scene id: " + id);
  return *s;
}

std::vector<const RefExample*> Dataset::split(Split s) const {
  std::vector<const RefExample*> out;
  for (const auto& e : examples)
    if (e.split == s) out.push_back(&e);
  return out;
}

std::vector<std::vector<std::string>> Dataset::train_corpus() const {
  std::vector<std::vector<std::string>> out;
  for (const auto& e : examples)
    if (e.split == Split::kTrain) out.push_back(e.words);
  return out;
}

std::vector<std::string> verify_unambiguous(const Dataset& d) {
  std::vector<std::string> issues;
  for (const auto& e : d.examples) {
    const Scene* s = d.find_scene(e.scene_id);
    if (!s) {
      issues.push_back(e.id + ": unknown scene " + e.scene_id);
      continue;
    }
    try {
      const auto got = oracle_resolve(*s, e.words);
      if (got.size() != 1 || !got[0].same_box(e.region))
        issues.push_back(e.id + ": resolves to " + std::to_string(got.size()) + " region(s), not its annotation");
    } catch (const std::invalid_argument& err) {
      issues.push_back(e.id + ": " + err.what());
    }
  }
  return issues;
}

namespace {

using ObjectKey = std::tuple<std::string, double, double, double, double>;

ObjectKey object_key(const std::string& scene_id, const Region& r) {
  return {scene_id, r.x_tl, r.y_tl, r.x_br, r.y_br};
}

}  // namespace

Dataset split_dataset(const Dataset& unsplit, const SplitSizes& sizes, std::uint64_t seed, SplitMode mode) {
  const std::size_t requested = sizes.train + sizes.val + sizes.test;
  if (requested > unsplit.examples.size())
    throw std::invalid_argument("split_dataset: requested " + std::to_string(requested) + " examples but corpus has " +
                                std::to_string(unsplit.examples.size()));

  // Group examples by object (or scene), keeping first-appearance order.
  std::map<ObjectKey, std::size_t> group_of;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < unsplit.examples.size(); ++i) {
    const auto& e = unsplit.examples[i];
    ObjectKey key = mode == SplitMode::kImage ? ObjectKey{e.scene_id, 0, 0, 0, 0} : object_key(e.scene_id, e.region);
    auto [it, fresh] = group_of.emplace(key, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, {0x5b1});
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Split> assigned(unsplit.examples.size(), Split::kNone);
  const std::pair<Split, std::size_t> quotas[] = {
      {Split::kTrain, sizes.train}, {Split::kVal, sizes.val}, {Split::kTest, sizes.test}};
  std::size_t q = 0, filled = 0;
  for (std::size_t g : order) {
    while (q < 3 && filled >= quotas[q].second) {
      ++q;
      filled = 0;
    }
    if (q == 3) break;
    for (std::size_t i : groups[g]) assigned[i] = quotas[q].first;
    filled += groups[g].size();
  }

  Dataset out;
  for (const auto& s : unsplit.scenes()) out.add_scene(s);
  for (std::size_t i = 0; i < unsplit.examples.size(); ++i) {
    if (assigned[i] == Split::kNone) continue;
    RefExample e = unsplit.examples[i];
    e.split = assigned[i];
    out.examples.push_back(std::move(e));
  }
  out.unlabeled = unsplit.unlabeled;
  return out;
}

Dataset generate_corpus(const CorpusConfig& config, std::uint64_t seed) {
  validate(config.gen);
  const std::size_t needed = config.sizes.train + config.sizes.val + config.sizes.test;
  Dataset raw;
  std::size_t objects = 0;
  char buf[32];
  for (std::size_t s = 0;; ++s) {
    if (config.num_scenes > 0 ? s >= config.num_scenes : objects >= needed) break;
    std::snprintf(buf, sizeof buf, "s%05zu", s);
    Scene scene = generate_scene(config.gen, derive_seed(seed, {0x5ce, s}), buf);
    Rng style_rng = make_rng(seed, {0x57, s});
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
      const Style style = uniform01(style_rng) < config.verbose_fraction ? Style::kVerbose : Style::kConcise;
      auto words = try_oracle_expression(scene, i, style, derive_seed(seed, {0xe0, s, i}));
      if (!words) throw std::logic_error("generated scene has an indescribable object");
      std::snprintf(buf, sizeof buf, "r%06zu", raw.examples.size());
      raw.examples.push_back(RefExample{buf, scene.id, scene.objects[i].box, std::move(*words), Split::kNone});
    }
    objects += scene.objects.size();
    raw.add_scene(std::move(scene));
  }
  return split_dataset(raw, config.sizes, derive_seed(seed, {0x5b}), config.split_mode);
}

Dataset hide_labels(const Dataset& d, double hidden_fraction, std::uint64_t seed) {
  if (hidden_fraction < 0.0 || hidden_fraction > 1.0)
    throw std::invalid_argument("hide_labels: fraction must lie in [0,1]");
  std::vector<std::size_t> train;
  for (std::size_t i = 0; i < d.examples.size(); ++i)
    if (d.examples[i].split == Split::kTrain) train.push_back(i);
  Rng rng = make_rng(seed, {0x41de});
  std::shuffle(train.begin(), train.end(), rng);
  const auto hidden_count = static_cast<std::size_t>(std::llround(hidden_fraction * double(train.size())));
  std::vector<bool> hidden(d.examples.size(), false);
  for (std::size_t k = 0; k < hidden_count; ++k) hidden[train[k]] = true;

  Dataset out;
  for (const auto& s : d.scenes()) out.add_scene(s);
  out.unlabeled = d.unlabeled;
  char buf[32];
  for (std::size_t i = 0; i < d.examples.size(); ++i) {
    const auto& e = d.examples[i];
    if (hidden[i]) {
      std::snprintf(buf, sizeof buf, "b%06zu", i);
      out.unlabeled.push_back(BoxOnly{buf, e.scene_id, e.region});
    } else {
      out.examples.push_back(e);
    }
  }
  return out;
}

}  // namespace refexp
