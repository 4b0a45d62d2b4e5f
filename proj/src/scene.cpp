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

#include "refexp/scene.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "refexp/grammar.hpp"
#include "refexp/rng.hpp"

namespace refexp {

std::string_view to_string(Category c) {
  switch (c) {
    case Category::kBall: return "ball";
    case Category::kBox: return "box";
    case Category::kBar: return "bar";
    case Category::kCone: return "cone";
  }
  return "?";
}

std::string_view to_string(Color c) {
  switch (c) {
    case Color::kRed: return "red";
    case Color::kGreen: return "green";
    case Color::kBlue: return "blue";
    case Color::kYellow: return "yellow";
    case Color::kPurple: return "purple";
    case Color::kWhite: return "white";
  }
  return "?";
}

std::string_view to_string(SizeClass s) { return s == SizeClass::kSmall ? "small" : "large"; }

std::optional<Category> parse_category(std::string_view s) {
  for (auto c : kAllCategories)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

std::optional<Color> parse_color(std::string_view s) {
  for (auto c : kAllColors)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

std::optional<SizeClass> parse_size(std::string_view s) {
  for (auto c : kAllSizes)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

std::array<double, 3> rgb(Color c) {
  switch (c) {
    case Color::kRed: return {0.90, 0.15, 0.15};
    case Color::kGreen: return {0.15, 0.75, 0.20};
    case Color::kBlue: return {0.15, 0.30, 0.90};
    case Color::kYellow: return {0.95, 0.90, 0.20};
    case Color::kPurple: return {0.60, 0.20, 0.75};
    case Color::kWhite: return {0.97, 0.97, 0.97};
  }
  return kBackground;
}

bool Region::valid() const {
  return std::isfinite(x_tl) && std::isfinite(y_tl) && std::isfinite(x_br) && std::isfinite(y_br) && x_tl < x_br &&
         y_tl < y_br && (!score || (*score >= 0.0 && *score <= 1.0));
}

bool Region::within(double w, double h) const { return x_tl >= 0 && y_tl >= 0 && x_br <= w && y_br <= h; }

bool Region::same_box(const Region& o) const {
  return x_tl == o.x_tl && y_tl == o.y_tl && x_br == o.x_br && y_br == o.y_br;
}

namespace {

bool covers(const SceneObject& obj, double px, double py) {
  const Region& b = obj.box;
  if (px < b.x_tl || px >= b.x_br || py < b.y_tl || py >= b.y_br) return false;
  switch (obj.category) {
    case Category::kBox:
    case Category::kBar:
      return true;
    case Category::kBall: {
      const double dx = (px - b.center_x()) / (0.5 * b.width());
      const double dy = (py - b.center_y()) / (0.5 * b.height());
      return dx * dx + dy * dy <= 1.0;
    }
    case Category::kCone: {
      const double depth = (py - b.y_tl) / b.height();
      return std::abs(px - b.center_x()) <= 0.5 * b.width() * depth;
    }
  }
  return false;
}

}  // namespace

Tensor rasterize(const std::vector<SceneObject>& objects, int width, int height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("rasterize: scene extents must be positive");
  Tensor img(Shape{std::size_t(height), std::size_t(width), 3}, 0.0);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      std::array<double, 3> c = kBackground;
      // Painter's order: later objects overwrite earlier ones.
      for (const auto& obj : objects)
        if (covers(obj, x + 0.5, y + 0.5)) c = rgb(obj.color);
      for (int k = 0; k < 3; ++k) img.data[(std::size_t(y) * width + x) * 3 + k] = c[k];
    }
  return img;
}

Scene::Scene(std::string scene_id, int w, int h, std::vector<SceneObject> objs)
    : id(std::move(scene_id)), width(w), height(h), objects(std::move(objs)), raster(rasterize(objects, w, h)) {}

std::vector<Region> Scene::object_regions() const {
  std::vector<Region> out;
  out.reserve(objects.size());
  for (const auto& o : objects) out.push_back(o.box);
  return out;
}

std::optional<std::size_t> Scene::find_object(const Region& box) const {
  for (std::size_t i = 0; i < objects.size(); ++i)
    if (objects[i].box.same_box(box)) return i;
  return std::nullopt;
}

void validate(const GenConfig& c) {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("generation config: " + msg); };
  if (c.width <= 0 || c.height <= 0) fail("scene extents must be positive");
  if (c.min_objects < 2) fail("min_objects must be at least 2");
  if (c.max_objects < c.min_objects) fail("max_objects < min_objects");
  if (c.categories.empty() || c.colors.empty()) fail("attribute palettes must be nonempty");
  if (c.min_same < 2 || c.max_same > 4 || c.min_same > c.max_same) fail("same-category multiplicity must lie in [2,4]");
  if (c.min_same > c.max_objects) fail("min_same exceeds max_objects");
  if (!(c.min_area_fraction >= 0.0) || !(c.min_area_fraction < 1.0)) fail("min_area_fraction must lie in [0,1)");
  if (c.min_area_fraction * c.min_objects > 1.0)
    fail("min_area_fraction * min_objects exceeds the scene area");
  if (c.small_side_min <= 0 || c.small_side_min > c.small_side_max || c.large_side_min > c.large_side_max)
    fail("size ranges are empty");
  const double scene_area = double(c.width) * c.height;
  // The widest shape is the bar at 1.6 x the base side.
  const int widest = static_cast<int>(std::lround(1.6 * c.large_side_max));
  if (widest > c.width || c.large_side_max > c.height) fail("largest object does not fit in the scene");
  // A bar covers 0.96 side^2, the smallest footprint of any category.
  for (int side : {c.small_side_max, c.large_side_max})
    if (0.96 * side * side < c.min_area_fraction * scene_area)
      fail("a size class can never satisfy the minimum area");
  if (c.shared_color_prob < 0.0 || c.shared_color_prob > 1.0) fail("shared_color_prob must lie in [0,1]");
  if (c.max_attempts <= 0) fail("max_attempts must be positive");
}

namespace {

std::pair<int, int> object_extent(Category cat, int side) {
  if (cat == Category::kBar)
    return {static_cast<int>(std::lround(1.6 * side)), static_cast<int>(std::lround(0.6 * side))};
  return {side, side};
}

bool boxes_overlap(const Region& a, const Region& b) {
  return a.x_tl < b.x_br && b.x_tl < a.x_br && a.y_tl < b.y_br && b.y_tl < a.y_br;
}

std::optional<std::vector<SceneObject>> sample_objects(const GenConfig& c, Rng& rng) {
  const double min_area = c.min_area_fraction * c.width * c.height;
  const int n = c.min_objects + static_cast<int>(uniform_index(rng, std::size_t(c.max_objects - c.min_objects + 1)));
  const Category pressure = c.categories[uniform_index(rng, c.categories.size())];
  const int hi = std::min(c.max_same, n);
  const int m = c.min_same + static_cast<int>(uniform_index(rng, std::size_t(hi - c.min_same + 1)));

  std::vector<Category> cats(std::size_t(m), pressure);
  std::map<Category, int> counts{{pressure, m}};
  while (int(cats.size()) < n) {
    const Category cat = c.categories[uniform_index(rng, c.categories.size())];
    if (counts[cat] >= 4) continue;
    ++counts[cat];
    cats.push_back(cat);
  }
  std::shuffle(cats.begin(), cats.end(), rng);

  std::vector<SceneObject> objs;
  for (Category cat : cats) {
    SceneObject o;
    o.category = cat;
    std::vector<Color> earlier;
    for (const auto& p : objs)
      if (p.category == cat) earlier.push_back(p.color);
    if (!earlier.empty() && uniform01(rng) < c.shared_color_prob)
      o.color = earlier[uniform_index(rng, earlier.size())];
    else
      o.color = c.colors[uniform_index(rng, c.colors.size())];
    o.size = uniform01(rng) < 0.5 ? SizeClass::kSmall : SizeClass::kLarge;

    bool placed = false;
    for (int tries = 0; tries < 200 && !placed; ++tries) {
      const int lo = o.size == SizeClass::kSmall ? c.small_side_min : c.large_side_min;
      const int up = o.size == SizeClass::kSmall ? c.small_side_max : c.large_side_max;
      const int side = lo + static_cast<int>(uniform_index(rng, std::size_t(up - lo + 1)));
      const auto [w, h] = object_extent(cat, side);
      if (w > c.width || h > c.height || double(w) * h < min_area) continue;
      const int x = static_cast<int>(uniform_index(rng, std::size_t(c.width - w + 1)));
      const int y = static_cast<int>(uniform_index(rng, std::size_t(c.height - h + 1)));
      o.box = Region{double(x), double(y), double(x + w), double(y + h), {}, {}};
      placed = std::none_of(objs.begin(), objs.end(), [&](const SceneObject& p) { return boxes_overlap(p.box, o.box); });
    }
    if (!placed) return std::nullopt;
    objs.push_back(o);
  }
  return objs;
}

}  // namespace

std::vector<std::string> check_scene(const Scene& scene, const GenConfig& config) {
  std::vector<std::string> issues;
  if (scene.objects.size() < 2) issues.push_back("fewer than 2 objects");
  std::map<Category, int> counts;
  for (const auto& o : scene.objects) ++counts[o.category];
  const bool pressured = std::any_of(counts.begin(), counts.end(), [](const auto& kv) {
    return kv.second >= 2 && kv.second <= 4;
  });
  if (!pressured) issues.push_back("no category with 2 to 4 instances");
  const double min_area = config.min_area_fraction * scene.width * scene.height;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const Region& b = scene.objects[i].box;
    if (!b.valid() || !b.within(scene.width, scene.height))
      issues.push_back("object " + std::to_string(i) + " box invalid or out of bounds");
    if (b.area() < min_area) issues.push_back("object " + std::to_string(i) + " below minimum area");
    for (std::size_t j = i + 1; j < scene.objects.size(); ++j)
      if (scene.objects[i] == scene.objects[j]) issues.push_back("objects " + std::to_string(i) + " and " +
                                                                  std::to_string(j) + " are identical");
  }
  return issues;
}

Scene generate_scene(const GenConfig& config, std::uint64_t seed, std::string id) {
  validate(config);
  Rng rng = make_rng(seed, {0x5ce4e});
  for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
    auto objs = sample_objects(config, rng);
    if (!objs) continue;
    Scene scene(id, config.width, config.height, std::move(*objs));
    if (!check_scene(scene, config).empty()) continue;
    bool describable = true;
    for (std::size_t i = 0; i < scene.objects.size() && describable; ++i)
      describable = try_oracle_expression(scene, i, Style::kConcise, 0).has_value();
    if (describable) return scene;
  }
  throw std::runtime_error("generate_scene: no valid scene after " + std::to_string(config.max_attempts) +
                           " attempts");
}

}  // namespace refexp
