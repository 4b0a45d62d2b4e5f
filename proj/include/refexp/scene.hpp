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

#ifndef REFEXP_SCENE_HPP_
#define REFEXP_SCENE_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "refexp/tensor.hpp"

namespace refexp {

enum class Category { kBall, kBox, kBar, kCone };
enum class Color { kRed, kGreen, kBlue, kYellow, kPurple, kWhite };
enum class SizeClass { kSmall, kLarge };

inline constexpr std::array kAllCategories = {Category::kBall, Category::kBox, Category::kBar, Category::kCone};
inline constexpr std::array kAllColors = {Color::kRed,    Color::kGreen,  Color::kBlue,
                                          Color::kYellow, Color::kPurple, Color::kWhite};
inline constexpr std::array kAllSizes = {SizeClass::kSmall, SizeClass::kLarge};

std::string_view to_string(Category c);
std::string_view to_string(Color c);
std::string_view to_string(SizeClass s);
std::optional<Category> parse_category(std::string_view s);
std::optional<Color> parse_color(std::string_view s);
std::optional<SizeClass> parse_size(std::string_view s);
std::array<double, 3> rgb(Color c);

// Axis-aligned box in pixel coordinates; proposals also carry a label and score.
struct Region {
  double x_tl = 0, y_tl = 0, x_br = 0, y_br = 0;
  std::optional<Category> category_label;
  std::optional<double> score;

  double width() const { return x_br - x_tl; }
  double height() const { return y_br - y_tl; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x_tl + x_br); }
  double center_y() const { return 0.5 * (y_tl + y_br); }
  bool valid() const;
  bool within(double w, double h) const;
  // Geometry only; label and score are ignored.
  bool same_box(const Region& o) const;

  friend bool operator==(const Region&, const Region&) = default;
};

struct SceneObject {
  Category category = Category::kBall;
  Color color = Color::kRed;
  SizeClass size = SizeClass::kSmall;
  Region box;

  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

// Rendered as [H, W, 3] with values in [0, 1].
Tensor rasterize(const std::vector<SceneObject>& objects, int width, int height);
inline constexpr std::array<double, 3> kBackground = {0.25, 0.25, 0.25};

struct Scene {
  std::string id;
  int width = 64;
  int height = 64;
  std::vector<SceneObject> objects;
  Tensor raster;

  Scene() = default;
  Scene(std::string id, int width, int height, std::vector<SceneObject> objects);

  Region full_box() const { return Region{0, 0, double(width), double(height), {}, {}}; }
  std::vector<Region> object_regions() const;
  // Index of the object whose box equals `box`, if any.
  std::optional<std::size_t> find_object(const Region& box) const;

  friend bool operator==(const Scene& a, const Scene& b) {
    return a.id == b.id && a.width == b.width && a.height == b.height && a.objects == b.objects;
  }
};

struct GenConfig {
  int width = 64;
  int height = 64;
  int min_objects = 3;
  int max_objects = 5;
  std::vector<Category> categories{kAllCategories.begin(), kAllCategories.end()};
  std::vector<Color> colors{kAllColors.begin(), kAllColors.end()};
  double min_area_fraction = 0.05;
  // Multiplicity range of the category that is forced to repeat.
  int min_same = 2;
  int max_same = 4;
  // Probability that a repeated-category instance copies an earlier instance's color.
  double shared_color_prob = 0.5;
  int small_side_min = 15;
  int small_side_max = 19;
  int large_side_min = 22;
  int large_side_max = 27;
  int max_attempts = 2000;
};

// Throws std::invalid_argument when the constraints cannot be met.
void validate(const GenConfig& config);

Scene generate_scene(const GenConfig& config, std::uint64_t seed, std::string id = "scene");

// Violations of the scene invariants; empty when the scene is well formed.
std::vector<std::string> check_scene(const Scene& scene, const GenConfig& config);

}  // namespace refexp

#endif  // REFEXP_SCENE_HPP_
