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

#ifndef REFEXP_DATASET_HPP_
#define REFEXP_DATASET_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "refexp/grammar.hpp"
#include "refexp/scene.hpp"
#include "refexp/vocabulary.hpp"

namespace refexp {

enum class Split { kTrain, kVal, kTest, kNone };

std::string_view to_string(Split s);
std::optional<Split> parse_split(std::string_view s);

struct RefExample {
  std::string id;
  std::string scene_id;
  Region region;
  std::vector<std::string> words;
  Split split = Split::kNone;

  friend bool operator==(const RefExample&, const RefExample&) = default;
};

// A described-free (scene, region) pair.
struct BoxOnly {
  std::string id;
  std::string scene_id;
  Region region;

  friend bool operator==(const BoxOnly&, const BoxOnly&) = default;
};

class Dataset {
 public:
  void add_scene(Scene scene);
  const Scene& scene(const std::string& id) const;
  const Scene* find_scene(const std::string& id) const;
  const std::vector<Scene>& scenes() const { return scenes_; }

  std::vector<RefExample> examples;
  std::vector<BoxOnly> unlabeled;

  std::vector<const RefExample*> split(Split s) const;
  // Word sequences of the training split, for vocabulary construction.
  std::vector<std::vector<std::string>> train_corpus() const;

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.scenes_ == b.scenes_ && a.examples == b.examples && a.unlabeled == b.unlabeled;
  }

 private:
  std::vector<Scene> scenes_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Keeps examples whose words resolve to exactly their region. Returns one message per violation.
std::vector<std::string> verify_unambiguous(const Dataset& d);

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

enum class SplitMode { kObject, kImage };

// Assigns splits to groups of examples (one object, or one scene in image
// mode) in seeded random order. Examples beyond the requested sizes are dropped.
Dataset split_dataset(const Dataset& unsplit, const SplitSizes& sizes, std::uint64_t seed,
                      SplitMode mode = SplitMode::kObject);

struct CorpusConfig {
  GenConfig gen;
  // 0 generates scenes until the split sizes can be filled.
  std::size_t num_scenes = 0;
  double verbose_fraction = 0.5;
  SplitSizes sizes{3600, 400, 800};
  SplitMode split_mode = SplitMode::kObject;
};

// Generates scenes, one oracle expression per object, and the split.
Dataset generate_corpus(const CorpusConfig& config, std::uint64_t seed);

// Object-level halving of the training split into a labeled part and a
// box-only part (expressions dropped). Other splits stay labeled.
Dataset hide_labels(const Dataset& d, double hidden_fraction, std::uint64_t seed);

}  // namespace refexp

#endif  // REFEXP_DATASET_HPP_
