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

#ifndef REFEXP_GRAMMAR_HPP_
#define REFEXP_GRAMMAR_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "refexp/scene.hpp"

namespace refexp {

// Template grammar of referring expressions:
//
//   expr     := [superlative] np [relation np]
//   np       := [size] [color] category
//   superlative := leftmost | rightmost | top | bottom | second from left
//   relation := left of | right of
//
// Evaluation order is attributes, then relation, then superlative. Ties in
// spatial ordering are broken by smaller center y, then smaller center x,
// then smaller object index.

enum class Superlative { kNone, kLeftmost, kRightmost, kTop, kBottom, kSecondFromLeft };
enum class Relation { kNone, kLeftOf, kRightOf };

struct NounPhrase {
  std::optional<SizeClass> size;
  std::optional<Color> color;
  Category category = Category::kBall;
  friend bool operator==(const NounPhrase&, const NounPhrase&) = default;
};

struct Description {
  Superlative superlative = Superlative::kNone;
  NounPhrase head;
  Relation relation = Relation::kNone;
  NounPhrase landmark;
  friend bool operator==(const Description&, const Description&) = default;
};

enum class Style { kConcise, kVerbose };

// A word that is not part of the grammar vocabulary.
class UnknownTokenError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};
// Grammar words in an order the grammar does not produce.
class MalformedExpressionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};
// No expression in the grammar singles out the target.
class NoDescriptionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every word the grammar can produce, in a fixed order.
const std::vector<std::string>& grammar_words();

std::vector<std::string> render(const Description& d);
Description parse_description(std::span<const std::string> words);

// Indices of the objects satisfying every predicate of `d`.
std::vector<std::size_t> resolve_indices(const Scene& scene, const Description& d);

std::vector<Region> oracle_resolve(const Scene& scene, std::span<const std::string> words);

std::optional<std::vector<std::string>> try_oracle_expression(const Scene& scene, std::size_t target, Style style,
                                                              std::uint64_t seed);
std::vector<std::string> oracle_expression(const Scene& scene, const Region& target, Style style,
                                           std::uint64_t seed);

}  // namespace refexp

#endif  // REFEXP_GRAMMAR_HPP_
