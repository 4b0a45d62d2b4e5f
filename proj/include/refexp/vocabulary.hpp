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

#ifndef REFEXP_VOCABULARY_HPP_
#define REFEXP_VOCABULARY_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace refexp {

using TokenId = std::uint32_t;

inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kUnk = 2;
inline constexpr std::size_t kReservedTokens = 3;

class Vocabulary {
 public:
  // Reserved tokens only.
  Vocabulary();
  // `words` lists the non-reserved entries in id order starting at 3.
  explicit Vocabulary(std::vector<std::string> words);

  std::size_t size() const { return words_.size(); }
  // Unknown words map to <unk>.
  TokenId id(const std::string& word) const;
  bool contains(const std::string& word) const { return index_.count(word) > 0; }
  const std::string& word(TokenId id) const { return words_.at(id); }
  const std::vector<std::string>& words() const { return words_; }
  // FNV-1a over the id-ordered word list.
  std::uint64_t hash() const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

// Words seen fewer times than this map to <unk>.
inline constexpr std::size_t kDefaultMinCount = 4;

// Keeps words occurring at least `min_count` times; ids assigned by
// descending count, then lexicographically.
Vocabulary build_vocabulary(std::span<const std::vector<std::string>> corpus,
                            std::size_t min_count = kDefaultMinCount);

// Token ids framed by <bos> ... <eos>.
struct Expression {
  std::vector<TokenId> tokens;

  // Number of tokens between the sentinels.
  std::size_t word_count() const { return tokens.size() >= 2 ? tokens.size() - 2 : 0; }
  bool well_formed(std::size_t vocab_size) const;

  friend bool operator==(const Expression&, const Expression&) = default;
  friend auto operator<=>(const Expression&, const Expression&) = default;
};

Expression encode(const Vocabulary& vocab, std::span<const std::string> words);
// Words between the sentinels.
std::vector<std::string> decode(const Vocabulary& vocab, const Expression& e);
// Throws std::invalid_argument naming the violated invariant.
void check_expression(const Expression& e, std::size_t vocab_size);

}  // namespace refexp

#endif  // REFEXP_VOCABULARY_HPP_
