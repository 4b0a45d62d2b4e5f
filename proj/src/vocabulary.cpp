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

#include "refexp/vocabulary.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "refexp/hash.hpp"

namespace refexp {

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> words) {
  words_ = {"<bos>", "<eos>", "<unk>"};
  words_.insert(words_.end(), words.begin(), words.end());
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<TokenId>(i)).second)
      throw std::invalid_argument("duplicate vocabulary word: " + words_[i]);
  }
}

TokenId Vocabulary::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& w : words_) {
    h = fnv1a64(w, h);
    h = fnv1a64("\n", h);
  }
  return h;
}

Vocabulary build_vocabulary(std::span<const std::vector<std::string>> corpus, std::size_t min_count) {
  if (min_count < 1) throw std::invalid_argument("build_vocabulary: min_count must be at least 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& sentence : corpus)
    for (const auto& w : sentence) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [w, c] : counts)
    if (c >= min_count && w != "<bos>" && w != "<eos>" && w != "<unk>") kept.emplace_back(w, c);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  for (auto& [w, c] : kept) words.push_back(w);
  return Vocabulary(std::move(words));
}

bool Expression::well_formed(std::size_t vocab_size) const {
  if (tokens.size() < 3 || tokens.front() != kBos || tokens.back() != kEos) return false;
  for (std::size_t i = 1; i + 1 < tokens.size(); ++i)
    if (tokens[i] == kBos || tokens[i] == kEos || tokens[i] >= vocab_size) return false;
  return true;
}

void check_expression(const Expression& e, std::size_t vocab_size) {
  if (!e.well_formed(vocab_size))
    throw std::invalid_argument("malformed expression: expected <bos> w1..wn <eos> with n >= 1 and ids < " +
                                std::to_string(vocab_size));
}

Expression encode(const Vocabulary& vocab, std::span<const std::string> words) {
  Expression e;
  e.tokens.reserve(words.size() + 2);
  e.tokens.push_back(kBos);
  for (const auto& w : words) e.tokens.push_back(vocab.id(w));
  e.tokens.push_back(kEos);
  return e;
}

std::vector<std::string> decode(const Vocabulary& vocab, const Expression& e) {
  std::vector<std::string> out;
  for (TokenId t : e.tokens) {
    if (t == kBos || t == kEos) continue;
    out.push_back(vocab.word(t));
  }
  return out;
}

}  // namespace refexp
