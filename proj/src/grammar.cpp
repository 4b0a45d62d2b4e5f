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

#include "refexp/grammar.hpp"

#include <algorithm>
#include <tuple>

#include "refexp/rng.hpp"

namespace refexp {

namespace {

std::string_view superlative_word(Superlative s) {
  switch (s) {
    case Superlative::kLeftmost: return "leftmost";
    case Superlative::kRightmost: return "rightmost";
    case Superlative::kTop: return "top";
    case Superlative::kBottom: return "bottom";
    default: return "";
  }
}

void append_np(std::vector<std::string>& out, const NounPhrase& np) {
  if (np.size) out.emplace_back(to_string(*np.size));
  if (np.color) out.emplace_back(to_string(*np.color));
  out.emplace_back(to_string(np.category));
}

bool matches(const SceneObject& o, const NounPhrase& np) {
  return o.category == np.category && (!np.size || *np.size == o.size) && (!np.color || *np.color == o.color);
}

// Spatial tie-break key: center y, then center x, then index.
auto tie_key(const Scene& scene, std::size_t i) {
  const Region& b = scene.objects[i].box;
  return std::make_tuple(b.center_y(), b.center_x(), i);
}

std::size_t extreme(const Scene& scene, const std::vector<std::size_t>& set, Superlative s) {
  auto primary = [&](std::size_t i) {
    const Region& b = scene.objects[i].box;
    switch (s) {
      case Superlative::kLeftmost: return b.center_x();
      case Superlative::kRightmost: return -b.center_x();
      case Superlative::kTop: return b.center_y();
      case Superlative::kBottom: return -b.center_y();
      default: return 0.0;
    }
  };
  return *std::min_element(set.begin(), set.end(), [&](std::size_t a, std::size_t b) {
    const double pa = primary(a), pb = primary(b);
    if (pa != pb) return pa < pb;
    return tie_key(scene, a) < tie_key(scene, b);
  });
}

struct Candidate {
  Description desc;
  std::size_t length = 0;
  int spatial = 0;
};

std::size_t np_length(const NounPhrase& np) { return 1 + (np.size ? 1 : 0) + (np.color ? 1 : 0); }

Candidate make_candidate(const Description& d) {
  Candidate c{d, np_length(d.head), 0};
  if (d.superlative == Superlative::kSecondFromLeft) c.length += 3;
  else if (d.superlative != Superlative::kNone) c.length += 1;
  if (d.superlative != Superlative::kNone) ++c.spatial;
  if (d.relation != Relation::kNone) {
    c.length += 2 + np_length(d.landmark);
    ++c.spatial;
  }
  return c;
}

std::vector<NounPhrase> np_variants(const SceneObject& o) {
  return {NounPhrase{std::nullopt, std::nullopt, o.category}, NounPhrase{std::nullopt, o.color, o.category},
          NounPhrase{o.size, std::nullopt, o.category}, NounPhrase{o.size, o.color, o.category}};
}

bool singles_out(const Scene& scene, const Description& d, std::size_t target) {
  const auto got = resolve_indices(scene, d);
  return got.size() == 1 && got[0] == target;
}

}  // namespace

const std::vector<std::string>& grammar_words() {
  static const std::vector<std::string> words = [] {
    std::vector<std::string> w;
    for (auto s : kAllSizes) w.emplace_back(to_string(s));
    for (auto c : kAllColors) w.emplace_back(to_string(c));
    for (auto c : kAllCategories) w.emplace_back(to_string(c));
    for (const char* s : {"leftmost", "rightmost", "top", "bottom", "second", "from", "left", "right", "of"})
      w.emplace_back(s);
    return w;
  }();
  return words;
}

std::vector<std::string> render(const Description& d) {
  std::vector<std::string> out;
  if (d.superlative == Superlative::kSecondFromLeft) {
    out.insert(out.end(), {"second", "from", "left"});
  } else if (d.superlative != Superlative::kNone) {
    out.emplace_back(superlative_word(d.superlative));
  }
  append_np(out, d.head);
  if (d.relation != Relation::kNone) {
    out.emplace_back(d.relation == Relation::kLeftOf ? "left" : "right");
    out.emplace_back("of");
    append_np(out, d.landmark);
  }
  return out;
}

Description parse_description(std::span<const std::string> words) {
  const auto& vocab = grammar_words();
  for (const auto& w : words)
    if (std::find(vocab.begin(), vocab.end(), w) == vocab.end())
      throw UnknownTokenError("token '" + w + "' is not in the grammar");

  std::size_t pos = 0;
  auto malformed = [&](const std::string& why) -> MalformedExpressionError {
    std::string text;
    for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
    return MalformedExpressionError("cannot parse '" + text + "': " + why);
  };
  auto peek = [&](std::size_t k = 0) -> std::string_view {
    return pos + k < words.size() ? std::string_view(words[pos + k]) : std::string_view();
  };
  auto parse_np = [&]() {
    NounPhrase np;
    if (auto s = parse_size(peek())) {
      np.size = s;
      ++pos;
    }
    if (auto c = parse_color(peek())) {
      np.color = c;
      ++pos;
    }
    auto cat = parse_category(peek());
    if (!cat) throw malformed("expected a category at word " + std::to_string(pos));
    np.category = *cat;
    ++pos;
    return np;
  };

  Description d;
  const std::string_view first = peek();
  if (first == "leftmost") d.superlative = Superlative::kLeftmost;
  else if (first == "rightmost") d.superlative = Superlative::kRightmost;
  else if (first == "top") d.superlative = Superlative::kTop;
  else if (first == "bottom") d.superlative = Superlative::kBottom;
  if (d.superlative != Superlative::kNone) {
    ++pos;
  } else if (first == "second") {
    if (peek(1) != "from" || peek(2) != "left") throw malformed("expected 'second from left'");
    d.superlative = Superlative::kSecondFromLeft;
    pos += 3;
  }
  d.head = parse_np();
  if (pos < words.size()) {
    if (peek() == "left") d.relation = Relation::kLeftOf;
    else if (peek() == "right") d.relation = Relation::kRightOf;
    else throw malformed("unexpected word '" + std::string(peek()) + "'");
    if (peek(1) != "of") throw malformed("expected 'of' after '" + std::string(peek()) + "'");
    pos += 2;
    d.landmark = parse_np();
  }
  if (pos != words.size()) throw malformed("trailing words");
  return d;
}

std::vector<std::size_t> resolve_indices(const Scene& scene, const Description& d) {
  std::vector<std::size_t> set;
  for (std::size_t i = 0; i < scene.objects.size(); ++i)
    if (matches(scene.objects[i], d.head)) set.push_back(i);

  if (d.relation != Relation::kNone) {
    std::vector<std::size_t> kept;
    for (std::size_t h : set) {
      const double hx = scene.objects[h].box.center_x();
      for (std::size_t l = 0; l < scene.objects.size(); ++l) {
        if (l == h || !matches(scene.objects[l], d.landmark)) continue;
        const double lx = scene.objects[l].box.center_x();
        if (d.relation == Relation::kLeftOf ? hx < lx : hx > lx) {
          kept.push_back(h);
          break;
        }
      }
    }
    set = std::move(kept);
  }

  if (set.empty() || d.superlative == Superlative::kNone) return set;
  if (d.superlative == Superlative::kSecondFromLeft) {
    if (set.size() < 2) return {};
    std::sort(set.begin(), set.end(), [&](std::size_t a, std::size_t b) {
      const double ax = scene.objects[a].box.center_x(), bx = scene.objects[b].box.center_x();
      if (ax != bx) return ax < bx;
      return tie_key(scene, a) < tie_key(scene, b);
    });
    return {set[1]};
  }
  return {extreme(scene, set, d.superlative)};
}

std::vector<Region> oracle_resolve(const Scene& scene, std::span<const std::string> words) {
  const Description d = parse_description(words);
  std::vector<Region> out;
  for (std::size_t i : resolve_indices(scene, d)) out.push_back(scene.objects[i].box);
  return out;
}

std::optional<std::vector<std::string>> try_oracle_expression(const Scene& scene, std::size_t target, Style style,
                                                              std::uint64_t seed) {
  if (target >= scene.objects.size()) throw std::out_of_range("oracle_expression: target index out of range");
  const SceneObject& obj = scene.objects[target];

  std::vector<Candidate> cands;
  const Superlative sups[] = {Superlative::kNone,   Superlative::kLeftmost, Superlative::kRightmost,
                              Superlative::kTop,    Superlative::kBottom,   Superlative::kSecondFromLeft};
  for (const auto& head : np_variants(obj))
    for (Superlative s : sups) {
      cands.push_back(make_candidate(Description{s, head, Relation::kNone, {}}));
      for (std::size_t l = 0; l < scene.objects.size(); ++l) {
        if (l == target) continue;
        for (const auto& lm : np_variants(scene.objects[l]))
          for (Relation r : {Relation::kLeftOf, Relation::kRightOf})
            cands.push_back(make_candidate(Description{s, head, r, lm}));
      }
    }
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.length, a.spatial) < std::tie(b.length, b.spatial);
  });

  // Collect every discriminating candidate in the first (length, spatial) tier.
  std::vector<const Candidate*> best;
  for (const auto& c : cands) {
    if (!best.empty() && (c.length != best[0]->length || c.spatial != best[0]->spatial)) break;
    if (!singles_out(scene, c.desc, target)) continue;
    if (std::none_of(best.begin(), best.end(), [&](const Candidate* b) { return b->desc == c.desc; }))
      best.push_back(&c);
  }
  if (best.empty()) return std::nullopt;

  Rng rng = make_rng(seed, {0x0e1, target});
  Description d = best[uniform_index(rng, best.size())]->desc;
  if (style == Style::kVerbose) {
    // Add redundant true attributes, keeping only variants that still resolve uniquely.
    const NounPhrase full{obj.size, obj.color, obj.category};
    const NounPhrase options[] = {full, NounPhrase{d.head.size, obj.color, obj.category},
                                  NounPhrase{obj.size, d.head.color, obj.category}};
    for (const auto& head : options) {
      Description v = d;
      v.head = head;
      if (singles_out(scene, v, target)) {
        d = v;
        break;
      }
    }
  }
  return render(d);
}

std::vector<std::string> oracle_expression(const Scene& scene, const Region& target, Style style,
                                           std::uint64_t seed) {
  const auto idx = scene.find_object(target);
  if (!idx) throw std::invalid_argument("oracle_expression: target is not an object of the scene");
  auto words = try_oracle_expression(scene, *idx, style, seed);
  if (!words) throw NoDescriptionError("no discriminating description exists for object " + std::to_string(*idx));
  return *words;
}

}  // namespace refexp
