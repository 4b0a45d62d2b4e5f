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

#include "refexp/dataset_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "refexp/hash.hpp"

namespace refexp {

using nlohmann::json;

namespace {

json box_json(const Region& r) { return json::array({r.x_tl, r.y_tl, r.x_br, r.y_br}); }

Region parse_box(const json& j, std::size_t line) {
  if (!j.is_array() || j.size() != 4)
    throw DatasetFormatError(line, "box must be an array [x_tl, y_tl, x_br, y_br]");
  for (const auto& v : j)
    if (!v.is_number()) throw DatasetFormatError(line, "box coordinates must be numbers");
  Region r{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>(), {}, {}};
  if (!(r.x_tl < r.x_br) || !(r.y_tl < r.y_br))
    throw DatasetFormatError(line, "degenerate box: requires x_tl < x_br and y_tl < y_br");
  return r;
}

const json& field(const json& j, const char* name, std::size_t line) {
  auto it = j.find(name);
  if (it == j.end()) throw DatasetFormatError(line, std::string("missing field '") + name + "'");
  return *it;
}

std::string string_field(const json& j, const char* name, std::size_t line) {
  const json& v = field(j, name, line);
  if (!v.is_string()) throw DatasetFormatError(line, std::string("field '") + name + "' must be a string");
  return v.get<std::string>();
}

int int_field(const json& j, const char* name, std::size_t line) {
  const json& v = field(j, name, line);
  if (!v.is_number_integer() || v.get<long long>() <= 0)
    throw DatasetFormatError(line, std::string("field '") + name + "' must be a positive integer");
  return v.get<int>();
}

}  // namespace

std::string to_jsonl(const Dataset& d) {
  std::string out;
  for (const auto& s : d.scenes()) {
    json objs = json::array();
    for (const auto& o : s.objects)
      objs.push_back({{"category", to_string(o.category)},
                      {"color", to_string(o.color)},
                      {"size", to_string(o.size)},
                      {"box", box_json(o.box)}});
    json rec = {{"kind", "scene"}, {"id", s.id}, {"width", s.width}, {"height", s.height}, {"objects", objs}};
    out += rec.dump() + '\n';
  }
  for (const auto& e : d.examples) {
    json rec = {{"kind", "refexample"},       {"id", e.id},       {"scene_id", e.scene_id},
                {"box", box_json(e.region)}, {"tokens", e.words}, {"split", to_string(e.split)}};
    out += rec.dump() + '\n';
  }
  for (const auto& b : d.unlabeled) {
    json rec = {{"kind", "bbonly"}, {"id", b.id}, {"scene_id", b.scene_id}, {"box", box_json(b.region)}};
    out += rec.dump() + '\n';
  }
  return out;
}

Dataset from_jsonl(const std::string& text) {
  struct Pending {
    std::size_t line;
    std::string scene_id;
    Region box;
  };
  Dataset d;
  std::vector<std::pair<Pending, RefExample>> refs;
  std::vector<std::pair<Pending, BoxOnly>> boxes;
  std::set<std::string> record_ids;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    ++line_no;
    const std::size_t eol = text.find('\n', pos);
    const std::string line = text.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
    pos = eol == std::string::npos ? text.size() : eol + 1;
    if (line.empty()) continue;

    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& err) {
      throw DatasetFormatError(line_no, std::string("invalid JSON (truncated record?): ") + err.what());
    }
    if (!rec.is_object()) throw DatasetFormatError(line_no, "record must be a JSON object");
    const std::string kind = string_field(rec, "kind", line_no);
    const std::string id = string_field(rec, "id", line_no);

    if (kind == "scene") {
      const int w = int_field(rec, "width", line_no);
      const int h = int_field(rec, "height", line_no);
      const json& objs = field(rec, "objects", line_no);
      if (!objs.is_array()) throw DatasetFormatError(line_no, "'objects' must be an array");
      std::vector<SceneObject> objects;
      for (const auto& o : objs) {
        if (!o.is_object()) throw DatasetFormatError(line_no, "scene object must be a JSON object");
        SceneObject so;
        const auto cat = parse_category(string_field(o, "category", line_no));
        const auto col = parse_color(string_field(o, "color", line_no));
        const auto sz = parse_size(string_field(o, "size", line_no));
        if (!cat || !col || !sz) throw DatasetFormatError(line_no, "unknown object attribute value");
        so.category = *cat;
        so.color = *col;
        so.size = *sz;
        so.box = parse_box(field(o, "box", line_no), line_no);
        if (!so.box.within(w, h)) throw DatasetFormatError(line_no, "object box outside the scene bounds");
        objects.push_back(so);
      }
      if (d.find_scene(id)) throw DatasetFormatError(line_no, "duplicate scene id '" + id + "'");
      d.add_scene(Scene(id, w, h, std::move(objects)));
    } else if (kind == "refexample" || kind == "bbonly") {
      if (!record_ids.insert(id).second) throw DatasetFormatError(line_no, "duplicate record id '" + id + "'");
      Pending p{line_no, string_field(rec, "scene_id", line_no), parse_box(field(rec, "box", line_no), line_no)};
      if (kind == "bbonly") {
        boxes.push_back({p, BoxOnly{id, p.scene_id, p.box}});
        continue;
      }
      const json& toks = field(rec, "tokens", line_no);
      if (!toks.is_array() || toks.empty()) throw DatasetFormatError(line_no, "'tokens' must be a nonempty array");
      std::vector<std::string> words;
      for (const auto& t : toks) {
        if (!t.is_string()) throw DatasetFormatError(line_no, "tokens must be strings");
        words.push_back(t.get<std::string>());
      }
      const auto split = parse_split(string_field(rec, "split", line_no));
      if (!split) throw DatasetFormatError(line_no, "unknown split");
      refs.push_back({p, RefExample{id, p.scene_id, p.box, std::move(words), *split}});
    } else {
      throw DatasetFormatError(line_no, "unknown record kind '" + kind + "'");
    }
  }

  auto check_ref = [&](const Pending& p) {
    const Scene* s = d.find_scene(p.scene_id);
    if (!s) throw DatasetFormatError(p.line, "unknown scene_id '" + p.scene_id + "'");
    if (!p.box.within(s->width, s->height)) throw DatasetFormatError(p.line, "box outside the scene bounds");
  };
  for (auto& [p, e] : refs) {
    check_ref(p);
    d.examples.push_back(std::move(e));
  }
  for (auto& [p, b] : boxes) {
    check_ref(p);
    d.unlabeled.push_back(std::move(b));
  }
  return d;
}

void save_dataset(const std::filesystem::path& path, const Dataset& d) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << to_jsonl(d);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Dataset load_external_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_jsonl(ss.str());
}

std::uint64_t dataset_hash(const Dataset& d) { return fnv1a64(to_jsonl(d)); }

}  // namespace refexp
