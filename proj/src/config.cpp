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

#include "refexp/config.hpp"

#include <cctype>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace refexp {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

double to_double(const std::string& s) {
  if (s.empty()) throw std::invalid_argument("expected a number");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v))
    throw std::invalid_argument("expected a number, got '" + s + "'");
  return v;
}

std::uint64_t to_uint(const std::string& s) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw std::invalid_argument("expected a non-negative integer, got '" + s + "'");
  return v;
}

int to_int(const std::string& s) {
  const std::uint64_t v = to_uint(s);
  if (v > 1000000) throw std::invalid_argument("value out of range: " + s);
  return static_cast<int>(v);
}

bool to_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw std::invalid_argument("expected true or false, got '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::vector<std::uint64_t> to_uint_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(s)) out.push_back(to_uint(item));
  return out;
}

std::string fmt_list(const std::vector<std::uint64_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

template <typename T>
struct Field {
  const char* key;
  std::function<std::string(const T&)> get;
  std::function<void(T&, const std::string&)> set;
};

#define REFEXP_DOUBLE(T, key, expr) \
  Field<T> { key, [](const T& c) { return fmt(static_cast<double>(c.expr)); }, [](T& c, const std::string& v) { c.expr = to_double(v); } }
#define REFEXP_SIZE(T, key, expr) \
  Field<T> { key, [](const T& c) { return fmt(static_cast<std::uint64_t>(c.expr)); }, [](T& c, const std::string& v) { c.expr = to_uint(v); } }
#define REFEXP_INT(T, key, expr) \
  Field<T> { key, [](const T& c) { return fmt(static_cast<std::uint64_t>(c.expr)); }, [](T& c, const std::string& v) { c.expr = to_int(v); } }
#define REFEXP_BOOL(T, key, expr) \
  Field<T> { key, [](const T& c) { return fmt(c.expr); }, [](T& c, const std::string& v) { c.expr = to_bool(v); } }

const std::vector<Field<TrainingConfig>>& train_fields() {
  using T = TrainingConfig;
  static const std::vector<Field<T>> f = {
      {"objective", [](const T& c) { return std::string(to_string(c.objective)); },
       [](T& c, const std::string& v) {
         auto o = parse_objective(v);
         if (!o) throw std::invalid_argument("unknown objective '" + v + "'");
         c.objective = *o;
       }},
      {"negative_strategy", [](const T& c) { return std::string(to_string(c.negative_strategy)); },
       [](T& c, const std::string& v) {
         auto s = parse_negative_strategy(v);
         if (!s) throw std::invalid_argument("unknown negative strategy '" + v + "'");
         c.negative_strategy = *s;
       }},
      REFEXP_SIZE(T, "negatives", negatives),
      REFEXP_DOUBLE(T, "margin", margin),
      REFEXP_DOUBLE(T, "margin_weight", margin_weight),
      REFEXP_SIZE(T, "batch_size", batch_size),
      REFEXP_DOUBLE(T, "lr", lr),
      REFEXP_SIZE(T, "lr_half_every", lr_half_every),
      REFEXP_SIZE(T, "max_iterations", max_iterations),
      REFEXP_DOUBLE(T, "clip_norm", clip_norm),
      REFEXP_DOUBLE(T, "dropout", dropout),
      REFEXP_SIZE(T, "seed", seed),
      REFEXP_SIZE(T, "val_every", val_every),
      REFEXP_SIZE(T, "embed", embed),
      REFEXP_SIZE(T, "hidden", hidden),
      REFEXP_SIZE(T, "feat", feat),
      REFEXP_SIZE(T, "conv_channels", conv_channels),
      REFEXP_SIZE(T, "patch", patch),
  };
  return f;
}

const std::vector<Field<DataConfig>>& data_fields() {
  using T = DataConfig;
  static const std::vector<Field<T>> f = {
      REFEXP_SIZE(T, "seed", seed),
      {"path", [](const T& c) { return c.path; }, [](T& c, const std::string& v) { c.path = v; }},
      REFEXP_SIZE(T, "scenes", corpus.num_scenes),
      REFEXP_SIZE(T, "train", corpus.sizes.train),
      REFEXP_SIZE(T, "val", corpus.sizes.val),
      REFEXP_SIZE(T, "test", corpus.sizes.test),
      REFEXP_DOUBLE(T, "verbose_fraction", corpus.verbose_fraction),
      {"split_mode", [](const T& c) { return std::string(c.corpus.split_mode == SplitMode::kObject ? "object" : "image"); },
       [](T& c, const std::string& v) {
         if (v == "object") c.corpus.split_mode = SplitMode::kObject;
         else if (v == "image") c.corpus.split_mode = SplitMode::kImage;
         else throw std::invalid_argument("split_mode must be object or image");
       }},
      REFEXP_INT(T, "width", corpus.gen.width),
      REFEXP_INT(T, "height", corpus.gen.height),
      REFEXP_INT(T, "min_objects", corpus.gen.min_objects),
      REFEXP_INT(T, "max_objects", corpus.gen.max_objects),
      REFEXP_DOUBLE(T, "min_area_fraction", corpus.gen.min_area_fraction),
      REFEXP_INT(T, "min_same", corpus.gen.min_same),
      REFEXP_INT(T, "max_same", corpus.gen.max_same),
      REFEXP_DOUBLE(T, "shared_color_prob", corpus.gen.shared_color_prob),
      REFEXP_INT(T, "small_side_min", corpus.gen.small_side_min),
      REFEXP_INT(T, "small_side_max", corpus.gen.small_side_max),
      REFEXP_INT(T, "large_side_min", corpus.gen.large_side_min),
      REFEXP_INT(T, "large_side_max", corpus.gen.large_side_max),
      REFEXP_INT(T, "max_attempts", corpus.gen.max_attempts),
      REFEXP_DOUBLE(T, "hidden_fraction", hidden_fraction),
      REFEXP_SIZE(T, "vocab_min_count", vocab_min_count),
  };
  return f;
}

const std::vector<Field<EvalConfig>>& eval_fields() {
  using T = EvalConfig;
  static const std::vector<Field<T>> f = {
      REFEXP_SIZE(T, "beam_size", beam.beam_size),
      REFEXP_SIZE(T, "max_len", beam.max_len),
      REFEXP_BOOL(T, "length_normalize", beam.length_normalize),
      REFEXP_SIZE(T, "proposal_seed", proposal_seed),
      REFEXP_DOUBLE(T, "proposal_jitter", proposals.jitter),
      REFEXP_SIZE(T, "proposals_per_object", proposals.per_object),
      REFEXP_SIZE(T, "proposal_distractors", proposals.distractors),
      REFEXP_DOUBLE(T, "proposal_label_noise", proposals.label_noise),
      REFEXP_DOUBLE(T, "proposal_score_threshold", proposals.score_threshold),
  };
  return f;
}

const std::vector<Field<SemiSupSettings>>& semisup_fields() {
  using T = SemiSupSettings;
  static const std::vector<Field<T>> f = {
      REFEXP_SIZE(T, "ensemble_size", ensemble_size),
      {"ensemble_seeds", [](const T& c) { return fmt_list(c.ensemble_seeds); },
       [](T& c, const std::string& v) { c.ensemble_seeds = to_uint_list(v); }},
      {"filter_mode", [](const T& c) { return std::string(to_string(c.filter_mode)); },
       [](T& c, const std::string& v) {
         auto m = parse_candidate_mode(v);
         if (!m) throw std::invalid_argument("filter_mode must be gt or proposal");
         c.filter_mode = *m;
       }},
      REFEXP_BOOL(T, "warm_start", warm_start),
  };
  return f;
}

const std::vector<Field<ExperimentSpec>>& experiment_fields() {
  using T = ExperimentSpec;
  static const std::vector<Field<T>> f = {
      {"seeds", [](const T& c) { return fmt_list(c.seeds); },
       [](T& c, const std::string& v) {
         c.seeds = to_uint_list(v);
         if (c.seeds.empty()) throw std::invalid_argument("at least one seed is required");
       }},
      {"eval_splits",
       [](const T& c) {
         std::string out;
         for (std::size_t i = 0; i < c.eval_splits.size(); ++i)
           out += (i ? "," : "") + std::string(to_string(c.eval_splits[i]));
         return out;
       },
       [](T& c, const std::string& v) {
         c.eval_splits.clear();
         for (const auto& item : split_list(v)) {
           auto s = parse_split(item);
           if (!s || *s == Split::kNone) throw std::invalid_argument("unknown split '" + item + "'");
           c.eval_splits.push_back(*s);
         }
         if (c.eval_splits.empty()) throw std::invalid_argument("at least one split is required");
       }},
      REFEXP_BOOL(T, "parallel_runs", parallel_runs),
  };
  return f;
}

#undef REFEXP_DOUBLE
#undef REFEXP_SIZE
#undef REFEXP_INT
#undef REFEXP_BOOL

template <typename T>
void apply(const std::vector<Field<T>>& fields, T& target, const std::string& section, const std::string& key,
           const std::string& value, std::size_t line) {
  for (const auto& f : fields)
    if (key == f.key) {
      try {
        f.set(target, value);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(line, "[" + section + "] " + key + ": " + e.what());
      }
      return;
    }
  throw ConfigError(line, "unknown key '" + key + "' in [" + section + "]");
}

template <typename T>
void emit(std::string& out, const std::vector<Field<T>>& fields, const T& source) {
  for (const auto& f : fields) out += std::string(f.key) + " = " + f.get(source) + "\n";
}

bool valid_run_name(const std::string& name) {
  if (name.empty()) return false;
  for (char c : name)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  return true;
}

struct Assignment {
  std::size_t line;
  std::string key;
  std::string value;
};

}  // namespace

ExperimentSpec parse_config(const std::string& text) {
  ExperimentSpec spec;
  std::string section;
  std::string run_name;
  std::vector<std::pair<std::string, std::vector<Assignment>>> runs;
  std::set<std::pair<std::string, std::string>> seen;
  std::set<std::string> run_names;

  std::stringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(line_no, "unterminated section header");
      const std::string header = trim(line.substr(1, line.size() - 2));
      if (header.rfind("run", 0) == 0 && (header.size() == 3 || header[3] == ' ' || header[3] == '\t')) {
        run_name = trim(header.substr(3));
        if (!valid_run_name(run_name)) throw ConfigError(line_no, "invalid run name '" + run_name + "'");
        if (!run_names.insert(run_name).second) throw ConfigError(line_no, "duplicate run '" + run_name + "'");
        runs.push_back({run_name, {}});
        section = "run " + run_name;
      } else if (header == "data" || header == "train" || header == "eval" || header == "semisup" ||
                 header == "experiment") {
        section = header;
      } else {
        throw ConfigError(line_no, "unknown section [" + header + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(line_no, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(line_no, "missing key");
    const std::string where = section.empty() ? "experiment" : section;
    if (!seen.insert({where, key}).second) throw ConfigError(line_no, "duplicate key '" + key + "' in [" + where + "]");

    if (where == "data") apply(data_fields(), spec.data, where, key, value, line_no);
    else if (where == "train") apply(train_fields(), spec.train, where, key, value, line_no);
    else if (where == "eval") apply(eval_fields(), spec.eval, where, key, value, line_no);
    else if (where == "semisup") apply(semisup_fields(), spec.semisup, where, key, value, line_no);
    else if (where == "experiment") apply(experiment_fields(), spec, where, key, value, line_no);
    else runs.back().second.push_back({line_no, key, value});
  }

  for (const auto& [name, assignments] : runs) {
    RunSpec run{name, spec.train};
    for (const auto& a : assignments) apply(train_fields(), run.train, "run " + name, a.key, a.value, a.line);
    try {
      validate(run.train);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(0, "[run " + name + "] " + e.what());
    }
    spec.runs.push_back(std::move(run));
  }
  try {
    validate(spec.train);
    validate(spec.data.corpus.gen);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(0, e.what());
  }
  if (!(spec.data.hidden_fraction >= 0.0 && spec.data.hidden_fraction <= 1.0))
    throw ConfigError(0, "[data] hidden_fraction must be in [0, 1]");
  if (spec.data.vocab_min_count < 1) throw ConfigError(0, "[data] vocab_min_count must be >= 1");
  if (spec.eval.beam.beam_size < 1 || spec.eval.beam.max_len < 1)
    throw ConfigError(0, "[eval] beam_size and max_len must be >= 1");
  return spec;
}

ExperimentSpec load_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError(0, "cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(e.line(), path.string() + ": " + std::string(e.what()));
  }
}

std::string training_config_text(const TrainingConfig& config) {
  std::string out;
  emit(out, train_fields(), config);
  return out;
}

std::string resolved_config(const ExperimentSpec& spec) {
  std::string out = "[experiment]\n";
  emit(out, experiment_fields(), spec);
  out += "\n[data]\n";
  emit(out, data_fields(), spec.data);
  out += "\n[train]\n";
  emit(out, train_fields(), spec.train);
  out += "\n[eval]\n";
  emit(out, eval_fields(), spec.eval);
  out += "\n[semisup]\n";
  emit(out, semisup_fields(), spec.semisup);
  for (const auto& run : spec.runs) {
    out += "\n[run " + run.name + "]\n";
    emit(out, train_fields(), run.train);
  }
  return out;
}

bool operator==(const ExperimentSpec& a, const ExperimentSpec& b) {
  return resolved_config(a) == resolved_config(b) && a.data.corpus.gen.categories == b.data.corpus.gen.categories &&
         a.data.corpus.gen.colors == b.data.corpus.gen.colors;
}

SemiSupConfig semisup_config(const ExperimentSpec& spec) {
  SemiSupConfig c;
  c.generator = spec.train;
  c.retrain = spec.train;
  c.ensemble_size = spec.semisup.ensemble_size;
  c.ensemble_seeds = spec.semisup.ensemble_seeds;
  c.beam = spec.eval.beam;
  c.filter_mode = spec.semisup.filter_mode;
  c.eval = spec.eval;
  c.warm_start = spec.semisup.warm_start;
  c.vocab_min_count = spec.data.vocab_min_count;
  return c;
}

}  // namespace refexp
