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

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "refexp/checkpoint.hpp"
#include "refexp/comprehension.hpp"
#include "refexp/config.hpp"
#include "refexp/dataset_io.hpp"
#include "refexp/doctor.hpp"
#include "refexp/evaluation.hpp"
#include "refexp/experiment.hpp"
#include "refexp/hash.hpp"
#include "refexp/semisup.hpp"

using namespace refexp;

namespace {

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

ExperimentSpec spec_from(const std::string& path) { return path.empty() ? ExperimentSpec{} : load_config(path); }

Vocabulary vocab_for(const Dataset& d, std::size_t min_count) {
  const auto corpus = d.train_corpus();
  return build_vocabulary(corpus, min_count);
}

SpeakerModel load_model(const std::string& path, const Vocabulary& vocab) {
  return SpeakerModel::from_checkpoint(load_checkpoint(path), vocab.hash());
}

Region find_region(const Dataset& d, const Scene& scene, const std::string& region_id) {
  for (const auto& ex : d.examples)
    if (ex.id == region_id) return ex.region;
  for (const auto& b : d.unlabeled)
    if (b.id == region_id) return b.region;
  try {
    std::size_t used = 0;
    const unsigned long idx = std::stoul(region_id, &used);
    if (used == region_id.size() && idx < scene.objects.size()) return scene.objects[idx].box;
  } catch (const std::exception&) {
  }
  throw std::runtime_error("unknown region '" + region_id + "' (expected an example id or object index)");
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

nlohmann::json region_json(const Region& r) {
  nlohmann::json j = {{"box", {r.x_tl, r.y_tl, r.x_br, r.y_br}}};
  if (r.category_label) j["label"] = std::string(to_string(*r.category_label));
  if (r.score) j["score"] = *r.score;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Referring expression speaker and listener"};
  app.require_subcommand(1);

  std::string config_path, data_path, out_path, ckpt_path, history_path, run_name, split_name = "test";
  std::string scene_id, region_id, tokens, proposals_mode = "gt", labeled_path, unlabeled_path, report_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  double hide_fraction = 0.0;
  std::size_t beam = 3, min_count = kDefaultMinCount, models = 100;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus as JSONL");
  gen->add_option("--config", config_path, "Config file ([data] section)");
  gen->add_option("--seed", seed, "Corpus seed (overrides the config)")->each([&](const std::string&) { seed_given = true; });
  gen->add_option("--out", out_path, "Output JSONL")->required();
  gen->add_option("--hide-fraction", hide_fraction, "Turn this fraction of training objects into box-only records")
      ->check(CLI::Range(0.0, 1.0));

  auto* tr = app.add_subcommand("train", "Train a speaker");
  tr->add_option("--config", config_path, "Config file");
  tr->add_option("--data", data_path, "Dataset JSONL")->required();
  tr->add_option("--out", out_path, "Checkpoint path")->required();
  tr->add_option("--history", history_path, "History CSV path");
  tr->add_option("--run", run_name, "Use the [run NAME] section instead of [train]");
  tr->add_option("--seed", seed, "Training seed (overrides the config)")->each([&](const std::string&) { seed_given = true; });

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the 2x2 grid");
  ev->add_option("--config", config_path, "Config file");
  ev->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  ev->add_option("--data", data_path, "Dataset JSONL")->required();
  ev->add_option("--split", split_name, "Split to evaluate");
  ev->add_option("--out", out_path, "Report JSON");
  ev->add_option("--min-count", min_count, "Vocabulary min count");

  auto* ge = app.add_subcommand("generate", "Describe a region");
  ge->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  ge->add_option("--data", data_path, "Dataset JSONL")->required();
  ge->add_option("--scene-id", scene_id, "Scene id")->required();
  ge->add_option("--region-id", region_id, "Example id, box-only id, or object index")->required();
  ge->add_option("--beam", beam, "Beam size")->check(CLI::PositiveNumber);
  ge->add_option("--min-count", min_count, "Vocabulary min count");

  auto* co = app.add_subcommand("comprehend", "Find the region a sentence refers to");
  co->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  co->add_option("--data", data_path, "Dataset JSONL")->required();
  co->add_option("--scene-id", scene_id, "Scene id")->required();
  co->add_option("--tokens", tokens, "Space-separated words")->required();
  co->add_option("--proposals", proposals_mode, "gt or synthetic")->check(CLI::IsMember({"gt", "synthetic"}));
  co->add_option("--min-count", min_count, "Vocabulary min count");

  auto* ss = app.add_subcommand("semisup", "Bootstrap from box-only data");
  ss->add_option("--config", config_path, "Config file");
  ss->add_option("--labeled", labeled_path, "Labeled JSONL")->required();
  ss->add_option("--unlabeled", unlabeled_path, "JSONL with box-only records")->required();
  ss->add_option("--out", out_path, "Retrained checkpoint")->required();
  ss->add_option("--report", report_path, "Report JSON")->required();
  ss->add_option("--split", split_name, "Evaluation split");

  auto* ex = app.add_subcommand("experiment", "Train and evaluate every run of a config");
  ex->add_option("--config", config_path, "Config file")->required();
  ex->add_option("--data", data_path, "Dataset JSONL (overrides [data])");
  ex->add_option("--out", out_path, "Output directory")->required();

  auto* dr = app.add_subcommand("doctor", "Gradient checks and the beam search enumeration test");
  dr->add_option("--seed", seed, "Seed");
  dr->add_option("--models", models, "Random models for the beam test");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      ExperimentSpec spec = spec_from(config_path);
      if (seed_given) spec.data.seed = seed;
      Dataset d = generate_corpus(spec.data.corpus, spec.data.seed);
      if (hide_fraction > 0.0) d = hide_labels(d, hide_fraction, spec.data.seed);
      save_dataset(out_path, d);
      std::cout << "wrote " << d.scenes().size() << " scenes, " << d.examples.size() << " expressions, "
                << d.unlabeled.size() << " box-only records; hash " << hex64(dataset_hash(d)) << "\n";
      return 0;
    }
    if (tr->parsed()) {
      const ExperimentSpec spec = spec_from(config_path);
      TrainingConfig cfg = spec.train;
      if (!run_name.empty()) {
        bool found = false;
        for (const auto& r : spec.runs)
          if (r.name == run_name) {
            cfg = r.train;
            found = true;
          }
        if (!found) throw std::runtime_error("no run named " + run_name);
      }
      if (seed_given) cfg.seed = seed;
      const Dataset d = load_external_dataset(data_path);
      const Vocabulary vocab = vocab_for(d, spec.data.vocab_min_count);
      const auto examples = make_examples(d, Split::kTrain, vocab);
      TrainOptions opts;
      std::map<const Scene*, ProposalSet> props;
      if (cfg.negative_strategy == NegativeStrategy::kHardProposal) {
        props = proposal_map(d, spec.eval);
        opts.proposals = &props;
      }
      const auto val = eval_inputs(d, Split::kVal);
      if (!val.empty())
        opts.validate = [&](const SpeakerModel& m) {
          return precision_at_1(m, vocab, val, CandidateMode::kGt, DescriptionMode::kGt, spec.eval);
        };
      opts.on_iteration = [&](const IterationRecord& r) {
        if (r.val_p1) std::cerr << "iteration " << r.iteration << " loss " << r.loss << " val p@1 " << *r.val_p1 << "\n";
      };
      const TrainResult res = train(cfg, examples, vocab, opts);
      save_checkpoint(out_path, res.model.to_checkpoint());
      if (!history_path.empty()) write_file(history_path, res.history.to_csv());
      std::cout << "trained " << res.history.records.size() << " iterations in " << res.history.wall_seconds
                << " s; checkpoint " << hex64(checkpoint_hash(res.model)) << "\n";
      return 0;
    }
    if (ev->parsed()) {
      const ExperimentSpec spec = spec_from(config_path);
      if (!config_path.empty()) min_count = spec.data.vocab_min_count;
      const auto split = parse_split(split_name);
      if (!split) throw std::runtime_error("unknown split " + split_name);
      const Dataset d = load_external_dataset(data_path);
      const Vocabulary vocab = vocab_for(d, min_count);
      const SpeakerModel model = load_model(ckpt_path, vocab);
      const auto inputs = eval_inputs(d, *split);
      nlohmann::json j = evaluate(model, vocab, inputs, spec.eval).to_json();
      j["split"] = split_name;
      j["dataset_hash"] = hex64(dataset_hash(d));
      j["checkpoint_hash"] = hex64(checkpoint_hash(model));
      j["config"] = resolved_config(spec);
      if (!out_path.empty()) write_file(out_path, j.dump(2) + "\n");
      std::cout << j.dump(2) << "\n";
      return 0;
    }
    if (ge->parsed()) {
      const Dataset d = load_external_dataset(data_path);
      const Vocabulary vocab = vocab_for(d, min_count);
      const SpeakerModel model = load_model(ckpt_path, vocab);
      const Scene& scene = d.scene(scene_id);
      const Region region = find_region(d, scene, region_id);
      BeamConfig cfg;
      cfg.beam_size = beam;
      for (const auto& h : beam_search(model, scene, region, cfg)) {
        std::string words;
        for (const auto& w : decode(vocab, h.expression)) words += (words.empty() ? "" : " ") + w;
        std::cout << h.log_prob << "\t" << words << "\n";
      }
      return 0;
    }
    if (co->parsed()) {
      const Dataset d = load_external_dataset(data_path);
      const Vocabulary vocab = vocab_for(d, min_count);
      const SpeakerModel model = load_model(ckpt_path, vocab);
      const Scene& scene = d.scene(scene_id);
      const std::vector<Region> cands =
          proposals_mode == "gt" ? scene.object_regions() : scene_proposals(scene, EvalConfig{}).regions;
      if (cands.empty()) throw std::runtime_error("no candidate regions");
      const Comprehension c = comprehend(model, scene, encode(vocab, split_words(tokens)), cands);
      nlohmann::json j;
      j["chosen"] = region_json(c.region);
      for (std::size_t idx : c.ranking) {
        nlohmann::json r = region_json(cands[idx]);
        r["log_prob"] = c.scores[idx];
        j["ranked"].push_back(r);
      }
      std::cout << j.dump(2) << "\n";
      return 0;
    }
    if (ss->parsed()) {
      const ExperimentSpec spec = spec_from(config_path);
      const auto split = parse_split(split_name);
      if (!split) throw std::runtime_error("unknown split " + split_name);
      const Dataset d = with_unlabeled(load_external_dataset(labeled_path), load_external_dataset(unlabeled_path));
      const BootstrapResult r = bootstrap(semisup_config(spec), d, *split);
      save_checkpoint(out_path, r.retrained.to_checkpoint());
      nlohmann::json j = r.report.to_json();
      j["dataset_hash"] = hex64(dataset_hash(d));
      j["checkpoint_hash"] = hex64(checkpoint_hash(r.retrained));
      j["generator_checkpoint_hash"] = hex64(checkpoint_hash(r.generator));
      j["config"] = resolved_config(spec);
      write_file(report_path, j.dump(2) + "\n");
      std::cout << "kept " << r.report.filtered << " of " << r.report.bb_auto << " generated expressions\n";
      return 0;
    }
    if (ex->parsed()) {
      ExperimentSpec spec = load_config(config_path);
      if (!data_path.empty()) spec.data.path = data_path;
      const Dataset d = prepare_dataset(spec.data);
      const ExperimentOutcome out = run_experiment(spec, d, out_path, &std::cout);
      return out.ok() ? 0 : 1;
    }
    if (dr->parsed()) {
      DoctorOptions opts;
      opts.seed = seed ? seed : 1;
      opts.beam_models = models;
      return run_doctor(opts, std::cout) ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
