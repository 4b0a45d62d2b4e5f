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

#include "refexp/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <mutex>
#include <optional>

#include <json.hpp>

#include "refexp/checkpoint.hpp"
#include "refexp/dataset_io.hpp"
#include "refexp/hash.hpp"
#include "refexp/parallel.hpp"

namespace refexp {

namespace fs = std::filesystem;

Dataset prepare_dataset(const DataConfig& config) {
  if (!config.path.empty()) return load_external_dataset(config.path);
  return generate_corpus(config.corpus, config.seed);
}

std::uint64_t checkpoint_hash(const SpeakerModel& model) { return fnv1a64(encode_checkpoint(model.to_checkpoint())); }

bool ExperimentOutcome::ok() const {
  for (const auto& r : runs)
    if (!r.ok) return false;
  return true;
}

double ExperimentOutcome::mean_p1(const std::string& run, Split split, CandidateMode c, DescriptionMode d) const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : runs)
    if (r.ok && r.name == run && r.reports.count(split)) {
      s += r.reports.at(split).cell(c, d).p1();
      ++n;
    }
  if (n == 0) throw std::out_of_range("no completed results for run " + run);
  return s / static_cast<double>(n);
}

double ExperimentOutcome::mean_oracle(const std::string& run, Split split) const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : runs)
    if (r.ok && r.name == run && r.reports.count(split)) {
      s += r.reports.at(split).oracle_listener;
      ++n;
    }
  if (n == 0) throw std::out_of_range("no completed results for run " + run);
  return s / static_cast<double>(n);
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

std::string run_key(const std::string& name, std::uint64_t seed) { return name + "-s" + std::to_string(seed); }

std::string csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string results_csv(const ExperimentSpec& spec, const std::vector<RunSpec>& runs, const ExperimentOutcome& out) {
  std::string csv =
      "run,seed,split,gt_gt,gt_gen,proposal_gt,proposal_gen,oracle_listener,mean_gen_length,dataset_hash,"
      "checkpoint_hash\n";
  const std::string dh = hex64(out.dataset_hash);
  auto row = [&](const std::string& name, const std::string& seed, Split split, double gg, double gn, double pg,
                 double pn, double ol, double len, const std::string& ck) {
    csv += name + "," + seed + "," + std::string(to_string(split)) + "," + csv_number(gg) + "," + csv_number(gn) +
           "," + csv_number(pg) + "," + csv_number(pn) + "," + csv_number(ol) + "," + csv_number(len) + "," + dh +
           "," + ck + "\n";
  };
  for (const auto& run : runs)
    for (Split split : spec.eval_splits) {
      std::size_t n = 0;
      double acc[6] = {0, 0, 0, 0, 0, 0};
      for (const auto& r : out.runs) {
        if (r.name != run.name || !r.ok) continue;
        const EvalReport& e = r.reports.at(split);
        const double v[6] = {e.cell(CandidateMode::kGt, DescriptionMode::kGt).p1(),
                             e.cell(CandidateMode::kGt, DescriptionMode::kGen).p1(),
                             e.cell(CandidateMode::kProposal, DescriptionMode::kGt).p1(),
                             e.cell(CandidateMode::kProposal, DescriptionMode::kGen).p1(),
                             e.oracle_listener,
                             e.mean_gen_length};
        row(r.name, std::to_string(r.seed), split, v[0], v[1], v[2], v[3], v[4], v[5], hex64(r.checkpoint_hash));
        for (int i = 0; i < 6; ++i) acc[i] += v[i];
        ++n;
      }
      if (n > 1) {
        for (double& a : acc) a /= static_cast<double>(n);
        row(run.name, "mean", split, acc[0], acc[1], acc[2], acc[3], acc[4], acc[5], "");
      }
    }
  return csv;
}

}  // namespace

ExperimentOutcome run_experiment(const ExperimentSpec& spec, const Dataset& data, const fs::path& out_dir,
                                 std::ostream* log) {
  std::vector<RunSpec> runs = spec.runs;
  if (runs.empty()) runs.push_back({"default", spec.train});

  ExperimentOutcome out;
  out.dataset_hash = dataset_hash(data);
  const auto corpus = data.train_corpus();
  const Vocabulary vocab = build_vocabulary(corpus, spec.data.vocab_min_count);
  const auto train_set = make_examples(data, Split::kTrain, vocab);
  const auto val_inputs = eval_inputs(data, Split::kVal);
  std::map<Split, std::vector<EvalInput>> eval_sets;
  for (Split s : spec.eval_splits) eval_sets[s] = eval_inputs(data, s);

  std::map<const Scene*, ProposalSet> proposals;
  for (const auto& r : runs)
    if (r.train.negative_strategy == NegativeStrategy::kHardProposal && r.train.objective != Objective::kMl) {
      proposals = proposal_map(data, spec.eval);
      break;
    }

  const bool writing = !out_dir.empty();
  if (writing) {
    fs::create_directories(out_dir / "runs");
    write_text(out_dir / "resolved.cfg", resolved_config(spec));
  }

  struct Job {
    const RunSpec* run;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& r : runs)
    for (auto seed : spec.seeds) jobs.push_back({&r, seed});
  out.runs.resize(jobs.size());

  std::mutex mu;
  auto write_manifest = [&] {
    nlohmann::json m;
    m["dataset_hash"] = hex64(out.dataset_hash);
    m["vocab_hash"] = hex64(vocab.hash());
    m["config"] = resolved_config(spec);
    m["completed"] = nlohmann::json::array();
    m["failed"] = nlohmann::json::array();
    m["pending"] = nlohmann::json::array();
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      const auto& r = out.runs[i];
      const std::string key = run_key(jobs[i].run->name, jobs[i].seed);
      if (r.name.empty()) m["pending"].push_back(key);
      else if (r.ok) m["completed"].push_back(key);
      else m["failed"].push_back({{"run", key}, {"error", r.error}});
    }
    write_text(out_dir / "manifest.json", m.dump(2) + "\n");
    write_text(out_dir / "results.csv", results_csv(spec, runs, out));
  };
  if (writing) write_manifest();

  auto do_job = [&](std::size_t i) {
    const Job& job = jobs[i];
    RunOutcome r;
    r.name = job.run->name;
    r.seed = job.seed;
    TrainingConfig cfg = job.run->train;
    cfg.seed = job.seed;
    const std::string key = run_key(r.name, r.seed);
    try {
      TrainOptions opts;
      if (!proposals.empty()) opts.proposals = &proposals;
      if (!val_inputs.empty())
        opts.validate = [&](const SpeakerModel& m) {
          return precision_at_1(m, vocab, val_inputs, CandidateMode::kGt, DescriptionMode::kGt, spec.eval);
        };
      TrainResult trained = train(cfg, train_set, vocab, opts);
      r.train_seconds = trained.history.wall_seconds;
      r.final_loss = trained.history.records.empty() ? 0.0 : trained.history.records.back().loss;
      r.checkpoint_hash = checkpoint_hash(trained.model);
      for (const auto& [split, inputs] : eval_sets) r.reports[split] = evaluate(trained.model, vocab, inputs, spec.eval);
      r.ok = true;

      if (writing) {
        save_checkpoint(out_dir / "runs" / (key + ".ckpt"), trained.model.to_checkpoint());
        write_text(out_dir / "runs" / (key + ".history.csv"), trained.history.to_csv());
        nlohmann::json j;
        j["run"] = r.name;
        j["seed"] = r.seed;
        j["config"] = training_config_text(cfg);
        j["experiment_config"] = resolved_config(spec);
        j["dataset_hash"] = hex64(out.dataset_hash);
        j["vocab_hash"] = hex64(vocab.hash());
        j["checkpoint_hash"] = hex64(r.checkpoint_hash);
        j["train_seconds"] = r.train_seconds;
        j["final_loss"] = r.final_loss;
        for (const auto& [split, rep] : r.reports) j["eval"][std::string(to_string(split))] = rep.to_json();
        write_text(out_dir / "runs" / (key + ".json"), j.dump(2) + "\n");
      }
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();
    }
    std::lock_guard lock(mu);
    if (log) {
      if (r.ok) {
        const auto& rep = r.reports.begin()->second;
        *log << key << ": gt/gt " << csv_number(rep.cell(CandidateMode::kGt, DescriptionMode::kGt).p1())
             << "  oracle " << csv_number(rep.oracle_listener) << "  (" << csv_number(r.train_seconds) << " s)\n";
      } else {
        *log << key << ": FAILED: " << r.error << "\n";
      }
      log->flush();
    }
    out.runs[i] = std::move(r);
    if (writing) write_manifest();
  };

  if (spec.parallel_runs) parallel_for(jobs.size(), do_job);
  else for (std::size_t i = 0; i < jobs.size(); ++i) do_job(i);
  return out;
}

}  // namespace refexp
