// SPDX-License-Identifier: Apache-2.0
//
// stsc: command-line front end. Every subcommand resolves and validates the
// whole run configuration (JSON file plus flag overrides) before it writes
// anything. Exit status: 0 success, 1 domain or configuration error, 2 usage.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stsc/stsc.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
  json resolved; // config file with overrides applied and defaults filled in
  std::uint64_t seed = 0;
  fs::path manifest;
  fs::path cache_dir;
  fs::path output_dir;
  fs::path checkpoint;
  int folds = 3;
  int fold = -1; // -1: every fold
  int jobs = 1;
  stsc::FrameSpec frame;
  stsc::ModelConfig model;
  stsc::TrainConfig train;
  stsc::GridSpec grid;
  stsc::SynthSpec synth;
  int max_new_cells = -1;
  int cluster_fragments = 30000;
  int cluster_k = 3;
  int cluster_restarts = 20;

  std::string hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(stsc::detail::fnv1a(resolved.dump())));
    return buf;
  }
};

/// Requirements a subcommand places on the configuration.
struct Needs {
  bool manifest = false;
  bool cache_dir = false;
  bool output_dir = true;
  bool checkpoint = false;
  bool full_model = false; // model must lie in the searchable grid domain
};

[[noreturn]] void invalid(const std::string &key, const std::string &why) {
  stsc::fail(stsc::Errc::ConfigInvalid, key + ": " + why);
}

json load_config_file(const fs::path &path) {
  std::ifstream in(path);
  if (!in)
    stsc::fail(stsc::Errc::FileNotFound, "config file " + path.string() + " not found");
  try {
    json j = json::parse(in);
    if (!j.is_object())
      invalid("config", "top level must be a JSON object");
    return j;
  } catch (const json::parse_error &e) {
    invalid("config", std::string("not valid JSON (") + e.what() + ")");
  }
}

int get_int(const json &j, const std::string &key, int fallback) {
  if (!j.contains(key))
    return fallback;
  if (!j.at(key).is_number_integer())
    invalid(key, "expected an integer");
  return j.at(key).get<int>();
}

fs::path get_path(const json &j, const std::string &key, const fs::path &base) {
  if (!j.contains(key) || j.at(key).is_null())
    return {};
  if (!j.at(key).is_string())
    invalid(key, "expected a path string");
  fs::path p = j.at(key).get<std::string>();
  return p.is_relative() ? base / p : p;
}

stsc::FrameSpec frame_from_json(const json &j) {
  stsc::FrameSpec f;
  f.n_fft = get_int(j, "n_fft", f.n_fft);
  f.hop = get_int(j, "hop", f.hop);
  f.n_mels = get_int(j, "n_mels", f.n_mels);
  for (auto [key, dst] : {std::pair{"fmin", &f.fmin}, {"fmax", &f.fmax}})
    if (j.contains(key)) {
      if (!j.at(key).is_number())
        invalid(std::string("frame.") + key, "expected a number");
      *dst = j.at(key).get<double>();
    }
  try {
    f.validate(stsc::kPipelineRate);
  } catch (const stsc::Error &e) {
    invalid("frame", e.what());
  }
  return f;
}

json frame_to_json(const stsc::FrameSpec &f) {
  return {{"n_fft", f.n_fft}, {"hop", f.hop}, {"n_mels", f.n_mels}, {"fmin", f.fmin}, {"fmax", f.fmax}};
}

/// Errors from nested parsers are re-raised with the section prefixed to the key.
template <typename Fn> auto in_section(const char *section, Fn &&fn) {
  try {
    return fn();
  } catch (const stsc::Error &e) {
    if (e.code() != stsc::Errc::ConfigInvalid)
      throw;
    std::string msg = e.what();
    const std::string prefix = "ConfigInvalid: ";
    if (msg.rfind(prefix, 0) == 0)
      msg = msg.substr(prefix.size());
    stsc::fail(stsc::Errc::ConfigInvalid, std::string(section) + "." + msg);
  }
}

RunConfig resolve(json raw, const fs::path &base, const Needs &needs) {
  RunConfig rc;
  if (!raw.contains("seed"))
    invalid("seed", "required (set it in the config file or pass --seed)");
  if (!raw.at("seed").is_number_integer() || raw.at("seed").get<std::int64_t>() < 0)
    invalid("seed", "expected a non-negative integer");
  rc.seed = raw.at("seed").get<std::uint64_t>();

  rc.manifest = get_path(raw, "manifest", base);
  rc.cache_dir = get_path(raw, "cache_dir", base);
  rc.output_dir = get_path(raw, "output_dir", base);
  rc.checkpoint = get_path(raw, "checkpoint", base);
  rc.folds = get_int(raw, "folds", rc.folds);
  rc.fold = get_int(raw, "fold", rc.fold);
  rc.jobs = get_int(raw, "jobs", rc.jobs);
  rc.max_new_cells = get_int(raw, "max_new_cells", rc.max_new_cells);
  if (rc.folds < 2)
    invalid("folds", "must be >= 2");
  if (rc.fold < -1 || rc.fold >= rc.folds)
    invalid("fold", "must be -1 (all) or in [0, folds)");
  if (rc.jobs < 1)
    invalid("jobs", "must be >= 1");

  rc.frame = frame_from_json(raw.value("frame", json::object()));
  rc.model = in_section("model", [&] { return stsc::ModelConfig::from_json(raw.value("model", json::object())); });
  in_section("model", [&] { needs.full_model ? rc.model.validate() : rc.model.validate_shapes(); return 0; });
  if (rc.model.input_bands != rc.frame.n_mels)
    invalid("model.input_bands", "must equal frame.n_mels");
  rc.train = in_section("train", [&] { return stsc::TrainConfig::from_json(raw.value("train", json::object())); });
  rc.train.seed = rc.seed;
  in_section("train", [&] { rc.train.validate(); return 0; });

  json grid_json = raw.value("grid", json::object());
  grid_json["model"] = rc.model.to_json();
  grid_json["train"] = rc.train.to_json();
  grid_json["seed"] = rc.seed;
  rc.grid = in_section("grid", [&] { return stsc::GridSpec::from_json(grid_json); });
  in_section("grid", [&] { rc.grid.validate(); return 0; });

  json synth_json = raw.value("synth", json::object());
  synth_json["seed"] = rc.seed;
  rc.synth = in_section("synth", [&] { return stsc::SynthSpec::from_json(synth_json); });
  in_section("synth", [&] { rc.synth.validate(); return 0; });

  const json cl = raw.value("cluster", json::object());
  rc.cluster_fragments = in_section("cluster", [&] { return get_int(cl, "fragments", rc.cluster_fragments); });
  rc.cluster_k = in_section("cluster", [&] { return get_int(cl, "k", rc.cluster_k); });
  rc.cluster_restarts = in_section("cluster", [&] { return get_int(cl, "restarts", rc.cluster_restarts); });
  if (rc.cluster_fragments < 2 || rc.cluster_fragments % 2 != 0)
    invalid("cluster.fragments", "must be an even number >= 2");
  if (rc.cluster_k < 1)
    invalid("cluster.k", "must be >= 1");
  if (rc.cluster_restarts < 1)
    invalid("cluster.restarts", "must be >= 1");

  if (needs.manifest) {
    if (rc.manifest.empty())
      invalid("manifest", "required");
    if (!fs::is_regular_file(rc.manifest))
      invalid("manifest", rc.manifest.string() + " does not exist");
  }
  if (needs.cache_dir && rc.cache_dir.empty())
    invalid("cache_dir", "required");
  if (needs.output_dir && rc.output_dir.empty())
    invalid("output_dir", "required");
  if (needs.checkpoint) {
    if (rc.checkpoint.empty())
      invalid("checkpoint", "required");
    if (!fs::is_regular_file(rc.checkpoint))
      invalid("checkpoint", rc.checkpoint.string() + " does not exist");
  }

  // Echo back the effective configuration so the hash covers defaults too.
  rc.resolved = raw;
  rc.resolved["frame"] = frame_to_json(rc.frame);
  rc.resolved["model"] = rc.model.to_json();
  rc.resolved["train"] = rc.train.to_json();
  rc.resolved["synth"] = rc.synth.to_json();
  rc.resolved["folds"] = rc.folds;
  rc.resolved["cluster"] = {{"fragments", rc.cluster_fragments},
                            {"k", rc.cluster_k},
                            {"restarts", rc.cluster_restarts}};
  json g = rc.grid.to_json();
  g.erase("model");
  g.erase("train");
  g.erase("seed");
  rc.resolved["grid"] = g;
  // Worker count and resume limits change scheduling only, never results.
  rc.resolved.erase("jobs");
  rc.resolved.erase("max_new_cells");
  return rc;
}

// ---------------------------------------------------------------------------
// Output helpers

void write_text(const fs::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    stsc::fail(stsc::Errc::IoError, "cannot write " + path.string());
  out << text;
  if (!out)
    stsc::fail(stsc::Errc::IoError, "cannot write " + path.string());
}

void write_json(const fs::path &path, const json &j) { write_text(path, j.dump(2) + "\n"); }

/// Provenance without timestamps; those go to run.log only.
void write_run_manifest(const RunConfig &rc, const std::string &command, json extra = json::object()) {
  json m = {{"command", command},
            {"config", rc.resolved},
            {"config_hash", rc.hash()},
            {"seed", rc.seed}};
  for (auto &[k, v] : extra.items())
    m[k] = v;
  write_json(rc.output_dir / "run_manifest.json", m);
  std::ofstream log(rc.output_dir / "run.log", std::ios::app);
  log << stsc::detail::utc_timestamp() << ' ' << command << " config_hash=" << rc.hash() << '\n';
}

std::string scores_csv(const std::vector<stsc::ScoredSubject> &scores) {
  std::ostringstream os;
  os << "speaker_id,label,phq8,score\n";
  char buf[40];
  for (const auto &s : scores) {
    std::snprintf(buf, sizeof buf, "%.17g", s.score);
    os << s.speaker_id << ',' << s.label << ',' << s.phq8 << ',' << buf << '\n';
  }
  return os.str();
}

std::vector<stsc::SpeakerRecord> load_corpus(const RunConfig &rc) {
  auto records = stsc::load_manifest(rc.manifest);
  stsc::index_corpus(records, rc.frame, rc.cache_dir);
  return records;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_synth(const RunConfig &rc) {
  fs::create_directories(rc.output_dir);
  const fs::path manifest = stsc::synth_corpus(rc.synth, rc.output_dir);
  write_json(rc.output_dir / "synth_spec.json", rc.synth.to_json());
  write_run_manifest(rc, "synth");
  std::cout << "wrote " << rc.synth.n_speakers << " speakers (" << rc.synth.n_depressed()
            << " depressed) to " << manifest.string() << "\n";
  return 0;
}

int cmd_featurize(const RunConfig &rc) {
  auto records = stsc::load_manifest(rc.manifest);
  fs::create_directories(rc.cache_dir);
  stsc::index_corpus(records, rc.frame, rc.cache_dir);
  std::size_t fragments = 0, usable = 0;
  for (const auto &r : records) {
    fragments += r.fragments.size();
    usable += r.fragments.empty() ? 0 : 1;
  }
  const json summary = {{"speakers", records.size()},
                        {"speakers_with_fragments", usable},
                        {"depressed", stsc::count_depressed(records)},
                        {"fragments", fragments},
                        {"corpus_fingerprint", stsc::corpus_fingerprint(records)}};
  if (!rc.output_dir.empty()) {
    fs::create_directories(rc.output_dir);
    write_json(rc.output_dir / "featurize_summary.json", summary);
    write_run_manifest(rc, "featurize");
  }
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_train(const RunConfig &rc) {
  const auto corpus = load_corpus(rc);
  const auto plan = stsc::make_folds(corpus, rc.folds, rc.seed);
  std::vector<int> folds;
  for (int f = 0; f < rc.folds; ++f)
    if (rc.fold < 0 || rc.fold == f)
      folds.push_back(f);

  fs::create_directories(rc.output_dir);
  write_json(rc.output_dir / "fold_plan.json", plan.to_json());
  std::vector<std::optional<stsc::TrainResult>> results(folds.size());
  std::mutex print_mutex;
  auto run_fold = [&](std::size_t i) {
    const int f = folds[i];
    results[i] = stsc::train(rc.model, corpus, plan, f, rc.train, [&](const stsc::EpochRecord &e) {
      std::lock_guard<std::mutex> lock(print_mutex);
      std::fprintf(stderr, "fold %d epoch %3d loss %.6f val_pr_auc %.4f best %.4f\n", f, e.epoch,
                   e.train_loss, e.val_pr_auc, e.best_so_far);
    });
  };
  if (rc.jobs == 1 || folds.size() == 1) {
    for (std::size_t i = 0; i < folds.size(); ++i)
      run_fold(i);
  } else {
    std::vector<std::thread> workers;
    std::size_t next = 0;
    std::mutex next_mutex;
    for (int w = 0; w < rc.jobs; ++w)
      workers.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard<std::mutex> lock(next_mutex);
            if (next >= folds.size())
              return;
            i = next++;
          }
          run_fold(i);
        }
      });
    for (auto &t : workers)
      t.join();
  }

  json summary = {{"model", rc.model.label()}, {"folds", json::array()}};
  std::vector<double> values;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    const auto &res = *results[i];
    const fs::path dir = rc.output_dir / ("fold" + std::to_string(folds[i]));
    fs::create_directories(dir);
    stsc::save_checkpoint(res.best, dir / "best.ckpt");
    write_text(dir / "history.csv", res.history.to_csv());
    write_text(dir / "val_scores.csv", scores_csv(res.val_scores));
    const auto report = stsc::evaluate_scores(res.val_scores, folds[i]);
    write_json(dir / "metrics.json", report.to_json());
    values.push_back(report.pr_auc);
    summary["folds"].push_back({{"fold", folds[i]},
                                {"best_epoch", res.history.best_epoch},
                                {"epochs_run", res.history.epochs.size()},
                                {"pr_auc", report.pr_auc}});
  }
  if (values.size() >= 2) {
    const auto m = stsc::aggregate_folds(values);
    summary["pr_auc"] = {{"mean", m.mean}, {"stderr", m.stderr_}};
  }
  write_json(rc.output_dir / "summary.json", summary);
  write_run_manifest(rc, "train", {{"corpus_fingerprint", stsc::corpus_fingerprint(corpus)}});
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_grid(const RunConfig &rc) {
  const auto corpus = load_corpus(rc);
  const auto plan = stsc::make_folds(corpus, rc.folds, rc.seed);
  fs::create_directories(rc.output_dir);
  write_json(rc.output_dir / "fold_plan.json", plan.to_json());

  stsc::GridOptions opts;
  opts.cell_dir = rc.output_dir / "cells";
  opts.jobs = rc.jobs;
  opts.max_new_cells = rc.max_new_cells;
  std::mutex print_mutex;
  opts.on_cell = [&](const stsc::CellRecord &c) {
    std::lock_guard<std::mutex> lock(print_mutex);
    if (c.ok)
      std::fprintf(stderr, "%-16s fold %d  pr_auc %.4f\n", c.config.label().c_str(), c.fold, c.pr_auc);
    else
      std::fprintf(stderr, "%-16s fold %d  FAILED: %s\n", c.config.label().c_str(), c.fold,
                   c.error.c_str());
  };
  const auto run = stsc::grid_search(rc.grid, corpus, plan, opts);

  write_text(rc.output_dir / "cells.csv", run.cells_csv());
  write_text(rc.output_dir / "results_table.csv", run.table.to_csv());
  write_text(rc.output_dir / "results_table.txt", run.table.render());
  stsc::ResultTable top{stsc::rank_configs(run.table, 5)};
  write_text(rc.output_dir / "top5.txt", top.render());
  write_run_manifest(rc, "grid", {{"corpus_fingerprint", stsc::corpus_fingerprint(corpus)}});

  std::cout << top.render();
  std::cout << "cells: " << run.computed << " computed, " << run.reused << " reused, " << run.failed
            << " failed" << (run.complete ? "" : " (grid incomplete)") << "\n";
  return run.failed > 0 ? 1 : 0;
}

int cmd_eval(const RunConfig &rc) {
  const auto ck = stsc::load_checkpoint(rc.checkpoint);
  const auto corpus = load_corpus(rc);
  const std::string fingerprint = stsc::corpus_fingerprint(corpus);
  if (!ck.meta.corpus_fingerprint.empty() && ck.meta.corpus_fingerprint != fingerprint)
    std::fprintf(stderr, "warning: checkpoint was trained on a different corpus (%s vs %s)\n",
                 ck.meta.corpus_fingerprint.c_str(), fingerprint.c_str());
  const auto plan = stsc::make_folds(corpus, rc.folds, rc.seed);
  const int fold = rc.fold >= 0 ? rc.fold : ck.meta.fold;
  if (fold < 0 || fold >= rc.folds)
    invalid("fold", "checkpoint records no fold; pass --fold");
  const auto held_out = stsc::select_fold(corpus, plan, fold, true);
  const auto scores = stsc::score_subjects(ck.model, held_out, rc.train.eval_repeats,
                                           stsc::derive_seed(rc.seed, 0xE7A1));
  const auto report = stsc::evaluate_scores(scores, fold);

  fs::create_directories(rc.output_dir);
  write_json(rc.output_dir / "metrics.json", report.to_json());
  write_text(rc.output_dir / "scores.csv", scores_csv(scores));
  write_text(rc.output_dir / "pr_curve.csv", stsc::pr_curve_csv(stsc::pr_curve(scores)));
  write_text(rc.output_dir / "roc_curve.csv", stsc::roc_curve_csv(stsc::roc_curve(scores)));
  write_text(rc.output_dir / "severity.txt", stsc::severity_table(report.severity));
  write_run_manifest(rc, "eval", {{"corpus_fingerprint", fingerprint}});
  std::cout << report.to_json().dump(2) << "\n" << stsc::severity_table(report.severity);
  return 0;
}

int cmd_cluster(const RunConfig &rc) {
  const auto ck = stsc::load_checkpoint(rc.checkpoint);
  const auto corpus = load_corpus(rc);
  stsc::Rng rng(stsc::derive_seed(rc.seed, 0xC1));
  const auto features = stsc::extract_features(ck, corpus, rc.cluster_fragments, rng);
  const std::uint64_t km_seed = stsc::derive_seed(rc.seed, 0xC2);
  const auto km = stsc::kmeans(features.vectors, rc.cluster_k, rc.cluster_restarts, km_seed);
  const auto report = stsc::cluster_composition(km, features.labels, km_seed, rc.cluster_restarts);

  fs::create_directories(rc.output_dir);
  write_text(rc.output_dir / "features.csv", features.to_csv());
  write_json(rc.output_dir / "cluster_report.json", report.to_json());
  write_run_manifest(rc, "cluster", {{"corpus_fingerprint", stsc::corpus_fingerprint(corpus)}});
  std::cout << report.to_text();
  return 0;
}

// ---------------------------------------------------------------------------
// Flag handling

/// Flag values land in the JSON config before validation, so a flag and the
/// equivalent config key are indistinguishable downstream.
struct Overrides {
  std::optional<std::string> config;
  std::optional<std::int64_t> seed;
  std::optional<std::string> manifest, cache_dir, output_dir, checkpoint;
  std::optional<int> folds, fold, jobs, max_new_cells;
  std::optional<std::string> encoder;
  std::optional<int> kernel, samples, epochs, speakers, fragments, k, restarts;
  std::optional<double> lr, prevalence;
  std::optional<std::string> marker;

  json apply(json j) const {
    auto abs_path = [](const std::string &p) { return fs::absolute(p).lexically_normal().string(); };
    if (seed) j["seed"] = *seed;
    if (manifest) j["manifest"] = abs_path(*manifest);
    if (cache_dir) j["cache_dir"] = abs_path(*cache_dir);
    if (output_dir) j["output_dir"] = abs_path(*output_dir);
    if (checkpoint) j["checkpoint"] = abs_path(*checkpoint);
    if (folds) j["folds"] = *folds;
    if (fold) j["fold"] = *fold;
    if (jobs) j["jobs"] = *jobs;
    if (max_new_cells) j["max_new_cells"] = *max_new_cells;
    if (encoder) j["model"]["encoder"] = *encoder;
    if (kernel) j["model"]["kernel_size"] = *kernel;
    if (samples) j["model"]["n_fragments"] = *samples;
    if (epochs) j["train"]["max_epochs"] = *epochs;
    if (lr) j["train"]["lr"] = *lr;
    if (speakers) j["synth"]["n_speakers"] = *speakers;
    if (prevalence) j["synth"]["marker_prevalence"] = *prevalence;
    if (marker) j["synth"]["marker_kind"] = *marker;
    if (fragments) j["cluster"]["fragments"] = *fragments;
    if (k) j["cluster"]["k"] = *k;
    if (restarts) j["cluster"]["restarts"] = *restarts;
    return j;
  }
};

void common_flags(CLI::App *sub, Overrides &o) {
  sub->add_option("--config", o.config, "JSON run configuration");
  sub->add_option("--seed", o.seed, "Master seed (required here or in the config)");
  sub->add_option("--out", o.output_dir, "Output directory");
}

void corpus_flags(CLI::App *sub, Overrides &o) {
  sub->add_option("--manifest", o.manifest, "Corpus manifest CSV (speaker_id,audio_path,phq8)");
  sub->add_option("--cache-dir", o.cache_dir, "Fragment cache directory");
  sub->add_option("--folds", o.folds, "Number of cross-validation folds");
}

void model_flags(CLI::App *sub, Overrides &o) {
  sub->add_option("--encoder", o.encoder, "CNN, CNN_LSTM or CNN_GRU");
  sub->add_option("--kernel", o.kernel, "Convolution kernel size");
  sub->add_option("--samples", o.samples, "Fragments per subject (N)");
  sub->add_option("--epochs", o.epochs, "Maximum training epochs");
  sub->add_option("--lr", o.lr, "Learning rate");
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"stsc: speech-fragment depression screening pipeline"};
  app.require_subcommand(1);
  Overrides o;

  auto *synth = app.add_subcommand("synth", "Generate the synthetic corpus");
  common_flags(synth, o);
  synth->add_option("--speakers", o.speakers, "Number of speakers");
  synth->add_option("--prevalence", o.prevalence, "Marker prevalence in depressed speakers");
  synth->add_option("--marker", o.marker, "Marker kind: band or pair");

  auto *featurize = app.add_subcommand("featurize", "Precompute fragment caches");
  common_flags(featurize, o);
  corpus_flags(featurize, o);

  auto *train = app.add_subcommand("train", "Train one configuration on one or all folds");
  common_flags(train, o);
  corpus_flags(train, o);
  model_flags(train, o);
  train->add_option("--fold", o.fold, "Held-out fold (-1 for all)");
  train->add_option("--jobs", o.jobs, "Folds trained in parallel");

  auto *grid = app.add_subcommand("grid", "Full configuration grid under cross-validation");
  common_flags(grid, o);
  corpus_flags(grid, o);
  grid->add_option("--epochs", o.epochs, "Maximum training epochs");
  grid->add_option("--lr", o.lr, "Learning rate");
  grid->add_option("--jobs", o.jobs, "Cells trained in parallel");
  grid->add_option("--max-new-cells", o.max_new_cells, "Stop after computing this many cells");

  auto *eval = app.add_subcommand("eval", "Metrics and severity tables for a checkpoint");
  common_flags(eval, o);
  corpus_flags(eval, o);
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint file");
  eval->add_option("--fold", o.fold, "Held-out fold to score (default: the checkpoint's fold)");

  auto *cluster = app.add_subcommand("cluster", "Feature extraction and k-means composition");
  common_flags(cluster, o);
  corpus_flags(cluster, o);
  cluster->add_option("--checkpoint", o.checkpoint, "Checkpoint file");
  cluster->add_option("--fragments", o.fragments, "Fragments to sample (even)");
  cluster->add_option("--k", o.k, "Number of clusters");
  cluster->add_option("--restarts", o.restarts, "k-means restarts");

  if (argc < 2) {
    std::cerr << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 2;
  }

  try {
    json raw = json::object();
    fs::path base = fs::current_path();
    if (o.config) {
      raw = load_config_file(*o.config);
      base = fs::absolute(*o.config).parent_path();
    }
    raw = o.apply(std::move(raw));

    Needs needs;
    int (*run)(const RunConfig &) = nullptr;
    if (synth->parsed()) {
      run = cmd_synth;
    } else if (featurize->parsed()) {
      needs.manifest = needs.cache_dir = true;
      needs.output_dir = false;
      run = cmd_featurize;
    } else if (train->parsed()) {
      needs.manifest = needs.full_model = true;
      run = cmd_train;
    } else if (grid->parsed()) {
      needs.manifest = true;
      run = cmd_grid;
    } else if (eval->parsed()) {
      needs.manifest = needs.checkpoint = true;
      run = cmd_eval;
    } else {
      needs.manifest = needs.checkpoint = true;
      run = cmd_cluster;
    }
    const RunConfig rc = resolve(std::move(raw), base, needs);
    return run(rc);
  } catch (const stsc::Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
