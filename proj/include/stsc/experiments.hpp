// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "stsc/corpus.hpp"
#include "stsc/error.hpp"
#include "stsc/evaluation.hpp"
#include "stsc/model.hpp"
#include "stsc/training.hpp"

namespace stsc {

struct GridSpec {
  std::vector<int> sample_sizes{kGridSampleSizes.begin(), kGridSampleSizes.end()};
  std::vector<int> kernel_sizes{kGridKernelSizes.begin(), kGridKernelSizes.end()};
  std::vector<EncoderType> encoder_types{kGridEncoders.begin(), kGridEncoders.end()};
  ModelConfig base;   // everything except the three grid axes
  TrainConfig train;
  std::uint64_t seed = 0;

  /// Row order of the results table: sample size, then kernel, then encoder.
  std::vector<ModelConfig> configs() const {
    std::vector<ModelConfig> out;
    for (int n : sample_sizes)
      for (int k : kernel_sizes)
        for (EncoderType e : encoder_types) {
          ModelConfig c = base;
          c.n_fragments = n;
          c.kernel_size = k;
          c.encoder = e;
          out.push_back(c);
        }
    return out;
  }

  void validate() const {
    if (sample_sizes.empty() || kernel_sizes.empty() || encoder_types.empty())
      fail(Errc::ConfigInvalid, "grid: every axis needs at least one value");
    for (const auto &c : configs())
      c.validate_shapes();
    train.validate();
  }

  nlohmann::json to_json() const {
    std::vector<std::string> enc;
    for (auto e : encoder_types)
      enc.push_back(to_string(e));
    return {{"sample_sizes", sample_sizes}, {"kernel_sizes", kernel_sizes},
            {"encoder_types", enc},         {"model", base.to_json()},
            {"train", train.to_json()},     {"seed", seed}};
  }

  static GridSpec from_json(const nlohmann::json &j) {
    GridSpec g;
    auto int_list = [&](const char *key, std::vector<int> &dst) {
      if (!j.contains(key))
        return;
      const auto &v = j.at(key);
      if (!v.is_array())
        fail(Errc::ConfigInvalid, std::string(key) + ": expected an array of integers");
      dst.clear();
      for (const auto &x : v) {
        if (!x.is_number_integer())
          fail(Errc::ConfigInvalid, std::string(key) + ": expected an array of integers");
        dst.push_back(x.get<int>());
      }
    };
    int_list("sample_sizes", g.sample_sizes);
    int_list("kernel_sizes", g.kernel_sizes);
    if (j.contains("encoder_types")) {
      const auto &v = j.at("encoder_types");
      if (!v.is_array())
        fail(Errc::ConfigInvalid, "encoder_types: expected an array of strings");
      g.encoder_types.clear();
      for (const auto &x : v) {
        if (!x.is_string())
          fail(Errc::ConfigInvalid, "encoder_types: expected an array of strings");
        g.encoder_types.push_back(parse_encoder(x.get<std::string>()));
      }
    }
    if (j.contains("model"))
      g.base = ModelConfig::from_json(j.at("model"));
    if (j.contains("train"))
      g.train = TrainConfig::from_json(j.at("train"));
    if (j.contains("seed")) {
      if (!j.at("seed").is_number_integer())
        fail(Errc::ConfigInvalid, "seed: expected a non-negative integer");
      g.seed = j.at("seed").get<std::uint64_t>();
    }
    return g;
  }
};

// ---------------------------------------------------------------------------
// Result tables

struct ResultRow {
  int sample_size = 0;
  int kernel_size = 0;
  EncoderType encoder = EncoderType::Cnn;
  double pr_auc_mean = 0.0;
  double pr_auc_stderr = 0.0;
  std::vector<double> fold_values;

  auto key() const { return std::make_tuple(sample_size, kernel_size, to_string(encoder)); }
};

struct ResultTable {
  std::vector<ResultRow> rows;

  const ResultRow *find(int sample_size, int kernel_size, EncoderType encoder) const {
    for (const auto &r : rows)
      if (r.sample_size == sample_size && r.kernel_size == kernel_size && r.encoder == encoder)
        return &r;
    return nullptr;
  }

  /// Aggregated CSV, one row per configuration; fold values are ';'-joined.
  std::string to_csv() const {
    std::ostringstream os;
    os << "sample_size,kernel_size,encoder,pr_auc_mean,pr_auc_stderr,fold_values\n";
    char buf[64];
    for (const auto &r : rows) {
      os << r.sample_size << ',' << r.kernel_size << ',' << to_string(r.encoder) << ',';
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,", r.pr_auc_mean, r.pr_auc_stderr);
      os << buf;
      for (std::size_t i = 0; i < r.fold_values.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s%.17g", i ? ";" : "", r.fold_values[i]);
        os << buf;
      }
      os << '\n';
    }
    return os.str();
  }

  /// Reads the aggregated CSV. Only the first four columns are required, so
  /// tables that report a mean alone can be loaded as data.
  static ResultTable from_csv(std::istream &in) {
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), Errc::CorruptFile, "result table is empty");
    const auto header = detail::split_csv_line(line);
    auto column = [&](const std::string &name) -> int {
      for (std::size_t i = 0; i < header.size(); ++i)
        if (detail::trim(header[i]) == name)
          return static_cast<int>(i);
      return -1;
    };
    const int c_n = column("sample_size"), c_k = column("kernel_size"), c_e = column("encoder"),
              c_m = column("pr_auc_mean"), c_s = column("pr_auc_stderr"),
              c_f = column("fold_values");
    for (auto [c, name] : {std::pair{c_n, "sample_size"}, {c_k, "kernel_size"}, {c_e, "encoder"},
                           {c_m, "pr_auc_mean"}})
      if (c < 0)
        fail(Errc::MissingColumn, std::string("result table lacks column ") + name);

    ResultTable t;
    int lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (detail::trim(line).empty())
        continue;
      const auto f = detail::split_csv_line(line);
      auto cell = [&](int c) { return c >= 0 && c < static_cast<int>(f.size()) ? detail::trim(f[c]) : std::string(); };
      try {
        ResultRow r;
        r.sample_size = std::stoi(cell(c_n));
        r.kernel_size = std::stoi(cell(c_k));
        r.encoder = parse_encoder(cell(c_e));
        r.pr_auc_mean = std::stod(cell(c_m));
        const std::string s = cell(c_s);
        r.pr_auc_stderr = s.empty() ? 0.0 : std::stod(s);
        std::stringstream folds(cell(c_f));
        for (std::string v; std::getline(folds, v, ';');)
          if (!detail::trim(v).empty())
            r.fold_values.push_back(std::stod(v));
        t.rows.push_back(std::move(r));
      } catch (const std::invalid_argument &) {
        fail(Errc::CorruptFile, "result table line " + std::to_string(lineno) + " is malformed");
      } catch (const std::out_of_range &) {
        fail(Errc::CorruptFile, "result table line " + std::to_string(lineno) + " is out of range");
      }
    }
    return t;
  }

  /// Plain-text table in the column order Sample Size | Kernel Size |
  /// Encoder Type | PR-AUC, values in percent.
  std::string render() const {
    std::ostringstream os;
    char line[128];
    std::snprintf(line, sizeof line, "%-12s %-12s %-14s %s\n", "Sample Size", "Kernel Size",
                  "Encoder Type", "PR-AUC");
    os << line;
    for (const auto &r : rows) {
      const std::string v =
          format_mean_stderr({r.pr_auc_mean, r.pr_auc_stderr}, 100.0);
      std::snprintf(line, sizeof line, "%-12d %-12d %-14s %s\n", r.sample_size, r.kernel_size,
                    to_string(r.encoder).c_str(), v.c_str());
      os << line;
    }
    return os.str();
  }
};

/// Descending mean; ties by lower stderr, then by (sample size, kernel,
/// encoder name) ascending. `top_n` <= 0 keeps every row.
inline std::vector<ResultRow> rank_configs(const ResultTable &table, int top_n = 5) {
  std::vector<ResultRow> rows = table.rows;
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow &a, const ResultRow &b) {
    if (a.pr_auc_mean != b.pr_auc_mean)
      return a.pr_auc_mean > b.pr_auc_mean;
    if (a.pr_auc_stderr != b.pr_auc_stderr)
      return a.pr_auc_stderr < b.pr_auc_stderr;
    return a.key() < b.key();
  });
  if (top_n > 0 && rows.size() > static_cast<std::size_t>(top_n))
    rows.resize(static_cast<std::size_t>(top_n));
  return rows;
}

// ---------------------------------------------------------------------------
// Grid search

struct CellRecord {
  ModelConfig config;
  int fold = 0;
  std::uint64_t seed = 0;
  std::string key;
  bool ok = false;
  double pr_auc = 0.0;
  std::string error;
  bool reused = false; // loaded from a previous run instead of computed

  nlohmann::json to_json() const {
    nlohmann::json j = {{"key", key},   {"config", config.to_json()}, {"fold", fold},
                        {"seed", seed}, {"status", ok ? "ok" : "failed"}};
    if (ok)
      j["pr_auc"] = pr_auc;
    else
      j["error"] = error;
    return j;
  }
};

/// Stable identity of a (configuration, training setup, fold, seed) cell.
inline std::string cell_key(const ModelConfig &config, const TrainConfig &train, int fold,
                            std::uint64_t seed) {
  const std::string body = config.to_json().dump() + "|" + train.to_json().dump();
  char buf[96];
  std::snprintf(buf, sizeof buf, "%016llx-f%d-s%llu",
                static_cast<unsigned long long>(detail::fnv1a(body)), fold,
                static_cast<unsigned long long>(seed));
  return buf;
}

/// Held-out PR-AUC of one cell. The default trains on the other folds and
/// scores the held-out one with the retained checkpoint.
using CellRunner = std::function<double(const ModelConfig &, int fold, const TrainConfig &)>;

struct GridOptions {
  std::filesystem::path cell_dir; // empty: nothing persisted, nothing resumed
  int max_new_cells = -1;         // stop after computing this many cells (< 0: no limit)
  int jobs = 1;
  std::function<void(const CellRecord &)> on_cell;
};

struct GridRun {
  ResultTable table;
  std::vector<CellRecord> cells; // grid order, folds innermost
  int computed = 0;
  int reused = 0;
  int failed = 0;
  bool complete = false; // every cell has a successful result

  /// Per-fold CSV `sample_size,kernel_size,encoder,fold,pr_auc` (successful cells).
  std::string cells_csv() const {
    std::ostringstream os;
    os << "sample_size,kernel_size,encoder,fold,pr_auc\n";
    char buf[40];
    for (const auto &c : cells) {
      if (!c.ok)
        continue;
      std::snprintf(buf, sizeof buf, "%.17g", c.pr_auc);
      os << c.config.n_fragments << ',' << c.config.kernel_size << ','
         << to_string(c.config.encoder) << ',' << c.fold << ',' << buf << '\n';
    }
    return os.str();
  }
};

namespace detail {

inline std::optional<CellRecord> load_cell(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    return std::nullopt;
  try {
    const auto j = nlohmann::json::parse(in);
    CellRecord c;
    c.key = j.at("key").get<std::string>();
    c.config = ModelConfig::from_json(j.at("config"));
    c.fold = j.at("fold").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.ok = j.at("status").get<std::string>() == "ok";
    if (c.ok)
      c.pr_auc = j.at("pr_auc").get<double>();
    else
      c.error = j.value("error", "");
    return c;
  } catch (const std::exception &) {
    return std::nullopt; // unreadable cell files are recomputed
  }
}

inline void write_file_atomic(const std::filesystem::path &path, const std::string &text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), Errc::IoError, "cannot write " + tmp);
    out << text;
    require(static_cast<bool>(out), Errc::IoError, "cannot write " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

} // namespace detail

inline ResultTable aggregate_cells(const GridSpec &spec, const std::vector<CellRecord> &cells) {
  ResultTable t;
  for (const auto &cfg : spec.configs()) {
    ResultRow row;
    row.sample_size = cfg.n_fragments;
    row.kernel_size = cfg.kernel_size;
    row.encoder = cfg.encoder;
    for (const auto &c : cells)
      if (c.ok && c.config == cfg)
        row.fold_values.push_back(c.pr_auc);
    if (row.fold_values.empty())
      continue;
    if (row.fold_values.size() >= 2) {
      const auto m = aggregate_folds(row.fold_values);
      row.pr_auc_mean = m.mean;
      row.pr_auc_stderr = m.stderr_;
    } else {
      row.pr_auc_mean = row.fold_values.front();
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline CellRunner default_cell_runner(const std::vector<SpeakerRecord> &corpus,
                                      const FoldPlan &plan) {
  return [&corpus, &plan](const ModelConfig &cfg, int fold, const TrainConfig &train_cfg) {
    return pr_auc(train(cfg, corpus, plan, fold, train_cfg).val_scores);
  };
}

/// Every configuration of `spec` under every fold of `plan`. Completed cells
/// found in `opts.cell_dir` are reused; failed cells are recorded and retried
/// on the next run. Timestamps go only to `cells.log` beside the cell files.
inline GridRun grid_search(const GridSpec &spec, const FoldPlan &plan, const CellRunner &runner,
                           const GridOptions &opts = {}) {
  spec.validate();
  require(plan.k >= 1, Errc::InvalidArgument, "fold plan has no folds");
  require(static_cast<bool>(runner), Errc::InvalidArgument, "grid_search needs a cell runner");
  const bool persist = !opts.cell_dir.empty();
  if (persist)
    std::filesystem::create_directories(opts.cell_dir);

  TrainConfig train_cfg = spec.train;
  train_cfg.seed = spec.seed;

  GridRun run;
  std::vector<std::size_t> pending;
  for (const auto &cfg : spec.configs())
    for (int fold = 0; fold < plan.k; ++fold) {
      CellRecord c;
      c.config = cfg;
      c.fold = fold;
      c.seed = spec.seed;
      c.key = cell_key(cfg, train_cfg, fold, spec.seed);
      if (persist) {
        if (auto prev = detail::load_cell(opts.cell_dir / (c.key + ".json"));
            prev && prev->ok && prev->key == c.key) {
          prev->reused = true;
          run.cells.push_back(*prev);
          ++run.reused;
          continue;
        }
      }
      pending.push_back(run.cells.size());
      run.cells.push_back(c);
    }
  if (opts.max_new_cells >= 0 && pending.size() > static_cast<std::size_t>(opts.max_new_cells))
    pending.resize(static_cast<std::size_t>(opts.max_new_cells));

  std::mutex io_mutex;
  auto run_cell = [&](CellRecord &c) {
    try {
      c.pr_auc = runner(c.config, c.fold, train_cfg);
      c.ok = std::isfinite(c.pr_auc);
      if (!c.ok)
        c.error = "non-finite PR-AUC";
    } catch (const std::exception &e) {
      c.ok = false;
      c.error = e.what();
    }
    std::lock_guard<std::mutex> lock(io_mutex);
    if (persist) {
      detail::write_file_atomic(opts.cell_dir / (c.key + ".json"), c.to_json().dump(2) + "\n");
      std::ofstream log(opts.cell_dir / "cells.log", std::ios::app);
      log << detail::utc_timestamp() << ' ' << c.key << ' ' << c.config.label() << " fold "
          << c.fold << ' ' << (c.ok ? "ok" : "failed") << '\n';
    }
    if (opts.on_cell)
      opts.on_cell(c);
  };

  const int jobs = std::max(1, opts.jobs);
  if (jobs == 1) {
    for (std::size_t idx : pending)
      run_cell(run.cells[idx]);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (int w = 0; w < jobs; ++w)
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < pending.size(); i = next++)
          run_cell(run.cells[pending[i]]);
      });
    for (auto &t : workers)
      t.join();
  }

  run.computed = static_cast<int>(pending.size());
  run.complete = true;
  for (const auto &c : run.cells) {
    if (!c.ok)
      run.complete = false;
    if (!c.ok && !c.error.empty())
      ++run.failed;
  }
  run.table = aggregate_cells(spec, run.cells);
  return run;
}

inline GridRun grid_search(const GridSpec &spec, const std::vector<SpeakerRecord> &corpus,
                           const FoldPlan &plan, const GridOptions &opts = {}) {
  return grid_search(spec, plan, default_cell_runner(corpus, plan), opts);
}

} // namespace stsc
