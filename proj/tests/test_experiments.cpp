// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "stsc/experiments.hpp"
#include "support/fixtures.hpp"

using namespace stsc;
using fixtures::error_code;
using fixtures::TempDir;
namespace fs = std::filesystem;

namespace {

const fs::path kData = STSC_TEST_DATA_DIR;

ResultTable reference_table() {
  std::ifstream in(kData / "reference_results.csv");
  return ResultTable::from_csv(in);
}

// Deterministic stand-in for training: a value in (0, 1) that depends only on
// the cell's identity.
double fake_pr_auc(const ModelConfig &c, int fold, const TrainConfig &t) {
  const auto h = detail::fnv1a(c.to_json().dump() + std::to_string(fold) + std::to_string(t.seed));
  return 0.3 + 0.6 * static_cast<double>(h % 100000) / 100000.0;
}

FoldPlan three_folds() {
  return make_folds(fixtures::marked_cohort(12, 4, 20, 1), 3, 1);
}

std::vector<std::string> sorted_lines(const std::string &text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);)
    out.push_back(l);
  std::sort(out.begin(), out.end());
  return out;
}

} // namespace

TEST(Grid, FortyFiveConfigurationsInTableOrder) {
  GridSpec g;
  const auto cfgs = g.configs();
  ASSERT_EQ(cfgs.size(), 45u);
  std::set<std::tuple<int, int, EncoderType>> seen;
  for (const auto &c : cfgs)
    seen.insert({c.n_fragments, c.kernel_size, c.encoder});
  EXPECT_EQ(seen.size(), 45u);
  EXPECT_EQ(cfgs.front().n_fragments, 5);
  EXPECT_EQ(cfgs.front().kernel_size, 3);
  EXPECT_EQ(cfgs.front().encoder, EncoderType::Cnn);
  EXPECT_EQ(cfgs[23].label(), "CNN_GRU/k5/N15");
  EXPECT_EQ(cfgs.back().label(), "CNN_GRU/k7/N60");
  EXPECT_NO_THROW(g.validate());
}

TEST(Grid, SpecJsonRoundTripAndErrors) {
  GridSpec g;
  g.sample_sizes = {5, 15};
  g.encoder_types = {EncoderType::CnnGru};
  g.seed = 42;
  const auto back = GridSpec::from_json(g.to_json());
  EXPECT_EQ(back.to_json(), g.to_json());
  EXPECT_EQ(back.configs().size(), 6u);
  EXPECT_EQ(error_code([] { (void)GridSpec::from_json({{"kernel_sizes", "5"}}); }), Errc::ConfigInvalid);
  EXPECT_EQ(error_code([] { (void)GridSpec::from_json({{"encoder_types", {"RNN"}}}); }),
            Errc::ConfigInvalid);
  EXPECT_EQ(error_code([] { (void)GridSpec::from_json({{"seed", "x"}}); }), Errc::ConfigInvalid);
  GridSpec empty;
  empty.kernel_sizes.clear();
  EXPECT_EQ(error_code([&] { empty.validate(); }), Errc::ConfigInvalid);
}

TEST(Ranking, ReferenceTableGivesKnownTopFive) {
  const auto t = reference_table();
  ASSERT_EQ(t.rows.size(), 45u);
  const auto top = rank_configs(t, 5);
  ASSERT_EQ(top.size(), 5u);
  const std::tuple<int, int, EncoderType, double> expected[] = {
      {15, 5, EncoderType::CnnGru, 79.65},
      {60, 5, EncoderType::CnnGru, 79.41},
      {30, 7, EncoderType::CnnGru, 79.15},
      {60, 5, EncoderType::CnnLstm, 78.75},
      {30, 5, EncoderType::CnnGru, 78.48}};
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(top[i].sample_size, std::get<0>(expected[i])) << i;
    EXPECT_EQ(top[i].kernel_size, std::get<1>(expected[i])) << i;
    EXPECT_EQ(top[i].encoder, std::get<2>(expected[i])) << i;
    EXPECT_DOUBLE_EQ(top[i].pr_auc_mean, std::get<3>(expected[i])) << i;
  }
}

TEST(Ranking, SortContractAndTieRule) {
  const auto all = rank_configs(reference_table(), 0);
  ASSERT_EQ(all.size(), 45u);
  for (std::size_t i = 1; i < all.size(); ++i)
    EXPECT_GE(all[i - 1].pr_auc_mean, all[i].pr_auc_mean);

  ResultTable t;
  t.rows = {{30, 5, EncoderType::Cnn, 0.7, 0.03, {}},
            {5, 3, EncoderType::CnnGru, 0.7, 0.01, {}},
            {5, 3, EncoderType::CnnLstm, 0.7, 0.01, {}},
            {60, 7, EncoderType::Cnn, 0.8, 0.05, {}}};
  const auto r = rank_configs(t, 10);
  ASSERT_EQ(r.size(), 4u);
  EXPECT_EQ(r[0].sample_size, 60);
  EXPECT_EQ(r[1].encoder, EncoderType::CnnGru); // equal stderr: "CNN_GRU" < "CNN_LSTM"
  EXPECT_EQ(r[2].encoder, EncoderType::CnnLstm);
  EXPECT_EQ(r[3].pr_auc_stderr, 0.03);
  EXPECT_EQ(rank_configs(t, 2).size(), 2u);
}

TEST(ResultTable, CsvRoundTripAndRender) {
  ResultTable t;
  t.rows = {{15, 5, EncoderType::CnnGru, 0.7965, 0.0202, {0.75, 0.8, 0.8395}},
            {5, 3, EncoderType::Cnn, 0.1 / 3.0, 0.0, {}}};
  std::istringstream in(t.to_csv());
  const auto back = ResultTable::from_csv(in);
  ASSERT_EQ(back.rows.size(), 2u);
  EXPECT_EQ(back.rows[0].pr_auc_mean, 0.7965);
  EXPECT_EQ(back.rows[0].fold_values, t.rows[0].fold_values);
  EXPECT_EQ(back.rows[1].pr_auc_mean, 0.1 / 3.0);
  EXPECT_EQ(back.to_csv(), t.to_csv());
  const auto text = t.render();
  EXPECT_EQ(text.rfind("Sample Size", 0), 0u);
  EXPECT_NE(text.find("79.65 ± 2.02"), std::string::npos);
  EXPECT_NE(t.find(15, 5, EncoderType::CnnGru), nullptr);
  EXPECT_EQ(t.find(15, 7, EncoderType::CnnGru), nullptr);

  std::istringstream no_mean("sample_size,kernel_size,encoder\n5,3,CNN\n");
  EXPECT_EQ(error_code([&] { (void)ResultTable::from_csv(no_mean); }), Errc::MissingColumn);
  std::istringstream bad("sample_size,kernel_size,encoder,pr_auc_mean\n5,x,CNN,0.5\n");
  EXPECT_EQ(error_code([&] { (void)ResultTable::from_csv(bad); }), Errc::CorruptFile);
  std::istringstream empty("");
  EXPECT_EQ(error_code([&] { (void)ResultTable::from_csv(empty); }), Errc::CorruptFile);
}

TEST(GridSearch, AggregatesEveryCell) {
  GridSpec g;
  g.seed = 9;
  const auto plan = three_folds();
  const auto run = grid_search(g, plan, fake_pr_auc);
  EXPECT_TRUE(run.complete);
  EXPECT_EQ(run.computed, 135);
  EXPECT_EQ(run.cells.size(), 135u);
  ASSERT_EQ(run.table.rows.size(), 45u);
  TrainConfig t = g.train;
  t.seed = g.seed;
  for (const auto &row : run.table.rows) {
    ASSERT_EQ(row.fold_values.size(), 3u);
    ModelConfig c;
    c.n_fragments = row.sample_size;
    c.kernel_size = row.kernel_size;
    c.encoder = row.encoder;
    for (int f = 0; f < 3; ++f)
      EXPECT_EQ(row.fold_values[f], fake_pr_auc(c, f, t));
    const auto m = aggregate_folds(row.fold_values);
    EXPECT_EQ(row.pr_auc_mean, m.mean);
    EXPECT_EQ(row.pr_auc_stderr, m.stderr_);
  }
  const auto csv = run.cells_csv();
  EXPECT_EQ(csv.rfind("sample_size,kernel_size,encoder,fold,pr_auc\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 136);
}

TEST(GridSearch, ResumeSkipsFinishedCells) {
  TempDir dir("stsc_grid_resume");
  GridSpec g;
  g.seed = 4;
  const auto plan = three_folds();
  std::atomic<int> calls{0};
  CellRunner counting = [&](const ModelConfig &c, int f, const TrainConfig &t) {
    ++calls;
    return fake_pr_auc(c, f, t);
  };
  GridOptions opts;
  opts.cell_dir = dir.path();
  opts.max_new_cells = 20;
  const auto first = grid_search(g, plan, counting, opts);
  EXPECT_EQ(calls, 20);
  EXPECT_FALSE(first.complete);
  EXPECT_EQ(first.computed, 20);

  std::map<std::string, std::string> before;
  for (const auto &c : first.cells)
    if (c.ok) {
      std::ifstream in(dir.path() / (c.key + ".json"));
      before[c.key] = std::string(std::istreambuf_iterator<char>(in), {});
    }
  ASSERT_EQ(before.size(), 20u);
  std::ifstream log_in(dir.path() / "cells.log");
  const std::string log_before(std::istreambuf_iterator<char>(log_in), {});

  calls = 0;
  opts.max_new_cells = -1;
  const auto second = grid_search(g, plan, counting, opts);
  EXPECT_EQ(calls, 115);
  EXPECT_EQ(second.reused, 20);
  EXPECT_EQ(second.computed, 115);
  EXPECT_TRUE(second.complete);
  for (const auto &[key, text] : before) {
    std::ifstream in(dir.path() / (key + ".json"));
    EXPECT_EQ(std::string(std::istreambuf_iterator<char>(in), {}), text);
  }
  std::ifstream log_after(dir.path() / "cells.log");
  const std::string log_text(std::istreambuf_iterator<char>(log_after), {});
  EXPECT_EQ(log_text.rfind(log_before, 0), 0u); // earlier entries untouched

  const auto fresh = grid_search(g, plan, fake_pr_auc);
  EXPECT_EQ(second.table.to_csv(), fresh.table.to_csv());

  calls = 0;
  const auto third = grid_search(g, plan, counting, opts);
  EXPECT_EQ(calls, 0);
  EXPECT_EQ(third.reused, 135);
}

TEST(GridSearch, FailedCellsAreRecordedAndRetried) {
  TempDir dir("stsc_grid_fail");
  GridSpec g;
  g.sample_sizes = {5, 10};
  g.kernel_sizes = {3};
  const auto plan = three_folds();
  CellRunner flaky = [](const ModelConfig &c, int f, const TrainConfig &t) {
    if (c.n_fragments == 10 && f == 1)
      fail(Errc::NonFiniteGradient, "diverged");
    return fake_pr_auc(c, f, t);
  };
  GridOptions opts;
  opts.cell_dir = dir.path();
  const auto run = grid_search(g, plan, flaky, opts);
  EXPECT_FALSE(run.complete);
  EXPECT_EQ(run.failed, 3);
  EXPECT_EQ(run.table.rows.size(), 6u);
  for (const auto &row : run.table.rows)
    EXPECT_EQ(row.fold_values.size(), row.sample_size == 10 ? 2u : 3u);
  for (const auto &c : run.cells)
    if (!c.ok) {
      EXPECT_NE(c.error.find("diverged"), std::string::npos);
    }

  int calls = 0;
  const auto retry = grid_search(
      g, plan,
      [&](const ModelConfig &c, int f, const TrainConfig &t) {
        ++calls;
        return fake_pr_auc(c, f, t);
      },
      opts);
  EXPECT_EQ(calls, 3);
  EXPECT_TRUE(retry.complete);
}

TEST(GridSearch, ParallelJobsMatchSerial) {
  GridSpec g;
  g.seed = 12;
  const auto plan = three_folds();
  GridOptions opts;
  opts.jobs = 4;
  const auto par = grid_search(g, plan, fake_pr_auc, opts);
  const auto ser = grid_search(g, plan, fake_pr_auc);
  EXPECT_EQ(par.table.to_csv(), ser.table.to_csv());
  EXPECT_EQ(par.cells_csv(), ser.cells_csv());
  EXPECT_EQ(sorted_lines(par.cells_csv()), sorted_lines(ser.cells_csv()));
}

TEST(GridSearch, CellKeysAreDistinct) {
  GridSpec g;
  TrainConfig t;
  std::set<std::string> keys;
  for (const auto &c : g.configs())
    for (int f = 0; f < 3; ++f)
      keys.insert(cell_key(c, t, f, 0));
  EXPECT_EQ(keys.size(), 135u);
  const auto c = g.configs()[0];
  EXPECT_NE(cell_key(c, t, 0, 0), cell_key(c, t, 0, 1));
  TrainConfig t2 = t;
  t2.lr = 1e-3;
  EXPECT_NE(cell_key(c, t, 0, 0), cell_key(c, t2, 0, 0));
}

TEST(GridSearch, RealTrainingIsReproducible) {
  const auto corpus = fixtures::marked_cohort(9, 3, 24, 3);
  const auto plan = make_folds(corpus, 3, 2);
  GridSpec g;
  g.sample_sizes = {2, 3};
  g.kernel_sizes = {3};
  g.encoder_types = {EncoderType::Cnn, EncoderType::CnnGru};
  g.base.n_filters = 6;
  g.base.rnn_hidden = 4;
  g.base.feature_dim = 6;
  g.base.head_hidden = 4;
  g.train.max_epochs = 2;
  g.train.batch_size = 3;
  g.train.eval_repeats = 2;
  g.seed = 5;
  const auto a = grid_search(g, corpus, plan);
  GridOptions opts;
  opts.jobs = 3;
  const auto b = grid_search(g, corpus, plan, opts);
  EXPECT_TRUE(a.complete);
  EXPECT_EQ(a.table.rows.size(), 4u);
  EXPECT_EQ(a.table.to_csv(), b.table.to_csv());
}
