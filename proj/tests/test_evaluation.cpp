// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <gtest/gtest.h>

#include "stsc/evaluation.hpp"
#include "stsc/random.hpp"
#include "support/fixtures.hpp"

using namespace stsc;
using fixtures::error_code;

namespace {

std::vector<ScoredSubject> scored(const std::vector<double> &scores, const std::vector<int> &labels) {
  std::vector<ScoredSubject> out;
  for (std::size_t i = 0; i < scores.size(); ++i)
    out.push_back({"S" + std::to_string(i), scores[i], labels[i], labels[i] ? 15 : 3});
  return out;
}

// Precision at each positive's own score (everything scoring at least as
// high counts as called), averaged over positives.
double brute_ap(const std::vector<ScoredSubject> &s) {
  double sum = 0;
  int pos = 0;
  for (const auto &a : s) {
    if (a.label != 1)
      continue;
    ++pos;
    int called = 0, tp = 0;
    for (const auto &b : s)
      if (b.score >= a.score) {
        ++called;
        tp += b.label;
      }
    sum += static_cast<double>(tp) / called;
  }
  return sum / pos;
}

double pair_auc(const std::vector<ScoredSubject> &s) {
  double wins = 0;
  int pairs = 0;
  for (const auto &p : s)
    for (const auto &n : s)
      if (p.label == 1 && n.label == 0) {
        ++pairs;
        wins += p.score > n.score ? 1.0 : p.score == n.score ? 0.5 : 0.0;
      }
  return wins / pairs;
}

// Random instance with both classes and deliberate ties.
std::vector<ScoredSubject> random_instance(Rng &rng, int max_n = 20) {
  const int n = 2 + static_cast<int>(uniform_index(rng, max_n - 1));
  std::vector<double> sc(n);
  std::vector<int> lab(n);
  const bool coarse = uniform01(rng) < 0.5;
  for (int i = 0; i < n; ++i) {
    sc[i] = coarse ? static_cast<double>(uniform_index(rng, 5)) / 4.0 : uniform01(rng);
    lab[i] = uniform01(rng) < 0.4 ? 1 : 0;
  }
  lab[0] = 1;
  lab[1] = 0;
  return scored(sc, lab);
}

} // namespace

TEST(PrCurve, WorkedExample) {
  const auto s = scored({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0});
  const auto c = pr_curve(s);
  ASSERT_EQ(c.size(), 4u);
  const double rec[] = {0.5, 0.5, 1.0, 1.0};
  const double prec[] = {1.0, 0.5, 2.0 / 3.0, 0.5};
  const double thr[] = {0.9, 0.8, 0.7, 0.6};
  for (int i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(c[i].recall, rec[i]);
    EXPECT_DOUBLE_EQ(c[i].precision, prec[i]);
    EXPECT_EQ(c[i].threshold, thr[i]);
  }
  EXPECT_NEAR(pr_auc(s), (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
  EXPECT_NEAR(pr_auc(s), 0.8333, 1e-4);
}

TEST(PrCurve, TrivialCases) {
  const auto perfect = scored({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0});
  EXPECT_EQ(pr_auc(perfect), 1.0);
  EXPECT_EQ(roc_auc(perfect), 1.0);
  bool reached = false;
  for (const auto &p : pr_curve(perfect))
    reached |= p.recall == 1.0 && p.precision == 1.0;
  EXPECT_TRUE(reached);
  EXPECT_EQ(best_f1(pr_curve(perfect)).f1, 1.0);

  const auto flat = scored({0.4, 0.4, 0.4, 0.4, 0.4, 0.4}, {1, 0, 1, 0, 0, 1});
  const auto c = pr_curve(flat);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].recall, 1.0);
  EXPECT_EQ(c[0].precision, 0.5);
  EXPECT_EQ(pr_auc(flat), 0.5);
  EXPECT_EQ(roc_auc(flat), 0.5);
}

TEST(PrCurve, DegenerateLabels) {
  const auto pos = scored({0.3, 0.6}, {1, 1});
  const auto neg = scored({0.3, 0.6}, {0, 0});
  EXPECT_EQ(error_code([&] { (void)pr_curve(pos); }), Errc::DegenerateLabels);
  EXPECT_EQ(error_code([&] { (void)pr_auc(neg); }), Errc::DegenerateLabels);
  EXPECT_EQ(error_code([&] { (void)roc_auc(pos); }), Errc::DegenerateLabels);
  EXPECT_EQ(error_code([&] { (void)roc_curve(neg); }), Errc::DegenerateLabels);
  auto bad = scored({0.3, NAN}, {1, 0});
  EXPECT_EQ(error_code([&] { (void)pr_auc(bad); }), Errc::NonFiniteValue);
}

TEST(MetricOracles, RandomInstancesMatchBruteForce) {
  Rng rng(2024);
  for (int it = 0; it < 1000; ++it) {
    const auto s = random_instance(rng);
    EXPECT_NEAR(pr_auc(s), brute_ap(s), 1e-12) << "instance " << it;
    EXPECT_EQ(roc_auc(s), pair_auc(s)) << "instance " << it;
  }
}

TEST(MetricOracles, CurvesMatchThresholdEnumeration) {
  Rng rng(7);
  for (int it = 0; it < 200; ++it) {
    const auto s = random_instance(rng);
    const auto pr = pr_curve(s);
    const auto roc = roc_curve(s);
    ASSERT_EQ(roc.size(), pr.size() + 1);
    EXPECT_EQ(roc.front().fpr, 0.0);
    EXPECT_EQ(roc.back().fpr, 1.0);
    EXPECT_EQ(roc.back().tpr, 1.0);
    int npos = 0;
    for (const auto &x : s)
      npos += x.label;
    const int nneg = static_cast<int>(s.size()) - npos;
    for (std::size_t i = 0; i < pr.size(); ++i) {
      if (i > 0) {
        EXPECT_LT(pr[i].threshold, pr[i - 1].threshold);
      }
      int tp = 0, fp = 0;
      for (const auto &x : s)
        if (x.score >= pr[i].threshold)
          (x.label ? tp : fp) += 1;
      EXPECT_DOUBLE_EQ(pr[i].precision, static_cast<double>(tp) / (tp + fp));
      EXPECT_DOUBLE_EQ(pr[i].recall, static_cast<double>(tp) / npos);
      EXPECT_DOUBLE_EQ(roc[i + 1].tpr, static_cast<double>(tp) / npos);
      EXPECT_DOUBLE_EQ(roc[i + 1].fpr, static_cast<double>(fp) / nneg);
    }
  }
}

TEST(MetricOracles, RankInvariance) {
  Rng rng(11);
  for (int it = 0; it < 300; ++it) {
    auto s = random_instance(rng);
    const double ap = pr_auc(s), auc = roc_auc(s);
    for (auto &x : s)
      x.score = std::exp(3.0 * x.score) - 7.0;
    EXPECT_EQ(pr_auc(s), ap);
    EXPECT_EQ(roc_auc(s), auc);
  }
}

TEST(MetricOracles, RandomScoresGiveChanceRocAuc) {
  Rng rng(5);
  std::vector<ScoredSubject> s;
  for (int i = 0; i < 10000; ++i)
    s.push_back({"S", uniform01(rng), i % 2, 0});
  EXPECT_NEAR(roc_auc(s), 0.5, 0.02);
}

TEST(BestF1, TableTriple) {
  EXPECT_NEAR(f1_score(0.64, 0.9167), 0.754, 1e-3);
  EXPECT_NEAR(f1_score(0.64, 0.9167), 0.75, 5e-3);
  EXPECT_EQ(f1_score(0.0, 0.0), 0.0);
}

TEST(BestF1, IsArgmaxAndPrefersHigherThreshold) {
  Rng rng(13);
  for (int it = 0; it < 500; ++it) {
    const auto c = pr_curve(random_instance(rng));
    const auto b = best_f1(c);
    for (const auto &p : c) {
      const double f = f1_score(p.precision, p.recall);
      EXPECT_GE(b.f1, f);
      if (f == b.f1) {
        EXPECT_GE(b.threshold, p.threshold);
      }
    }
  }
  const std::vector<PrPoint> tied = {{0.5, 0.5, 0.8}, {0.5, 0.5, 0.3}};
  EXPECT_EQ(best_f1(tied).threshold, 0.8);
  EXPECT_EQ(error_code([] { (void)best_f1({}); }), Errc::InvalidArgument);
}

TEST(Severity, BandsAndConfusionTotals) {
  ASSERT_EQ(severity_bands().size(), 4u);
  EXPECT_EQ(severity_bands()[0].name(), "10-14");
  EXPECT_EQ(severity_bands()[3].name(), "10-24");
  Rng rng(17);
  std::vector<ScoredSubject> s;
  for (int i = 0; i < 120; ++i) {
    const int phq = static_cast<int>(uniform_index(rng, 25));
    s.push_back({"S" + std::to_string(i), uniform01(rng), phq8_label(phq), phq});
  }
  int healthy = 0, counts[3] = {0, 0, 0};
  for (const auto &x : s) {
    if (x.phq8 <= 9)
      ++healthy;
    else
      ++counts[(x.phq8 - 10) / 5];
  }
  const auto rows = severity_report(s, 0.5);
  ASSERT_EQ(rows.size(), 4u);
  for (int b = 0; b < 3; ++b)
    EXPECT_EQ(rows[b].total(), healthy + counts[b]);
  EXPECT_EQ(rows[3].total(), static_cast<int>(s.size()));
  for (const auto &r : rows) {
    EXPECT_GE(r.f1, 0.0);
    EXPECT_LE(r.f1, 1.0);
    EXPECT_LE(r.precision, 1.0);
    EXPECT_LE(r.recall, 1.0);
  }
  // healthy subjects appear in every row with the same fp/tn split
  EXPECT_EQ(rows[0].fp + rows[0].tn, healthy);
  EXPECT_EQ(rows[1].fp, rows[0].fp);
}

TEST(Severity, EmptyBandIsAbsentAndSaturatedBandHasFullRecall) {
  std::vector<ScoredSubject> s = {{"a", 0.1, 0, 2}, {"b", 0.2, 0, 8}, {"c", 0.9, 1, 12},
                                  {"d", 0.95, 1, 13}, {"e", 0.7, 1, 22}};
  const auto rows = severity_report(s, 0.5);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].band, "10-14");
  EXPECT_EQ(rows[1].band, "20-24");
  EXPECT_EQ(rows[2].band, "10-24");
  for (const auto &r : rows)
    EXPECT_EQ(r.recall, 1.0);
  EXPECT_EQ(rows[2].tp, 3);
  EXPECT_EQ(rows[2].tn, 2);
}

TEST(Severity, MonotoneSignalGivesMonotoneRecall) {
  // score shifts upward with severity, so deeper bands clear the threshold more often
  Rng rng(19);
  std::vector<ScoredSubject> s;
  for (int i = 0; i < 3000; ++i) {
    const int phq = static_cast<int>(uniform_index(rng, 25));
    const double shift = phq <= 9 ? 0.0 : 0.2 + 0.04 * (phq - 10);
    s.push_back({"S", uniform01(rng) * 0.6 + shift, phq8_label(phq), phq});
  }
  const auto rows = severity_report(s, 0.55);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_LE(rows[0].recall, rows[1].recall);
  EXPECT_LE(rows[1].recall, rows[2].recall);
}

TEST(Report, BestThresholdReproducesTripleOnFullBand) {
  Rng rng(23);
  for (int it = 0; it < 100; ++it) {
    std::vector<ScoredSubject> s;
    const int n = 10 + static_cast<int>(uniform_index(rng, 30));
    for (int i = 0; i < n; ++i) {
      const int phq = static_cast<int>(uniform_index(rng, 25));
      s.push_back({"S" + std::to_string(i), uniform01(rng), phq8_label(phq), phq});
    }
    s[0].phq8 = 3;
    s[0].label = 0;
    s[1].phq8 = 17;
    s[1].label = 1;
    const auto r = evaluate_scores(s, 2);
    const auto &full = r.severity.back();
    ASSERT_EQ(full.band, "10-24");
    EXPECT_DOUBLE_EQ(full.f1, r.best.f1);
    EXPECT_DOUBLE_EQ(full.precision, r.best.precision);
    EXPECT_DOUBLE_EQ(full.recall, r.best.recall);
    EXPECT_EQ(r.fold_index, 2);
    EXPECT_EQ(r.n_subjects, n);
    const auto j = r.to_json();
    EXPECT_EQ(j.at("severity_rows").size(), r.severity.size());
    EXPECT_EQ(j.at("best_f1").at("threshold").get<double>(), r.best.threshold);
  }
}

TEST(Aggregate, MeanAndStandardError) {
  const auto m = aggregate_folds({0.79, 0.80, 0.80});
  EXPECT_NEAR(m.mean * 100, 79.67, 5e-3);
  EXPECT_NEAR(m.stderr_ * 100, 0.33, 5e-3);
  EXPECT_NEAR(m.stderr_, std::sqrt((0.02 * 0.02 / 9 + 2 * 0.01 * 0.01 / 9) / 2) / std::sqrt(3.0), 1e-15);
  EXPECT_EQ(format_mean_stderr(m), "79.67 ± 0.33");
  EXPECT_EQ(aggregate_folds({0.5, 0.5, 0.5}).stderr_, 0.0);
  EXPECT_EQ(format_mean_stderr({0.7965, 0.0202}), "79.65 ± 2.02");
  EXPECT_EQ(error_code([] { (void)aggregate_folds({0.5}); }), Errc::InvalidArgument);
}

TEST(Aggregate, ReportsJson) {
  std::vector<MetricsReport> reports(3);
  for (int i = 0; i < 3; ++i) {
    reports[i].pr_auc = 0.7 + 0.1 * i;
    reports[i].roc_auc = 0.5;
    reports[i].best.f1 = 0.6;
  }
  const auto j = aggregate_reports(reports);
  EXPECT_EQ(j.at("folds").get<int>(), 3);
  EXPECT_NEAR(j.at("pr_auc").at("mean").get<double>(), 0.8, 1e-12);
  EXPECT_NEAR(j.at("pr_auc").at("stderr").get<double>(), 0.1 / std::sqrt(3.0), 1e-12);
  EXPECT_EQ(j.at("roc_auc").at("stderr").get<double>(), 0.0);
}

TEST(Export, CurveCsv) {
  const auto s = scored({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0});
  const auto pr = pr_curve_csv(pr_curve(s));
  EXPECT_EQ(pr.rfind("threshold,recall,precision\n", 0), 0u);
  EXPECT_EQ(std::count(pr.begin(), pr.end(), '\n'), 5);
  const auto roc = roc_curve_csv(roc_curve(s));
  EXPECT_EQ(roc.rfind("threshold,fpr,tpr\ninf,0,0\n", 0), 0u);
  const auto table = severity_table(severity_report(s, 0.7));
  EXPECT_NE(table.find("10-24"), std::string::npos);
  EXPECT_NE(table.find("Precision"), std::string::npos);
}
