// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stsc/error.hpp"

namespace stsc {

struct ScoredSubject {
  std::string speaker_id;
  double score = 0.0;
  int label = 0;
  int phq8 = 0;
};

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
  double threshold = 0.0;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

namespace detail {

/// Cumulative counts after admitting every score >= threshold, one entry per
/// distinct score in descending order.
struct SweepStep {
  double threshold;
  std::int64_t tp;
  std::int64_t fp;
  std::int64_t pos_here; // positives whose score equals this threshold
};

inline std::vector<SweepStep> sweep(const std::vector<ScoredSubject> &scored, std::int64_t &n_pos,
                                    std::int64_t &n_neg) {
  n_pos = 0;
  n_neg = 0;
  for (const auto &s : scored) {
    if (!std::isfinite(s.score))
      fail(Errc::NonFiniteValue, "score of " + s.speaker_id + " is not finite");
    (s.label == 1 ? n_pos : n_neg) += 1;
  }
  if (n_pos == 0 || n_neg == 0)
    fail(Errc::DegenerateLabels, "curves need at least one positive and one negative subject");
  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scored[a].score > scored[b].score; });
  std::vector<SweepStep> steps;
  std::int64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double thr = scored[order[i]].score;
    std::int64_t here = 0;
    for (; i < order.size() && scored[order[i]].score == thr; ++i) {
      if (scored[order[i]].label == 1) {
        ++tp;
        ++here;
      } else {
        ++fp;
      }
    }
    steps.push_back({thr, tp, fp, here});
  }
  return steps;
}

} // namespace detail

/// One point per distinct score, thresholds descending; a subject is called
/// positive iff score >= threshold.
inline std::vector<PrPoint> pr_curve(const std::vector<ScoredSubject> &scored) {
  std::int64_t n_pos = 0, n_neg = 0;
  std::vector<PrPoint> out;
  for (const auto &s : detail::sweep(scored, n_pos, n_neg))
    out.push_back({static_cast<double>(s.tp) / static_cast<double>(n_pos),
                   static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp), s.threshold});
  return out;
}

/// Average precision: each positive contributes the precision at its own
/// score, summed in descending-score order and divided by the positive count.
inline double pr_auc(const std::vector<ScoredSubject> &scored) {
  std::int64_t n_pos = 0, n_neg = 0;
  double sum = 0.0;
  for (const auto &s : detail::sweep(scored, n_pos, n_neg)) {
    const double precision = static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp);
    for (std::int64_t i = 0; i < s.pos_here; ++i)
      sum += precision;
  }
  return sum / static_cast<double>(n_pos);
}

/// (0, 0) at threshold +inf, then one point per distinct score.
inline std::vector<RocPoint> roc_curve(const std::vector<ScoredSubject> &scored) {
  std::int64_t n_pos = 0, n_neg = 0;
  const auto steps = detail::sweep(scored, n_pos, n_neg);
  std::vector<RocPoint> out;
  out.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  for (const auto &s : steps)
    out.push_back({static_cast<double>(s.fp) / static_cast<double>(n_neg),
                   static_cast<double>(s.tp) / static_cast<double>(n_pos), s.threshold});
  return out;
}

/// Trapezoid area under the ROC curve. The doubled area is an integer, so the
/// result equals the Mann-Whitney statistic (ties counted one half) exactly.
inline double roc_auc(const std::vector<ScoredSubject> &scored) {
  std::int64_t n_pos = 0, n_neg = 0;
  std::int64_t twice_area = 0, prev_tp = 0, prev_fp = 0;
  for (const auto &s : detail::sweep(scored, n_pos, n_neg)) {
    twice_area += (s.fp - prev_fp) * (s.tp + prev_tp);
    prev_tp = s.tp;
    prev_fp = s.fp;
  }
  return static_cast<double>(twice_area) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

struct OperatingPoint {
  double threshold = 0.0;
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Max-F1 point; ties go to the higher threshold.
inline OperatingPoint best_f1(const std::vector<PrPoint> &curve) {
  require(!curve.empty(), Errc::InvalidArgument, "best_f1 needs a non-empty curve");
  OperatingPoint best;
  bool have = false;
  for (const auto &p : curve) {
    const double f1 = f1_score(p.precision, p.recall);
    if (!have || f1 > best.f1 || (f1 == best.f1 && p.threshold > best.threshold)) {
      best = {p.threshold, f1, p.precision, p.recall};
      have = true;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Severity bands

inline constexpr int kHealthyUpper = 9;

struct SeverityBand {
  int lo;
  int hi;
  std::string name() const { return std::to_string(lo) + "-" + std::to_string(hi); }
};

inline const std::vector<SeverityBand> &severity_bands() {
  static const std::vector<SeverityBand> bands = {{10, 14}, {15, 19}, {20, 24}, {10, 24}};
  return bands;
}

struct SeverityRow {
  std::string band;
  int tp = 0, fp = 0, tn = 0, fn = 0;
  double f1 = 0.0, precision = 0.0, recall = 0.0;

  int total() const { return tp + fp + tn + fn; }
};

/// Healthy (0-9) subjects plus one band at a fixed threshold. Bands without
/// any subject are left out of the result.
inline std::vector<SeverityRow> severity_report(const std::vector<ScoredSubject> &scored,
                                                double threshold) {
  std::vector<SeverityRow> rows;
  for (const auto &band : severity_bands()) {
    SeverityRow row;
    row.band = band.name();
    int in_band = 0;
    for (const auto &s : scored) {
      const bool healthy = s.phq8 <= kHealthyUpper;
      const bool member = s.phq8 >= band.lo && s.phq8 <= band.hi;
      if (!healthy && !member)
        continue;
      in_band += member ? 1 : 0;
      const bool called = s.score >= threshold;
      if (member)
        (called ? row.tp : row.fn) += 1;
      else
        (called ? row.fp : row.tn) += 1;
    }
    if (in_band == 0)
      continue;
    row.precision = row.tp + row.fp > 0 ? static_cast<double>(row.tp) / (row.tp + row.fp) : 0.0;
    row.recall = static_cast<double>(row.tp) / (row.tp + row.fn);
    row.f1 = f1_score(row.precision, row.recall);
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Reports

struct MetricsReport {
  int fold_index = -1;
  int n_subjects = 0;
  double pr_auc = 0.0;
  double roc_auc = 0.0;
  OperatingPoint best;
  std::vector<SeverityRow> severity;

  nlohmann::json to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto &r : severity)
      rows.push_back({{"band", r.band}, {"f1", r.f1}, {"precision", r.precision},
                      {"recall", r.recall}, {"tp", r.tp}, {"fp", r.fp}, {"tn", r.tn},
                      {"fn", r.fn}});
    return {{"fold_index", fold_index},
            {"n_subjects", n_subjects},
            {"pr_auc", pr_auc},
            {"roc_auc", roc_auc},
            {"best_f1",
             {{"threshold", best.threshold},
              {"f1", best.f1},
              {"precision", best.precision},
              {"recall", best.recall}}},
            {"severity_rows", rows}};
  }
};

inline MetricsReport evaluate_scores(const std::vector<ScoredSubject> &scored, int fold_index = -1) {
  MetricsReport r;
  r.fold_index = fold_index;
  r.n_subjects = static_cast<int>(scored.size());
  r.pr_auc = pr_auc(scored);
  r.roc_auc = roc_auc(scored);
  r.best = best_f1(pr_curve(scored));
  r.severity = severity_report(scored, r.best.threshold);
  return r;
}

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
};

/// Mean and standard error (n-1 sample deviation over sqrt(k)).
inline MeanStderr aggregate_folds(const std::vector<double> &values) {
  require(values.size() >= 2, Errc::InvalidArgument, "aggregation needs at least two folds");
  const double k = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / k;
  double ss = 0.0;
  for (double v : values)
    ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (k - 1.0)) / std::sqrt(k)};
}

/// "79.65 ± 2.02" style, values scaled by `scale`.
inline std::string format_mean_stderr(const MeanStderr &m, double scale = 100.0) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", m.mean * scale, m.stderr_ * scale);
  return buf;
}

/// Per-metric aggregation of fold reports.
inline nlohmann::json aggregate_reports(const std::vector<MetricsReport> &reports) {
  auto agg = [&](auto get) {
    std::vector<double> v;
    for (const auto &r : reports)
      v.push_back(get(r));
    const auto m = aggregate_folds(v);
    return nlohmann::json{{"mean", m.mean}, {"stderr", m.stderr_}};
  };
  return {{"folds", reports.size()},
          {"pr_auc", agg([](const MetricsReport &r) { return r.pr_auc; })},
          {"roc_auc", agg([](const MetricsReport &r) { return r.roc_auc; })},
          {"f1", agg([](const MetricsReport &r) { return r.best.f1; })},
          {"precision", agg([](const MetricsReport &r) { return r.best.precision; })},
          {"recall", agg([](const MetricsReport &r) { return r.best.recall; })}};
}

/// Severity table: band | F1 | Precision | Recall, percentages.
inline std::string severity_table(const std::vector<SeverityRow> &rows) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof line, "%-8s %8s %10s %8s\n", "PHQ-8", "F1", "Precision", "Recall");
  os << line;
  for (const auto &r : rows) {
    std::snprintf(line, sizeof line, "%-8s %8.2f %10.2f %8.2f\n", r.band.c_str(), r.f1 * 100,
                  r.precision * 100, r.recall * 100);
    os << line;
  }
  return os.str();
}

inline std::string pr_curve_csv(const std::vector<PrPoint> &curve) {
  std::ostringstream os;
  os << "threshold,recall,precision\n";
  char line[96];
  for (const auto &p : curve) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", p.threshold, p.recall, p.precision);
    os << line;
  }
  return os.str();
}

inline std::string roc_curve_csv(const std::vector<RocPoint> &curve) {
  std::ostringstream os;
  os << "threshold,fpr,tpr\n";
  char line[96];
  for (const auto &p : curve) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", p.threshold, p.fpr, p.tpr);
    os << line;
  }
  return os.str();
}

} // namespace stsc
