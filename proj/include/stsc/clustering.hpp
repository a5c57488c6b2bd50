// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "stsc/corpus.hpp"
#include "stsc/error.hpp"
#include "stsc/model.hpp"
#include "stsc/random.hpp"

namespace stsc {

struct FeatureSet {
  Eigen::MatrixXd vectors; // M x D
  std::vector<int> labels; // label of the speaker each row came from
  std::vector<std::string> speaker_ids;
  std::vector<FragmentOrigin> origins;

  std::size_t size() const { return labels.size(); }

  /// `speaker_id,label,f0..f{D-1}`
  std::string to_csv() const {
    std::ostringstream os;
    os << "speaker_id,label";
    for (Eigen::Index d = 0; d < vectors.cols(); ++d)
      os << ",f" << d;
    os << '\n';
    char buf[32];
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
      os << speaker_ids[static_cast<std::size_t>(i)] << ',' << labels[static_cast<std::size_t>(i)];
      for (Eigen::Index d = 0; d < vectors.cols(); ++d) {
        std::snprintf(buf, sizeof buf, ",%.9g", vectors(i, d));
        os << buf;
      }
      os << '\n';
    }
    return os.str();
  }
};

/// `m` fragments, half from depressed and half from healthy speakers, drawn
/// without replacement from each class's pool and encoded in inference mode.
template <typename T>
FeatureSet extract_features(const Model<T> &model, const std::vector<SpeakerRecord> &corpus,
                            int m, Rng &rng) {
  require(m >= 2 && m % 2 == 0, Errc::InvalidArgument, "fragment count must be even and >= 2");
  struct Pick {
    std::uint32_t speaker;
    std::uint32_t fragment;
  };
  std::vector<Pick> pools[2];
  for (std::size_t s = 0; s < corpus.size(); ++s)
    for (std::size_t f = 0; f < corpus[s].fragments.size(); ++f)
      pools[corpus[s].label == 1 ? 1 : 0].push_back(
          {static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(f)});
  const std::size_t half = static_cast<std::size_t>(m / 2);
  for (int cls : {1, 0})
    if (pools[cls].size() < half)
      fail(Errc::InsufficientFragments,
           std::string(cls ? "depressed" : "healthy") + " speakers have " +
               std::to_string(pools[cls].size()) + " fragments, " + std::to_string(half) +
               " requested");

  FeatureSet fs;
  fs.vectors.resize(m, model.config.feature_dim);
  Eigen::Index row = 0;
  for (int cls : {1, 0}) {
    auto &pool = pools[cls];
    for (std::size_t i = 0; i < half; ++i) { // partial Fisher-Yates
      std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
      const SpeakerRecord &sp = corpus[pool[i].speaker];
      const MelFragment frag = sp.fragment(sp.fragments[pool[i].fragment]);
      const auto v = encode_fragment(model, frag);
      for (std::size_t d = 0; d < v.size(); ++d)
        fs.vectors(row, static_cast<Eigen::Index>(d)) = v[d];
      fs.labels.push_back(cls);
      fs.speaker_ids.push_back(sp.speaker_id);
      fs.origins.push_back(frag.origin);
      ++row;
    }
  }
  return fs;
}

inline FeatureSet extract_features(const Checkpoint &ck, const std::vector<SpeakerRecord> &corpus,
                                   int m, Rng &rng) {
  return extract_features(ck.model, corpus, m, rng);
}

// ---------------------------------------------------------------------------
// k-means

struct KMeansOptions {
  int max_iterations = 300;
  double tolerance = 1e-6; // on the largest centroid shift
};

struct KMeansResult {
  std::vector<int> assignments;
  Eigen::MatrixXd centroids; // k x D
  double inertia = 0.0;
  int best_restart = 0;
  int iterations = 0;
  std::vector<double> inertia_trace; // after every assignment step of the best run
};

namespace detail {

inline double sq_dist(const Eigen::MatrixXd &x, Eigen::Index i, const Eigen::MatrixXd &c,
                      Eigen::Index j) {
  return (x.row(i) - c.row(j)).squaredNorm();
}

/// Nearest centroid per row (ties to the lower index); returns the inertia.
inline double assign_points(const Eigen::MatrixXd &x, const Eigen::MatrixXd &c,
                            std::vector<int> &assign, std::vector<double> &dist) {
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    int best = 0;
    double bd = sq_dist(x, i, c, 0);
    for (Eigen::Index j = 1; j < c.rows(); ++j) {
      const double d = sq_dist(x, i, c, j);
      if (d < bd) {
        bd = d;
        best = static_cast<int>(j);
      }
    }
    assign[static_cast<std::size_t>(i)] = best;
    dist[static_cast<std::size_t>(i)] = bd;
    inertia += bd;
  }
  return inertia;
}

inline Eigen::MatrixXd kmeanspp_init(const Eigen::MatrixXd &x, int k, Rng &rng) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd c(k, x.cols());
  c.row(0) = x.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n))));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    d2[static_cast<std::size_t>(i)] = sq_dist(x, i, c, 0);
  for (int j = 1; j < k; ++j) {
    double total = 0.0;
    for (double v : d2)
      total += v;
    Eigen::Index pick = n - 1;
    const double target = uniform01(rng) * total;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      acc += d2[static_cast<std::size_t>(i)];
      if (acc > target && d2[static_cast<std::size_t>(i)] > 0.0) {
        pick = i;
        break;
      }
    }
    c.row(j) = x.row(pick);
    for (Eigen::Index i = 0; i < n; ++i)
      d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], sq_dist(x, i, c, j));
  }
  return c;
}

} // namespace detail

/// Best-of-`restarts` Lloyd's algorithm with k-means++ seeding. Restart r
/// draws from derive_seed(seed, r); equal inertia keeps the earlier restart.
inline KMeansResult kmeans(const Eigen::MatrixXd &x, int k = 3, int restarts = 20,
                           std::uint64_t seed = 0, const KMeansOptions &opts = {}) {
  require(k >= 1, Errc::InvalidArgument, "k must be >= 1");
  require(restarts >= 1, Errc::InvalidArgument, "restarts must be >= 1");
  require(x.allFinite(), Errc::NonFiniteValue, "features contain non-finite values");
  const Eigen::Index n = x.rows();
  if (n < k)
    fail(Errc::DegenerateData, std::to_string(n) + " points cannot form " + std::to_string(k) +
                                   " clusters");
  if (k > 1) {
    bool distinct = false;
    for (Eigen::Index i = 1; i < n && !distinct; ++i)
      distinct = x.row(i) != x.row(0);
    if (!distinct)
      fail(Errc::DegenerateData, "all points are identical");
  }

  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  std::vector<int> assign(static_cast<std::size_t>(n));
  std::vector<double> dist(static_cast<std::size_t>(n));
  for (int r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    Eigen::MatrixXd c = detail::kmeanspp_init(x, k, rng);
    std::vector<double> trace;
    double inertia = detail::assign_points(x, c, assign, dist);
    trace.push_back(inertia);
    int it = 0;
    for (; it < opts.max_iterations; ++it) {
      Eigen::MatrixXd next = Eigen::MatrixXd::Zero(k, x.cols());
      std::vector<Eigen::Index> count(static_cast<std::size_t>(k), 0);
      for (Eigen::Index i = 0; i < n; ++i) {
        next.row(assign[static_cast<std::size_t>(i)]) += x.row(i);
        ++count[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
      }
      std::vector<bool> taken(static_cast<std::size_t>(n), false);
      for (int j = 0; j < k; ++j) {
        if (count[static_cast<std::size_t>(j)] > 0) {
          next.row(j) /= static_cast<double>(count[static_cast<std::size_t>(j)]);
          continue;
        }
        // empty cluster: reseed at the point farthest from its centroid
        Eigen::Index far = -1;
        for (Eigen::Index i = 0; i < n; ++i)
          if (!taken[static_cast<std::size_t>(i)] &&
              (far < 0 || dist[static_cast<std::size_t>(i)] > dist[static_cast<std::size_t>(far)]))
            far = i;
        taken[static_cast<std::size_t>(far)] = true;
        next.row(j) = x.row(far);
      }
      const double shift = (next - c).rowwise().norm().maxCoeff();
      c = std::move(next);
      inertia = detail::assign_points(x, c, assign, dist);
      trace.push_back(inertia);
      if (shift < opts.tolerance) {
        ++it;
        break;
      }
    }
    if (inertia < best.inertia) {
      best.assignments = assign;
      best.centroids = c;
      best.inertia = inertia;
      best.best_restart = r;
      best.iterations = it;
      best.inertia_trace = std::move(trace);
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Composition

struct ClusterShare {
  int cluster = 0; // index into the k-means centroids
  std::string name; // "A", "B", ... in report order
  int size = 0;
  int depressed = 0;
  int healthy = 0;
  int depressed_hundredths = 0; // percent x 100
  int healthy_hundredths = 0;

  double depressed_pct() const { return depressed_hundredths / 100.0; }
  double healthy_pct() const { return healthy_hundredths / 100.0; }
};

struct ClusterReport {
  std::vector<ClusterShare> clusters; // descending depressed share
  double inertia = 0.0;
  std::uint64_t seed = 0;
  int restarts = 0;

  nlohmann::json to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto &c : clusters)
      rows.push_back({{"name", c.name},
                      {"cluster", c.cluster},
                      {"size", c.size},
                      {"depressed", c.depressed},
                      {"healthy", c.healthy},
                      {"depressed_pct", c.depressed_pct()},
                      {"healthy_pct", c.healthy_pct()}});
    return {{"clusters", rows}, {"inertia", inertia}, {"seed", seed}, {"restarts", restarts}};
  }

  /// "Cluster A: Depressed 64.13% and Healthy 35.87% (n=10000)" per line.
  std::string to_text() const {
    std::ostringstream os;
    char line[128];
    for (const auto &c : clusters) {
      std::snprintf(line, sizeof line, "Cluster %s: Depressed %.2f%% and Healthy %.2f%% (n=%d)\n",
                    c.name.c_str(), c.depressed_pct(), c.healthy_pct(), c.size);
      os << line;
    }
    return os.str();
  }
};

/// Per-cluster label shares in hundredths of a percent. Each share is rounded
/// on its own; the larger one absorbs whatever residue keeps the pair at 100%.
inline ClusterReport cluster_composition(const std::vector<int> &assignments,
                                         const std::vector<int> &labels) {
  require(assignments.size() == labels.size(), Errc::ShapeMismatch,
          "assignments and labels differ in length");
  int k = 0;
  for (int a : assignments) {
    require(a >= 0, Errc::InvalidArgument, "negative cluster index");
    k = std::max(k, a + 1);
  }
  std::vector<ClusterShare> shares(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j)
    shares[static_cast<std::size_t>(j)].cluster = j;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    auto &s = shares[static_cast<std::size_t>(assignments[i])];
    ++s.size;
    (labels[i] == 1 ? s.depressed : s.healthy) += 1;
  }
  ClusterReport rep;
  for (auto &s : shares) {
    if (s.size == 0)
      continue;
    s.depressed_hundredths = static_cast<int>(std::lround(10000.0 * s.depressed / s.size));
    s.healthy_hundredths = static_cast<int>(std::lround(10000.0 * s.healthy / s.size));
    const int residue = 10000 - s.depressed_hundredths - s.healthy_hundredths;
    (s.depressed >= s.healthy ? s.depressed_hundredths : s.healthy_hundredths) += residue;
    rep.clusters.push_back(s);
  }
  std::stable_sort(rep.clusters.begin(), rep.clusters.end(),
                   [](const ClusterShare &a, const ClusterShare &b) {
                     // exact comparison of depressed/size fractions
                     return static_cast<std::int64_t>(a.depressed) * b.size >
                            static_cast<std::int64_t>(b.depressed) * a.size;
                   });
  for (std::size_t i = 0; i < rep.clusters.size(); ++i)
    rep.clusters[i].name = i < 26 ? std::string(1, static_cast<char>('A' + i)) : std::to_string(i);
  return rep;
}

inline ClusterReport cluster_composition(const KMeansResult &km, const std::vector<int> &labels,
                                         std::uint64_t seed, int restarts) {
  ClusterReport rep = cluster_composition(km.assignments, labels);
  rep.inertia = km.inertia;
  rep.seed = seed;
  rep.restarts = restarts;
  return rep;
}

} // namespace stsc
