// SPDX-License-Identifier: Apache-2.0
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "stsc/clustering.hpp"
#include "support/fixtures.hpp"

using namespace stsc;
using fixtures::error_code;

namespace {

double choose2(double n) { return n * (n - 1) / 2; }

// Adjusted Rand index from the contingency table.
double adjusted_rand(const std::vector<int> &a, const std::vector<int> &b) {
  std::map<std::pair<int, int>, int> joint;
  std::map<int, int> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++joint[{a[i], b[i]}];
    ++ra[a[i]];
    ++rb[b[i]];
  }
  double idx = 0, sa = 0, sb = 0;
  for (const auto &[_, n] : joint)
    idx += choose2(n);
  for (const auto &[_, n] : ra)
    sa += choose2(n);
  for (const auto &[_, n] : rb)
    sb += choose2(n);
  const double expected = sa * sb / choose2(static_cast<double>(a.size()));
  const double max = (sa + sb) / 2;
  return (idx - expected) / (max - expected);
}

struct Blobs {
  Eigen::MatrixXd x;
  std::vector<int> truth;
};

Blobs blobs(int per, int dim, double spread, std::uint64_t seed) {
  Rng rng(seed);
  Blobs b;
  b.x.resize(3 * per, dim);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < per; ++i) {
      for (int d = 0; d < dim; ++d)
        b.x(c * per + i, d) = (d == c ? 20.0 : 0.0) + spread * standard_normal(rng);
      b.truth.push_back(c);
    }
  return b;
}

} // namespace

TEST(KMeans, RecoversSeparatedBlobs) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto b = blobs(100, 5, 1.0, seed);
    const auto km = kmeans(b.x, 3, 20, seed);
    EXPECT_EQ(adjusted_rand(km.assignments, b.truth), 1.0);
    EXPECT_EQ(km.centroids.rows(), 3);
    EXPECT_EQ(km.assignments.size(), 300u);
  }
}

TEST(KMeans, OracleSanity) {
  EXPECT_EQ(adjusted_rand({0, 0, 1, 1}, {1, 1, 0, 0}), 1.0);
  EXPECT_LT(adjusted_rand({0, 1, 0, 1}, {0, 0, 1, 1}), 0.0);
}

TEST(KMeans, SingleClusterIsTheMean) {
  Rng rng(4);
  Eigen::MatrixXd x(50, 4);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index d = 0; d < x.cols(); ++d)
      x(i, d) = uniform(rng, -3, 5);
  const auto km = kmeans(x, 1, 3, 0);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  EXPECT_LT((km.centroids.row(0) - mean).norm(), 1e-12);
  double total_var = 0;
  for (Eigen::Index d = 0; d < x.cols(); ++d)
    total_var += (x.col(d).array() - mean(d)).square().mean();
  EXPECT_NEAR(km.inertia, total_var * 50, 1e-9);
  for (int a : km.assignments)
    EXPECT_EQ(a, 0);
}

TEST(KMeans, InertiaNeverIncreasesWithinARun) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto b = blobs(60, 4, 8.0, seed); // overlapping, several Lloyd steps
    const auto km = kmeans(b.x, 3, 5, seed);
    ASSERT_GE(km.inertia_trace.size(), 2u);
    for (std::size_t i = 1; i < km.inertia_trace.size(); ++i)
      EXPECT_LE(km.inertia_trace[i], km.inertia_trace[i - 1] * (1 + 1e-12));
    EXPECT_EQ(km.inertia_trace.back(), km.inertia);
  }
}

TEST(KMeans, BestRestartHasLowestInertia) {
  const auto b = blobs(40, 3, 9.0, 5);
  const auto all = kmeans(b.x, 3, 20, 7);
  const auto one = kmeans(b.x, 3, 1, 7);
  EXPECT_LE(all.inertia, one.inertia);
  EXPECT_EQ(kmeans(b.x, 3, 20, 7).assignments, all.assignments);
}

TEST(KMeans, TranslationInvariant) {
  const auto b = blobs(50, 4, 4.0, 8);
  const auto a = kmeans(b.x, 3, 10, 3);
  Eigen::MatrixXd shifted = b.x;
  shifted.rowwise() += Eigen::RowVectorXd::Constant(4, 1000.0);
  const auto s = kmeans(shifted, 3, 10, 3);
  EXPECT_EQ(adjusted_rand(a.assignments, s.assignments), 1.0);
}

TEST(KMeans, Errors) {
  Eigen::MatrixXd same = Eigen::MatrixXd::Constant(10, 3, 2.0);
  EXPECT_EQ(error_code([&] { (void)kmeans(same, 3); }), Errc::DegenerateData);
  EXPECT_NO_THROW((void)kmeans(same, 1, 1));
  Eigen::MatrixXd two = Eigen::MatrixXd::Random(2, 3);
  EXPECT_EQ(error_code([&] { (void)kmeans(two, 3); }), Errc::DegenerateData);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(5, 2);
  bad(1, 1) = std::numeric_limits<double>::infinity();
  EXPECT_EQ(error_code([&] { (void)kmeans(bad, 2); }), Errc::NonFiniteValue);
  EXPECT_EQ(error_code([&] { (void)kmeans(two, 0); }), Errc::InvalidArgument);
}

TEST(KMeans, EmptyClusterIsReseeded) {
  // four distinct points, one far away; k = 4 forces every point to its own cluster
  Eigen::MatrixXd x(4, 1);
  x << 0, 0.001, 0.002, 100;
  const auto km = kmeans(x, 4, 3, 1);
  std::vector<int> sorted = km.assignments;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, (std::vector<int>{0, 1, 2, 3}));
  EXPECT_NEAR(km.inertia, 0.0, 1e-18);
}

TEST(Composition, PercentFormatAndOrdering) {
  std::vector<int> assign, labels;
  auto add = [&](int cluster, int dep, int healthy) {
    for (int i = 0; i < dep; ++i) {
      assign.push_back(cluster);
      labels.push_back(1);
    }
    for (int i = 0; i < healthy; ++i) {
      assign.push_back(cluster);
      labels.push_back(0);
    }
  };
  add(0, 4365, 5635);
  add(1, 6413, 3587);
  add(2, 7, 0);
  const auto rep = cluster_composition(assign, labels);
  ASSERT_EQ(rep.clusters.size(), 3u);
  EXPECT_EQ(rep.clusters[0].cluster, 2);
  EXPECT_EQ(rep.clusters[0].depressed_hundredths, 10000);
  EXPECT_EQ(rep.clusters[0].healthy_hundredths, 0);
  EXPECT_EQ(rep.clusters[1].cluster, 1);
  EXPECT_EQ(rep.clusters[1].depressed_pct(), 64.13);
  EXPECT_EQ(rep.clusters[1].healthy_pct(), 35.87);
  EXPECT_EQ(rep.clusters[2].depressed_pct(), 43.65);
  const auto text = rep.to_text();
  EXPECT_NE(text.find("Cluster B: Depressed 64.13% and Healthy 35.87% (n=10000)"), std::string::npos);
  EXPECT_EQ(rep.to_json().at("clusters").size(), 3u);
}

TEST(Composition, SharesAlwaysSumToOneHundred) {
  Rng rng(21);
  for (int it = 0; it < 500; ++it) {
    const int n = 1 + static_cast<int>(uniform_index(rng, 400));
    std::vector<int> assign(n), labels(n);
    for (int i = 0; i < n; ++i) {
      assign[i] = static_cast<int>(uniform_index(rng, 3));
      labels[i] = uniform01(rng) < 0.37 ? 1 : 0;
    }
    const auto rep = cluster_composition(assign, labels);
    int total = 0;
    for (const auto &c : rep.clusters) {
      EXPECT_EQ(c.depressed_hundredths + c.healthy_hundredths, 10000);
      EXPECT_LE(std::abs(c.depressed_hundredths - 10000.0 * c.depressed / c.size), 1.0);
      total += c.size;
    }
    EXPECT_EQ(total, n);
    for (std::size_t i = 1; i < rep.clusters.size(); ++i)
      EXPECT_GE(static_cast<double>(rep.clusters[i - 1].depressed) / rep.clusters[i - 1].size,
                static_cast<double>(rep.clusters[i].depressed) / rep.clusters[i].size);
  }
  // 1/3 each way: 33.33 + 66.67
  const auto third = cluster_composition({0, 0, 0}, {1, 0, 0});
  EXPECT_EQ(third.clusters[0].depressed_hundredths, 3333);
  EXPECT_EQ(third.clusters[0].healthy_hundredths, 6667);
  EXPECT_EQ(error_code([] { (void)cluster_composition({0, 1}, {1}); }), Errc::ShapeMismatch);
}

TEST(Features, BalancedDeterministicExtraction) {
  const auto corpus = fixtures::marked_cohort(8, 3, 24, 2);
  ModelConfig cfg;
  cfg.n_fragments = 2;
  cfg.kernel_size = 3;
  cfg.n_filters = 6;
  cfg.rnn_hidden = 4;
  cfg.feature_dim = 5;
  cfg.head_hidden = 4;
  Checkpoint ck;
  ck.model = init_model<float>(cfg, 3);
  Rng r1(9), r2(9);
  const auto a = extract_features(ck, corpus, 20, r1);
  const auto b = extract_features(ck, corpus, 20, r2);
  ASSERT_EQ(a.size(), 20u);
  EXPECT_EQ(a.vectors.cols(), 5);
  EXPECT_EQ(std::count(a.labels.begin(), a.labels.end(), 1), 10);
  EXPECT_EQ(a.vectors, b.vectors);
  EXPECT_EQ(a.speaker_ids, b.speaker_ids);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto &sp = *std::find_if(corpus.begin(), corpus.end(),
                                   [&](const SpeakerRecord &s) { return s.speaker_id == a.speaker_ids[i]; });
    EXPECT_EQ(sp.label, a.labels[i]);
    const auto v = encode_fragment(ck.model, sp.fragment(FragmentRef{0, a.origins[i].start_frame}));
    for (int d = 0; d < 5; ++d)
      EXPECT_EQ(a.vectors(static_cast<Eigen::Index>(i), d), static_cast<double>(v[d]));
  }
  // no fragment drawn twice
  std::set<std::pair<std::string, int>> seen;
  for (std::size_t i = 0; i < a.size(); ++i)
    seen.insert({a.speaker_ids[i], a.origins[i].start_frame});
  EXPECT_EQ(seen.size(), a.size());

  Rng r3(1);
  const auto two = extract_features(ck, corpus, 2, r3);
  EXPECT_EQ(two.labels, (std::vector<int>{1, 0}));
  const auto csv = two.to_csv();
  EXPECT_EQ(csv.rfind("speaker_id,label,f0,f1,f2,f3,f4\n", 0), 0u);

  Rng r4(1);
  EXPECT_EQ(error_code([&] { (void)extract_features(ck, corpus, 3, r4); }), Errc::InvalidArgument);
  // 3 depressed speakers x 9 fragments = 27
  EXPECT_EQ(error_code([&] { (void)extract_features(ck, corpus, 56, r4); }),
            Errc::InsufficientFragments);
  EXPECT_NO_THROW((void)extract_features(ck, corpus, 54, r4));
}
