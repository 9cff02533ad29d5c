#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "raeid/common.hpp"
#include "raeid/igtools.hpp"
#include "raeid/rng.hpp"

using namespace raeid;

namespace {

Eigen::MatrixXd blobs(int per, int d, double center, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  Eigen::MatrixXd x(2 * per, d);
  for (int i = 0; i < 2 * per; ++i) {
    for (int j = 0; j < d; ++j) x(i, j) = (i < per ? center : -center) + standard_normal(rng);
  }
  return x;
}

std::vector<int> blob_labels(int per) {
  std::vector<int> l(2 * per, 0);
  std::fill(l.begin() + per, l.end(), 1);
  return l;
}

Partition random_partition(Rng& rng, std::size_t n, int k) {
  Partition p;
  for (std::size_t i = 0; i < n; ++i) p.cluster.push_back(static_cast<int>(uniform_index(rng, k + 1)) - 1);
  return p;
}

}  // namespace

TEST_CASE("entropy hand values") {
  CHECK(entropy(std::vector<int>{3, 3, 3}) == 0.0);
  CHECK(entropy(std::vector<int>{0, 1}) == doctest::Approx(1.0));
  const std::vector<std::string> abc = {"A", "A", "B", "B", "B", "B", "C", "C"};
  CHECK(entropy(abc) == doctest::Approx(1.5).epsilon(1e-14));
  CHECK_THROWS_AS(entropy(std::vector<int>{}), DataError);
}

TEST_CASE("clustered entropy and information gain") {
  const std::vector<int> tags = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  Partition pure{{0, 0, 0, 0, 0, 1, 1, 1, 1, 1}};
  Partition one{std::vector<int>(10, 0)};
  CHECK(clustered_entropy(tags, pure) == 0.0);
  CHECK(clustered_entropy(tags, one) == doctest::Approx(entropy(tags)));
  CHECK(information_gain(tags, pure) == doctest::Approx(1.0));
  CHECK(information_gain(tags, one) == doctest::Approx(0.0));
  const std::vector<int> halves = {0, 1, 0, 1, 0, 1, 0, 1};
  CHECK(clustered_entropy(halves, Partition{{0, 0, 0, 0, 1, 1, 1, 1}}) == doctest::Approx(1.0));

  std::vector<int> singles(10);
  for (int i = 0; i < 10; ++i) singles[i] = i;
  CHECK(clustered_entropy(tags, Partition{singles}) == 0.0);
  CHECK_THROWS_AS(clustered_entropy(tags, Partition{{0, 1}}), DataError);

  // outliers: exclude mode drops them from both terms
  Partition with_out{{0, 0, 0, 0, 0, kOutlier, kOutlier, 1, 1, 1}};
  const std::vector<int> kept = {0, 0, 0, 0, 0, 1, 1, 1};
  CHECK(information_gain(tags, with_out, OutlierMode::Exclude) ==
        doctest::Approx(entropy(kept)));
  CHECK(information_gain(tags, with_out, OutlierMode::Include) ==
        doctest::Approx(1.0));
}

TEST_CASE("information gain bounds over random partitions") {
  Rng rng = make_rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 40);
    std::vector<int> tags(n);
    for (auto& t : tags) t = static_cast<int>(uniform_index(rng, 5));
    const auto p = random_partition(rng, n, 4);
    const double h = entropy(tags);
    for (auto mode : {OutlierMode::Include, OutlierMode::Exclude}) {
      if (mode == OutlierMode::Exclude &&
          std::all_of(p.cluster.begin(), p.cluster.end(), [](int c) { return c == kOutlier; })) {
        continue;
      }
      const double ig = information_gain(tags, p, mode);
      CHECK(ig >= 0.0);
      if (mode == OutlierMode::Include) {
        CHECK(ig <= h + 1e-12);
        CHECK(clustered_entropy(tags, p) <= h + 1e-12);
      }
    }
  }
}

TEST_CASE("variance reduction") {
  const std::vector<double> c(6, 4.0);
  const auto z = variance_reduction(c, Partition{{0, 0, 1, 1, 2, 2}});
  CHECK(z.base == 0.0);
  CHECK(z.clustered == 0.0);
  CHECK(z.reduction == 0.0);

  const auto h = variance_reduction(std::vector<double>{0, 0, 10, 10}, Partition{{0, 0, 1, 1}});
  CHECK(h.base == doctest::Approx(25.0));
  CHECK(h.clustered == doctest::Approx(0.0));
  CHECK(h.reduction == doctest::Approx(25.0));

  Rng rng = make_rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 30);
    std::vector<double> v(n);
    for (double& x : v) x = standard_normal(rng) * 5.0;
    const auto r = variance_reduction(v, random_partition(rng, n, 3));
    CHECK(r.reduction >= -1e-9);
    CHECK(r.reduction == doctest::Approx(r.base - r.clustered));
  }
  CHECK_THROWS_AS(variance_reduction(std::vector<double>{}, Partition{}), DataError);
}

TEST_CASE("t-SNE on separated blobs") {
  const auto x = blobs(100, 16, 10.0, 3);
  TsneConfig cfg;
  cfg.seed = 4;
  const auto r = project_2d(x, cfg);
  CHECK(r.coords.rows() == 200);
  CHECK(r.coords.cols() == 2);
  CHECK(silhouette(r.coords, blob_labels(100)) >= 0.5);
  CHECK(std::abs(r.coords.col(0).mean()) <= 1e-8);
  CHECK(std::abs(r.coords.col(1).mean()) <= 1e-8);
  REQUIRE(r.kl.size() == 1000);
  for (std::size_t i = r.kl.size() - 50; i < r.kl.size(); ++i) CHECK(r.kl[i] <= r.kl[i - 1] + 1e-6);

  const auto again = project_2d(x, cfg);
  CHECK(again.coords == r.coords);
}

TEST_CASE("t-SNE keeps duplicates together") {
  Eigen::MatrixXd x = blobs(50, 8, 3.0, 5);
  x.row(7) = x.row(60);
  TsneConfig cfg;
  cfg.perplexity = 10;
  cfg.iterations = 500;
  cfg.seed = 6;
  const auto r = project_2d(x, cfg);
  const double diameter = (r.coords.colwise().maxCoeff() - r.coords.colwise().minCoeff()).norm();
  CHECK((r.coords.row(7) - r.coords.row(60)).norm() < 0.01 * diameter);
}

TEST_CASE("t-SNE rejects an infeasible perplexity") {
  TsneConfig cfg;
  cfg.perplexity = 30;
  CHECK_THROWS_AS(project_2d(Eigen::MatrixXd::Random(90, 3), cfg), ConfigError);
}

TEST_CASE("density clustering") {
  SUBCASE("too few points") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(9, 2);
    x(3, 0) = 1e-3;
    const auto p = density_cluster(x);
    CHECK(p.cluster_count() == 0);
    CHECK(p.outlier_fraction() == 1.0);
  }
  SUBCASE("two blobs") {
    const auto p = density_cluster(blobs(100, 2, 10.0, 7));
    CHECK(p.cluster_count() == 2);
    CHECK(p.outlier_fraction() == 0.0);
    for (int i = 1; i < 100; ++i) CHECK(p.cluster[i] == p.cluster[0]);
    CHECK(p.cluster[100] != p.cluster[0]);
  }
  SUBCASE("sparse scatter with a tiny radius") {
    Rng rng = make_rng(8);
    Eigen::MatrixXd x(100, 2);
    for (int i = 0; i < 100; ++i) x.row(i) << uniform01(rng) * 100, uniform01(rng) * 100;
    ClusterConfig cfg;
    cfg.radius = 1e-6;
    const auto p = density_cluster(x, cfg);
    CHECK(p.outlier_fraction() == 1.0);
  }
}

TEST_CASE("auto radius is the nearest-rank quantile of k-NN distances") {
  Eigen::MatrixXd x(12, 2);
  for (int i = 0; i < 12; ++i) x.row(i) << i * i, 0;
  std::vector<double> kth;
  for (int i = 0; i < 12; ++i) {
    std::vector<double> d;
    for (int j = 0; j < 12; ++j) {
      if (j != i) d.push_back(std::abs(i * i - j * j));
    }
    std::sort(d.begin(), d.end());
    kth.push_back(d[9]);
  }
  std::sort(kth.begin(), kth.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.9 * 12)) - 1;
  CHECK(auto_radius(x) == doctest::Approx(kth[rank]));
}

TEST_CASE("ig pipeline on constructed data") {
  EmbeddingSet set;
  set.rows = blobs(100, 16, 10.0, 9);
  for (int i = 0; i < 200; ++i) {
    set.tags.push_back(i < 100 ? "north" : "south");
    set.targets.push_back(i < 100 ? 1.0 : -1.0);
  }
  IgPipelineConfig cfg;
  cfg.tsne.seed = 10;
  const auto cat = ig_report(set, IgTask::Categorical, cfg);
  CHECK(std::abs(cat.information_gain - cat.base_entropy) <= 0.05);
  CHECK(cat.n == 200);
  const auto mov = ig_report(set, IgTask::Movement, cfg);
  CHECK(mov.variance_reduction == doctest::Approx(mov.base_variance).epsilon(0.05));

  Rng rng = make_rng(11);
  for (std::size_t i = set.tags.size(); i > 1; --i) std::swap(set.tags[i - 1], set.tags[uniform_index(rng, i)]);
  CHECK(ig_report(set, IgTask::Categorical, cfg).information_gain <= 0.1);

  EmbeddingSet bare;
  bare.rows = set.rows;
  CHECK_THROWS_AS(ig_report(bare, IgTask::Categorical, cfg), DataError);
  CHECK_THROWS_AS(ig_report(bare, IgTask::Movement, cfg), DataError);

  const auto json = ig_report_json(cat);
  CHECK(json.find("\"information_gain_bits\"") != std::string::npos);
}

TEST_CASE("embedding files round trip") {
  Rng rng = make_rng(12);
  EmbeddingSet set;
  set.rows.resize(30, 5);
  for (int i = 0; i < 30; ++i) {
    for (int j = 0; j < 5; ++j) set.rows(i, j) = static_cast<float>(standard_normal(rng));
    set.tags.push_back("t" + std::to_string(i % 4));
    set.targets.push_back(0.25 * i);
  }
  const auto dir = std::filesystem::temp_directory_path();
  const auto bin = dir / "raeid_emb_test.bin";
  write_embeddings_binary(bin, set);
  const auto back = read_embeddings(bin);
  CHECK(back.rows == set.rows);
  CHECK(back.tags == set.tags);
  CHECK(back.targets == set.targets);

  const auto csv = dir / "raeid_emb_test.csv";
  std::ofstream(csv) << embeddings_csv(set);
  const auto c = read_embeddings(csv);
  CHECK(c.tags == set.tags);
  CHECK(c.targets == set.targets);
  CHECK((c.rows - set.rows).cwiseAbs().maxCoeff() <= 1e-6);

  std::ofstream(bin, std::ios::binary) << "NOTEMBED";
  CHECK_THROWS_AS(read_embeddings(bin), DataError);
  std::filesystem::remove(bin);
  std::filesystem::remove(csv);

  EmbeddingSet bad = set;
  bad.tags.pop_back();
  CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("tag encoding is first-seen order") {
  const std::vector<std::string> t = {"b", "a", "b", "c"};
  CHECK(encode_tags(t) == std::vector<int>{0, 1, 0, 2});
}
