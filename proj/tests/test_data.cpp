#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "tcl/data.hpp"

namespace fs = std::filesystem;
using tcl::Dataset;
using tcl::ViewBatch;
using tcl::ViewConfig;

namespace {

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "tcl_lab_test_data";
  fs::create_directories(dir);
  return dir / name;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

bool contains(const std::vector<std::size_t>& v, std::size_t x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

// Every pair is either positive or negative and membership is symmetric.
void expect_consistent(const tcl::PositiveSets& s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (i == j) {
        EXPECT_FALSE(contains(s.positives(i), j));
        EXPECT_FALSE(contains(s.negatives(i), j));
        continue;
      }
      EXPECT_NE(contains(s.positives(i), j), contains(s.negatives(i), j));
      EXPECT_EQ(contains(s.positives(i), j), contains(s.positives(j), i));
    }
  }
}

}  // namespace

TEST(GaussianClusters, Counts) {
  const Dataset ds = tcl::make_gaussian_clusters(2, 10, 2, 0.1, 5);
  EXPECT_EQ(ds.size(), 20u);
  EXPECT_EQ(ds.dim(), 2u);
  EXPECT_EQ(ds.class_count, 2u);
  EXPECT_EQ(std::count(ds.labels->begin(), ds.labels->end(), 0), 10);
  EXPECT_EQ(std::count(ds.labels->begin(), ds.labels->end(), 1), 10);
  EXPECT_NO_THROW(ds.validate());
}

TEST(GaussianClusters, SameSeedIsBitwiseIdentical) {
  const Dataset a = tcl::make_gaussian_clusters(4, 25, 8, 0.2, 99);
  const Dataset b = tcl::make_gaussian_clusters(4, 25, 8, 0.2, 99);
  const Dataset c = tcl::make_gaussian_clusters(4, 25, 8, 0.2, 100);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(*a.labels, *b.labels);
  EXPECT_NE(a.features, c.features);
}

TEST(GaussianClusters, RejectsBadShapes) {
  EXPECT_THROW(tcl::make_gaussian_clusters(1, 10, 2, 0.1, 1), tcl::InvalidShape);
  EXPECT_THROW(tcl::make_gaussian_clusters(2, 0, 2, 0.1, 1), tcl::InvalidShape);
  EXPECT_THROW(tcl::make_gaussian_clusters(2, 10, 2, 0.0, 1), tcl::InvalidShape);
}

TEST(GaussianClusters, NearestCentroidSeparatesTightClusters) {
  const Dataset ds = tcl::make_gaussian_clusters(10, 100, 32, 0.05, 3);
  // Centroids from even rows, evaluated on odd rows.
  Eigen::MatrixXd centroid = Eigen::MatrixXd::Zero(10, 32);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(10);
  for (Eigen::Index r = 0; r < ds.features.rows(); r += 2) {
    const int y = (*ds.labels)[static_cast<std::size_t>(r)];
    centroid.row(y) += ds.features.row(r);
    count[y] += 1.0;
  }
  for (Eigen::Index c = 0; c < 10; ++c) centroid.row(c) /= count[c];
  int correct = 0, total = 0;
  for (Eigen::Index r = 1; r < ds.features.rows(); r += 2) {
    Eigen::Index best = 0;
    (centroid.rowwise() - ds.features.row(r)).rowwise().squaredNorm().minCoeff(&best);
    correct += static_cast<int>(best) == (*ds.labels)[static_cast<std::size_t>(r)];
    ++total;
  }
  EXPECT_GE(static_cast<double>(correct) / total, 0.99);
}

TEST(AugmentViews, IdentityAugmentation) {
  tcl::Rng rng(1);
  const std::vector<double> sample{0.5, -1.0, 2.0};
  const auto views = tcl::augment_views(sample, {2, 0.0, 0.0, false}, rng);
  ASSERT_EQ(views.size(), 2u);
  for (const auto& v : views) EXPECT_EQ(v, sample);
}

TEST(AugmentViews, ViewCount) {
  tcl::Rng rng(2);
  const std::vector<double> sample{1.0, 2.0};
  EXPECT_EQ(tcl::augment_views(sample, {3, 0.1, 0.1, true}, rng).size(), 3u);
  const auto v = tcl::augment_views(sample, {2, 0.1, 0.0, false}, rng);
  EXPECT_NE(v[0], v[1]);
}

TEST(AugmentViews, NoiseMeanAbsoluteDeviation) {
  tcl::Rng rng(3);
  const std::vector<double> sample(10, 0.25);
  double total = 0.0;
  std::size_t n = 0;
  for (int draw = 0; draw < 10000; ++draw) {
    for (const auto& v : tcl::augment_views(sample, {2, 0.1, 0.0, false}, rng)) {
      for (std::size_t k = 0; k < v.size(); ++k, ++n) total += std::abs(v[k] - sample[k]);
    }
  }
  const double expected = 0.1 * std::sqrt(2.0 / std::numbers::pi);
  EXPECT_NEAR(total / static_cast<double>(n), expected, 0.05 * expected);
}

TEST(AugmentViews, RotationPreservesNormWithoutNoise) {
  tcl::Rng rng(4);
  const std::vector<double> sample{0.3, -0.4, 1.2, 0.7};
  for (const auto& v : tcl::augment_views(sample, {3, 0.0, 0.0, true}, rng)) {
    EXPECT_NEAR(tcl::norm(v), tcl::norm(sample), 1e-12);
  }
}

TEST(AugmentViews, InvalidConfig) {
  tcl::Rng rng(5);
  const std::vector<double> sample{1.0};
  EXPECT_THROW(tcl::augment_views(sample, {1, 0.1, 0.1, false}, rng), tcl::InvalidShape);
  EXPECT_THROW(tcl::augment_views(sample, {2, 0.1, 1.0, false}, rng), tcl::InvalidShape);
  EXPECT_THROW(tcl::augment_views(sample, {2, -0.1, 0.1, false}, rng), tcl::InvalidShape);
}

TEST(SupervisedBatch, SizeIsViewsTimesB) {
  const Dataset ds = tcl::make_gaussian_clusters(3, 10, 4, 0.1, 1);
  tcl::Rng rng(6);
  const ViewBatch b = tcl::build_supervised_batch(ds, 4, ViewConfig{}, rng);
  EXPECT_EQ(b.size(), 8u);
  EXPECT_EQ(b.positives.size(), 8u);
}

TEST(SupervisedBatch, TwoClassesTwoSamplesGiveThreePositives) {
  const Dataset ds = tcl::make_gaussian_clusters(2, 2, 3, 0.1, 2);
  tcl::Rng rng(7);
  const ViewBatch b = tcl::build_supervised_batch(ds, 4, ViewConfig{}, rng);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(b.positives.positives(i).size(), 3u);
}

TEST(SupervisedBatch, PositiveSetsFollowLabels) {
  const Dataset ds = tcl::make_gaussian_clusters(5, 20, 4, 0.1, 3);
  tcl::Rng rng(8);
  for (int draw = 0; draw < 50; ++draw) {
    ViewConfig cfg;
    cfg.views = 2 + draw % 2;
    const ViewBatch b = tcl::build_supervised_batch(ds, 12, cfg, rng);
    expect_consistent(b.positives);
    std::vector<std::size_t> distinct(b.source.begin(), b.source.end());
    std::sort(distinct.begin(), distinct.end());
    EXPECT_EQ(std::unique(distinct.begin(), distinct.end()) - distinct.begin(), 12);
    for (std::size_t i = 0; i < b.size(); ++i) {
      const int yi = (*ds.labels)[b.source[i]];
      std::size_t same = 0;
      for (std::size_t s = 0; s < b.sources; ++s) same += (*ds.labels)[b.source[s]] == yi;
      EXPECT_EQ(b.positives.positives(i).size(), cfg.views * same - 1);
      for (std::size_t j : b.positives.positives(i)) EXPECT_EQ((*ds.labels)[b.source[j]], yi);
    }
  }
}

TEST(SupervisedBatch, Errors) {
  Dataset unlabeled = tcl::make_gaussian_clusters(2, 5, 3, 0.1, 1);
  unlabeled.labels.reset();
  tcl::Rng rng(9);
  EXPECT_THROW(tcl::build_supervised_batch(unlabeled, 2, ViewConfig{}, rng), tcl::NoLabels);
  const Dataset ds = tcl::make_gaussian_clusters(2, 5, 3, 0.1, 1);
  EXPECT_THROW(tcl::build_supervised_batch(ds, 11, ViewConfig{}, rng), tcl::BatchTooLarge);
}

TEST(SelfsupBatch, TripletsGiveTwoPositives) {
  const Dataset ds = tcl::make_gaussian_clusters(2, 10, 4, 0.1, 1);
  tcl::Rng rng(10);
  ViewConfig cfg;
  cfg.views = 3;
  const ViewBatch b = tcl::build_selfsup_batch(ds, 5, cfg, rng);
  EXPECT_EQ(b.size(), 15u);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(b.positives.positives(i).size(), 2u);
}

TEST(SelfsupBatch, PairsGiveOnePositive) {
  const Dataset ds = tcl::make_gaussian_clusters(2, 10, 4, 0.1, 1);
  tcl::Rng rng(11);
  const ViewBatch b = tcl::build_selfsup_batch(ds, 6, ViewConfig{}, rng);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(b.positives.positives(i).size(), 1u);
}

TEST(SelfsupBatch, NoCrossSamplePositivesEvenWithSharedLabels) {
  const Dataset ds = tcl::make_gaussian_clusters(2, 10, 4, 0.1, 1);
  tcl::Rng rng(12);
  ViewConfig cfg;
  cfg.views = 3;
  for (int draw = 0; draw < 50; ++draw) {
    const ViewBatch b = tcl::build_selfsup_batch(ds, 8, cfg, rng);
    expect_consistent(b.positives);
    for (std::size_t i = 0; i < b.size(); ++i) {
      for (std::size_t j : b.positives.positives(i)) EXPECT_EQ(b.source[j], b.source[i]);
    }
  }
  EXPECT_THROW(tcl::build_selfsup_batch(ds, 21, cfg, rng), tcl::BatchTooLarge);
}

TEST(Batches, EqualSeedsGiveEqualSequences) {
  const Dataset ds = tcl::make_gaussian_clusters(3, 10, 4, 0.1, 1);
  tcl::Rng a(42, 3), b(42, 3);
  for (int step = 0; step < 10; ++step) {
    const auto x = tcl::build_supervised_batch(ds, 6, ViewConfig{}, a);
    const auto y = tcl::build_supervised_batch(ds, 6, ViewConfig{}, b);
    EXPECT_EQ(x.features, y.features);
    EXPECT_EQ(x.source, y.source);
    EXPECT_TRUE(x.positives == y.positives);
  }
}

TEST(CsvDataset, ReadsLabeledFile) {
  const auto p = temp_file("three.csv");
  write(p, "f0,f1,label\n0.5,1.5,0\n-2,3e-1,2\n1,1,1\n");
  const Dataset ds = tcl::load_csv_dataset(p);
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.dim(), 2u);
  EXPECT_EQ(*ds.labels, (std::vector<int>{0, 2, 1}));
  EXPECT_EQ(ds.class_count, 3u);
  EXPECT_DOUBLE_EQ(ds.features(1, 1), 0.3);
}

TEST(CsvDataset, ReadsUnlabeledFile) {
  const auto p = temp_file("unlabeled.csv");
  write(p, "f0,f1,f2\n1,2,3\n4,5,6\n");
  const Dataset ds = tcl::load_csv_dataset(p);
  EXPECT_FALSE(ds.has_labels());
  EXPECT_EQ(ds.dim(), 3u);
}

TEST(CsvDataset, MalformedFloatNamesLine) {
  const auto p = temp_file("bad.csv");
  write(p, "f0,f1,label\n0.5,1.5,0\n0.1,abc,1\n");
  try {
    tcl::load_csv_dataset(p);
    FAIL() << "expected ParseError";
  } catch (const tcl::ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(CsvDataset, OtherErrors) {
  EXPECT_THROW(tcl::load_csv_dataset(temp_file("does_not_exist.csv")), tcl::MissingFile);
  const auto ragged = temp_file("ragged.csv");
  write(ragged, "f0,f1\n1,2\n3\n");
  EXPECT_THROW(tcl::load_csv_dataset(ragged), tcl::ParseError);
  const auto header = temp_file("header.csv");
  write(header, "x,y\n1,2\n");
  EXPECT_THROW(tcl::load_csv_dataset(header), tcl::ParseError);
  const auto empty = temp_file("empty.csv");
  write(empty, "f0\n");
  EXPECT_THROW(tcl::load_csv_dataset(empty), tcl::ParseError);
}

TEST(CsvDataset, Roundtrip) {
  const Dataset ds = tcl::make_gaussian_clusters(4, 15, 6, 0.3, 17);
  const auto p = temp_file("roundtrip.csv");
  tcl::save_csv_dataset(ds, p);
  const Dataset back = tcl::load_csv_dataset(p);
  ASSERT_EQ(back.size(), ds.size());
  EXPECT_LE((back.features - ds.features).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(*back.labels, *ds.labels);
  EXPECT_EQ(back.class_count, ds.class_count);
}
