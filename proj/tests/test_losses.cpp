#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "oracles.hpp"
#include "tcl/finite_difference.hpp"
#include "tcl/gradlab.hpp"
#include "tcl/losses.hpp"

using testing_helpers::random_grouped_batch;
using testing_helpers::trivial_batch;
using tcl::LossKind;
using tcl::LossParams;
using tcl::Vector;

namespace {

void expect_vector_near(const Vector& a, const Vector& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], tol) << "component " << k;
}

}  // namespace

TEST(LossParams, Validation) {
  EXPECT_NO_THROW((LossParams{0.1, 0.0, 0.0}.validate()));
  EXPECT_THROW((LossParams{0.0, 1.0, 1.0}.validate()), tcl::InvalidParams);
  EXPECT_THROW((LossParams{0.1, -1.0, 1.0}.validate()), tcl::InvalidParams);
  EXPECT_THROW((LossParams{0.1, 1.0, NAN}.validate()), tcl::InvalidParams);
  EXPECT_TRUE((LossParams{0.1, 1.0, 1.0}.within_guarantee_range()));
  EXPECT_FALSE((LossParams{0.1, 0.5, 1.0}.within_guarantee_range()));
}

TEST(SupconLoss, SymmetricTrivialCase) {
  const auto r = tcl::supcon_loss(trivial_batch(), 1.0);
  EXPECT_NEAR(r.per_anchor[0], std::numbers::ln2, 1e-15);
  EXPECT_EQ(r.per_anchor[2], 0.0);
  EXPECT_EQ(r.included_anchors, 2u);
}

TEST(SupconLoss, OnePositiveNoNegativesIsZero) {
  tcl::Rng rng(1);
  const std::vector<int> groups{0, 0};
  const tcl::ContrastiveBatch b({rng.unit_vector(4), rng.unit_vector(4)},
                                tcl::PositiveSets::from_groups(std::span<const int>(groups)));
  const auto r = tcl::supcon_loss(b, 0.1);
  EXPECT_NEAR(r.per_anchor[0], 0.0, 1e-15);
  EXPECT_NEAR(r.total, 0.0, 1e-15);
}

TEST(SupconLoss, MatchesScalarOracle) {
  tcl::Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto b = random_grouped_batch(rng, 6, 4, 2 + trial % 2);
    for (double tau : {0.1, 0.5, 1.0}) {
      const auto r = tcl::supcon_loss(b, tau);
      double total = 0.0;
      for (std::size_t i = 0; i < b.size(); ++i) {
        const double want = oracle::supcon_anchor(b, i, tau);
        EXPECT_NEAR(r.per_anchor[i], want, 1e-10);
        total += want;
      }
      EXPECT_NEAR(r.total, total, 1e-10);
    }
  }
}

TEST(TclDenominator, Examples) {
  const auto b = trivial_batch();
  EXPECT_NEAR(tcl::tcl_denominator(b, 0, {1.0, 1.0, 1.0}), 3.0, 1e-14);
  EXPECT_THROW(tcl::tcl_denominator(b, 2, {1.0, 1.0, 1.0}), tcl::EmptyPositiveSet);
}

TEST(TclDenominator, ReducesToSupconDenominator) {
  tcl::Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto b = random_grouped_batch(rng, 7, 3, 3);
    for (double tau : {0.1, 1.0}) {
      const double want = oracle::supcon_denominator(b, 0, tau);
      EXPECT_NEAR(tcl::tcl_denominator(b, 0, {tau, 0.0, 1.0}), want, 1e-12 * want);
    }
  }
}

TEST(TclDenominator, MatchesScalarOracle) {
  tcl::Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto b = random_grouped_batch(rng, 8, 4, 3);
    const LossParams p{rng.uniform(0.05, 1.0), rng.uniform(0.0, 5000.0), rng.uniform(0.0, 5.0)};
    for (std::size_t i = 0; i < b.size(); ++i) {
      const double want = oracle::tcl_denominator(b, i, p.tau, p.k1, p.k2);
      EXPECT_NEAR(tcl::tcl_denominator(b, i, p), want, 1e-10 * want);
    }
  }
}

TEST(TclDenominator, K1TermHasNoTemperature) {
  // One positive at s = 0.5 and no negatives: D = e^{s/tau} + k1 e^{-s}.
  const std::vector<int> groups{0, 0};
  const tcl::ContrastiveBatch b(
      {tcl::l2_normalize(Vector{1.0, 0.0}), tcl::l2_normalize(Vector{0.5, std::sqrt(0.75)})},
      tcl::PositiveSets::from_groups(std::span<const int>(groups)));
  EXPECT_NEAR(tcl::tcl_denominator(b, 0, {0.1, 7.0, 1.0}), std::exp(5.0) + 7.0 * std::exp(-0.5), 1e-10);
}

TEST(TclLoss, TrivialCaseIsLn3) {
  const auto r = tcl::tcl_loss(trivial_batch(), {1.0, 1.0, 1.0});
  EXPECT_NEAR(r.per_anchor[0], std::log(3.0), 1e-15);
}

TEST(TclLoss, ReducesToSupcon) {
  tcl::Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto b = random_grouped_batch(rng, 6 + trial % 6, 2 + trial % 6, 2 + trial % 3);
    const double tau = rng.uniform(0.05, 1.0);
    const auto t = tcl::tcl_loss(b, {tau, 0.0, 1.0});
    const auto s = tcl::supcon_loss(b, tau);
    EXPECT_NEAR(t.total, s.total, 1e-12);
    for (std::size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(t.per_anchor[i], s.per_anchor[i], 1e-12);
  }
}

TEST(TclLoss, MatchesScalarOracleAtLargeK1) {
  tcl::Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const auto b = random_grouped_batch(rng, 8, 4, 3);
    const auto r = tcl::tcl_loss(b, {0.1, 5000.0, 1.0});
    for (std::size_t i = 0; i < b.size(); ++i) {
      EXPECT_NEAR(r.per_anchor[i], oracle::tcl_anchor(b, i, 0.1, 5000.0, 1.0), 1e-9);
    }
  }
}

TEST(TclLoss, PositiveWheneverNegativesOrK1) {
  tcl::Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const auto b = random_grouped_batch(rng, 6, 3, 2);
    const auto r = tcl::tcl_loss(b, {0.5, 1.0, 1.0});
    for (std::size_t i = 0; i < b.size(); ++i) EXPECT_GT(r.per_anchor[i], 0.0);
  }
  // No negatives, but k1 > 0 still adds strictly positive terms.
  const std::vector<int> groups{0, 0, 0};
  const tcl::ContrastiveBatch b({rng.unit_vector(3), rng.unit_vector(3), rng.unit_vector(3)},
                                tcl::PositiveSets::from_groups(std::span<const int>(groups)));
  for (double x : tcl::tcl_loss(b, {0.1, 1.0, 0.0}).per_anchor) EXPECT_GT(x, 0.0);
}

TEST(ContrastiveLoss, ExcludesAnchorsWithoutPositives) {
  const auto r = tcl::tcl_loss(trivial_batch(), {1.0, 1.0, 1.0});
  EXPECT_EQ(r.included_anchors, 2u);
  EXPECT_EQ(r.per_anchor[2], 0.0);
  EXPECT_NEAR(r.total, r.per_anchor[0] + r.per_anchor[1], 1e-15);
}

TEST(ContrastiveLoss, AllAnchorsExcludedThrows) {
  const std::vector<int> groups{0, 1, 2};
  tcl::Rng rng(8);
  const tcl::ContrastiveBatch b({rng.unit_vector(2), rng.unit_vector(2), rng.unit_vector(2)},
                                tcl::PositiveSets::from_groups(std::span<const int>(groups)));
  EXPECT_THROW(tcl::supcon_loss(b, 0.1), tcl::EmptyPositiveSet);
  EXPECT_THROW(tcl::tcl_loss(b, {0.1, 1.0, 1.0}), tcl::EmptyPositiveSet);
  EXPECT_THROW(tcl::supcon_anchor_grad(b, 0, 0.1), tcl::EmptyPositiveSet);
}

TEST(ContrastiveLoss, PermutationInvariant) {
  tcl::Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto b = random_grouped_batch(rng, 9, 4, 3);
    std::vector<std::size_t> perm(b.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm.begin(), perm.end());
    const auto moved = b.permuted(perm);
    EXPECT_NEAR(tcl::tcl_loss(b, {0.1, 5000, 1}).total, tcl::tcl_loss(moved, {0.1, 5000, 1}).total, 1e-10);
    EXPECT_NEAR(tcl::supcon_loss(b, 0.2).total, tcl::supcon_loss(moved, 0.2).total, 1e-10);
  }
}

TEST(SupconAnchorGrad, TrivialCase) {
  const auto b = trivial_batch();
  // -0.5 z_p + 0.5 z_n
  expect_vector_near(tcl::supcon_anchor_grad(b, 0, 1.0), Vector{0.0, -0.5, 0.5}, 1e-15);
}

TEST(SupconAnchorGrad, MatchesFiniteDifferences) {
  tcl::Rng rng(10);
  for (int trial = 0; trial < 40; ++trial) {
    const auto b = random_grouped_batch(rng, 7, 5, 3);
    for (double tau : {0.1, 0.5, 1.0}) {
      for (std::size_t i = 0; i < b.size(); ++i) {
        const auto a = tcl::supcon_anchor_grad(b, i, tau);
        const auto n = tcl::fd::anchor_grad(b, i, LossKind::supcon, {tau, 0.0, 1.0});
        EXPECT_LE(tcl::fd::relative_error(a, n), 1e-6);
      }
    }
  }
}

TEST(TclAnchorGrad, TrivialCase) {
  const auto b = trivial_batch();
  // -1.0 z_p + (1/3) z_n
  expect_vector_near(tcl::tcl_anchor_grad(b, 0, {1.0, 1.0, 1.0}), Vector{0.0, -1.0, 1.0 / 3.0}, 1e-15);
}

TEST(TclAnchorGrad, ReducesToSupcon) {
  tcl::Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto b = random_grouped_batch(rng, 8, 4, 3);
    const double tau = rng.uniform(0.05, 1.0);
    for (std::size_t i = 0; i < b.size(); ++i) {
      expect_vector_near(tcl::tcl_anchor_grad(b, i, {tau, 0.0, 1.0}), tcl::supcon_anchor_grad(b, i, tau), 1e-12);
    }
  }
}

TEST(TclAnchorGrad, MatchesFiniteDifferences) {
  tcl::Rng rng(12);
  for (int trial = 0; trial < 40; ++trial) {
    const auto b = random_grouped_batch(rng, 8, 4, 3);
    const LossParams p{0.1, 4000.0, 1.5};
    for (std::size_t i = 0; i < b.size(); ++i) {
      const auto a = tcl::tcl_anchor_grad(b, i, p);
      const auto n = tcl::fd::anchor_grad(b, i, LossKind::tcl, p);
      EXPECT_LE(tcl::fd::relative_error(a, n), 1e-6);
    }
  }
}

TEST(FullBatchGrad, MatchesFiniteDifferencesOfTotal) {
  tcl::Rng rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const auto b = random_grouped_batch(rng, 6, 3 + trial % 4, 2 + trial % 2);
    for (const auto& p : {LossParams{0.1, 5000.0, 1.0}, LossParams{0.5, 1.0, 1.5}, LossParams{1.0, 100.0, 3.0}}) {
      const auto a = tcl::fd::flatten(tcl::full_batch_grad(b, p, LossKind::tcl));
      const auto n = tcl::fd::full_batch_grad(b, LossKind::tcl, p);
      EXPECT_LE(tcl::fd::relative_error(a, n), 1e-6);
    }
    const auto a = tcl::fd::flatten(tcl::full_batch_grad(b, {0.1, 0, 1}, LossKind::supcon));
    EXPECT_LE(tcl::fd::relative_error(a, tcl::fd::full_batch_grad(b, LossKind::supcon, {0.1, 0, 1})), 1e-6);
  }
}

TEST(FullBatchGrad, PointOutsideEveryIncludedTermHasZeroGradient) {
  // With k2 = 0 the negatives leave every denominator, so the excluded
  // singleton 2 no longer appears in any anchor's terms.
  const auto b = trivial_batch();
  const auto g = tcl::full_batch_grad(b, {0.5, 1.0, 0.0}, LossKind::tcl);
  expect_vector_near(g[2], Vector(3, 0.0), 0.0);
  // And anchor 0 then only interacts with anchor 1.
  const auto n = tcl::fd::full_batch_grad(b, LossKind::tcl, {0.5, 1.0, 0.0});
  EXPECT_LE(tcl::fd::relative_error(tcl::fd::flatten(g), n), 1e-6);
}

TEST(FullBatchGrad, SwappingViewsExchangesGradients) {
  tcl::Rng rng(14);
  // Two sources with two views each; rows 0,1 are view 1, rows 2,3 view 2.
  const std::vector<int> groups{0, 1, 0, 1};
  std::vector<tcl::Embedding> z;
  for (int k = 0; k < 4; ++k) z.push_back(rng.unit_vector(5));
  const tcl::ContrastiveBatch b(z, tcl::PositiveSets::from_groups(std::span<const int>(groups)));
  const std::vector<std::size_t> swap{2, 3, 0, 1};
  const auto moved = b.permuted(swap);
  const LossParams p{0.1, 5000.0, 1.0};
  const auto g = tcl::full_batch_grad(b, p, LossKind::tcl);
  const auto h = tcl::full_batch_grad(moved, p, LossKind::tcl);
  for (std::size_t i = 0; i < 4; ++i) expect_vector_near(h[swap[i]], g[i], 1e-12);
}

TEST(FullBatchGrad, EqualsSumOfPerAnchorPartials) {
  tcl::Rng rng(15);
  const auto b = random_grouped_batch(rng, 6, 3, 2);
  const LossParams p{0.5, 10.0, 2.0};
  const auto g = tcl::fd::flatten(tcl::full_batch_grad(b, p, LossKind::tcl));
  // Per-anchor finite differences in every coordinate, summed over anchors.
  Vector summed(g.size(), 0.0);
  for (std::size_t i = 0; i < b.size(); ++i) {
    const auto part = tcl::fd::central_difference(
        [&](const Vector& flat) {
          std::vector<Vector> pts(b.size(), Vector(b.dim()));
          for (std::size_t j = 0; j < b.size(); ++j) {
            std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(j * b.dim()), b.dim(), pts[j].begin());
          }
          return tcl::tcl_loss(b.with_points(pts), p).per_anchor[i];
        },
        tcl::fd::flatten(b.points()));
    for (std::size_t k = 0; k < g.size(); ++k) summed[k] += part[k];
  }
  EXPECT_LE(tcl::fd::relative_error(g, summed), 1e-6);
}

TEST(CrossEntropy, UniformLogitsGiveLogC) {
  const Eigen::MatrixXd logits = Eigen::MatrixXd::Constant(4, 7, 0.3);
  const std::vector<int> labels{0, 3, 6, 2};
  EXPECT_NEAR(tcl::cross_entropy(logits, labels).loss, std::log(7.0), 1e-14);
}

TEST(CrossEntropy, ConfidentCorrectLogitGivesZero) {
  Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(2, 3);
  logits(0, 1) = 1000.0;
  logits(1, 2) = 1000.0;
  const std::vector<int> labels{1, 2};
  const auto r = tcl::cross_entropy(logits, labels);
  EXPECT_NEAR(r.loss, 0.0, 1e-12);
  EXPECT_TRUE(r.grad.allFinite());
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  tcl::Rng rng(16);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd logits(5, 4);
    for (Eigen::Index k = 0; k < logits.size(); ++k) logits.data()[k] = rng.normal(0.0, 3.0);
    std::vector<int> labels(5);
    for (int& y : labels) y = static_cast<int>(rng.index(4));
    const auto r = tcl::cross_entropy(logits, labels);
    Vector analytic(r.grad.data(), r.grad.data() + r.grad.size());
    Vector flat(logits.data(), logits.data() + logits.size());
    const auto numeric = tcl::fd::central_difference(
        [&](const Vector& x) {
          const Eigen::MatrixXd l = Eigen::Map<const Eigen::MatrixXd>(x.data(), 5, 4);
          return tcl::cross_entropy(l, labels).loss;
        },
        flat);
    EXPECT_LE(tcl::fd::relative_error(analytic, numeric), 1e-6);
  }
}

TEST(CrossEntropy, InvalidLabelThrows) {
  const Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(2, 3);
  EXPECT_THROW(tcl::cross_entropy(logits, std::vector<int>{0, 3}), tcl::InvalidLabel);
  EXPECT_THROW(tcl::cross_entropy(logits, std::vector<int>{-1, 0}), tcl::InvalidLabel);
}
