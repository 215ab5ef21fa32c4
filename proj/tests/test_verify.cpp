#include <cstdlib>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "tcl/parallel.hpp"
#include "tcl/verify.hpp"

namespace {

tcl::VerifyConfig quick_config() {
  tcl::VerifyConfig c;
  c.seed = 3;
  c.oracle_batches = 10;
  c.identity_batches = 50;
  c.pair_batches = 50;
  c.property_batches = 20;
  return c;
}

}  // namespace

TEST(ParallelMap, ResultsInIndexOrder) {
  const auto out = tcl::parallel_map<std::size_t>(1000, [](std::size_t k) { return k * k; });
  ASSERT_EQ(out.size(), 1000u);
  for (std::size_t k = 0; k < out.size(); ++k) EXPECT_EQ(out[k], k * k);
  EXPECT_TRUE(tcl::parallel_map<int>(0, [](std::size_t) { return 1; }).empty());
}

TEST(ParallelMap, RethrowsWorkerException) {
  auto fn = [](std::size_t k) -> int {
    if (k == 17) throw std::runtime_error("boom");
    return 0;
  };
  EXPECT_THROW(tcl::parallel_map<int>(40, fn), std::runtime_error);
}

TEST(ParallelMap, ThreadCapFromEnvironment) {
  ::setenv("TCL_LAB_THREADS", "1", 1);
  EXPECT_EQ(tcl::worker_count(), 1u);
  ::setenv("TCL_LAB_THREADS", "garbage", 1);
  EXPECT_GE(tcl::worker_count(), 1u);
  ::unsetenv("TCL_LAB_THREADS");
}

TEST(Verification, AllSuitesPassOnReducedCounts) {
  const auto report = tcl::run_verification(quick_config());
  EXPECT_EQ(report.properties.size(), 14u);
  for (const auto& p : report.properties) {
    EXPECT_TRUE(p.passed) << p.name << ": " << p.detail;
    EXPECT_GT(p.checked, 0u) << p.name;
  }
  EXPECT_TRUE(report.passed());
}

TEST(Verification, GradientOracleWithinTolerance) {
  const auto r = tcl::check_gradient_oracle(quick_config());
  EXPECT_TRUE(r.passed);
  EXPECT_LE(r.worst, 1e-6);
}

TEST(Verification, HardPositiveListsSkippedCombinations) {
  const auto r = tcl::check_hard_positive_gain(quick_config());
  EXPECT_TRUE(r.passed);
  // k1 = 0 is below the guarantee range for every tau and k2.
  EXPECT_EQ(r.skipped.size(), 9u);
}

TEST(Verification, InjectedSignFlipFailsHardPositiveOnly) {
  auto cfg = quick_config();
  cfg.inject_y_sign_flip = true;
  const auto report = tcl::run_verification(cfg);
  EXPECT_FALSE(report.passed());
  const auto* t1 = report.find("hard_positive_gain");
  ASSERT_NE(t1, nullptr);
  EXPECT_FALSE(t1->passed);
  ASSERT_TRUE(t1->counterexample.has_value());
  EXPECT_FALSE(t1->counterexample->points.empty());
  for (const auto& p : report.properties) {
    if (p.name != "hard_positive_gain") {
      EXPECT_TRUE(p.passed) << p.name;
    }
  }
}

TEST(Verification, SameSeedSameReport) {
  const auto a = tcl::check_reduction_identity(quick_config());
  const auto b = tcl::check_reduction_identity(quick_config());
  EXPECT_EQ(a.checked, b.checked);
  EXPECT_EQ(a.worst, b.worst);
}

TEST(Verification, ConfigValidation) {
  auto c = quick_config();
  c.taus.clear();
  EXPECT_THROW(c.validate(), tcl::ConfigError);
  c = quick_config();
  c.k2_grid = {1.0, 1.0};
  EXPECT_THROW(c.validate(), tcl::InvalidGrid);
  c = quick_config();
  c.k1s = {-1.0};
  EXPECT_THROW(c.validate(), tcl::InvalidParams);
}
