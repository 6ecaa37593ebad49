/* Copyright 2026 The qalabel Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "qalabel/verify.hpp"

#include <gtest/gtest.h>

namespace qalabel {
namespace {

TEST(Verify, DefaultGridPasses) {
  const auto report = run_verification({});
  ASSERT_EQ(report.checks.size(), 5u);
  EXPECT_TRUE(report.passed()) << format_report(report);
  for (const auto& c : report.checks) {
    EXPECT_LT(c.max_deviation, 1e-10) << c.name;
    EXPECT_GT(c.cases, 0u) << c.name;
  }
  // 100 posteriors x sum over K=2..6 of 2(K-1) settings.
  EXPECT_EQ(report.checks[0].cases, 100u * 2 * (1 + 2 + 3 + 4 + 5));
}

TEST(Verify, PerturbedCoefficientIsCaught) {
  VerifyOptions opt;
  opt.coefficient_perturbation = 1e-3;
  opt.posteriors = 10;
  const auto report = run_verification(opt);
  EXPECT_FALSE(report.passed());
  for (const auto& c : report.checks) EXPECT_EQ(c.passed(), c.name != "unbiasedness") << c.name;
  const auto text = format_report(report);
  EXPECT_NE(text.find("FAIL unbiasedness"), std::string::npos) << text;
  EXPECT_NE(text.find("worst: K="), std::string::npos) << text;
}

TEST(Verify, CapacityAndArguments) {
  VerifyOptions opt;
  opt.k_max = 30;
  EXPECT_THROW(run_verification(opt), CapacityError);
  opt.k_max = 6;
  opt.k_min = 1;
  EXPECT_THROW(run_verification(opt), InvalidArgument);
  opt.k_min = 4;
  opt.posteriors = 0;
  EXPECT_THROW(run_verification(opt), InvalidArgument);
}

TEST(Verify, DeterministicGivenSeed) {
  VerifyOptions opt;
  opt.posteriors = 5;
  opt.seed = 42;
  const auto a = run_verification(opt);
  const auto b = run_verification(opt);
  for (std::size_t i = 0; i < a.checks.size(); ++i) {
    EXPECT_EQ(a.checks[i].max_deviation, b.checks[i].max_deviation);
  }
}

TEST(DrawPosterior, OnTheSimplex) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto p = draw_posterior(7, rng);
    double s = 0.0;
    for (double v : p.probs()) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

}  // namespace
}  // namespace qalabel
