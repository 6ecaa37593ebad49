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

#include "qalabel/generative.hpp"

#include <gtest/gtest.h>

#include <numeric>

#include "qalabel/generative_json.hpp"
#include "test_support.hpp"

namespace qalabel {
namespace {

using testing::random_posterior;

constexpr double kExact = 1e-12;

TEST(WhichOnePmf, UniformThreeClasses) {
  const auto pmf = whichone_pmf(PosteriorVector::uniform(ClassSpace(3)), 1);
  EXPECT_EQ(pmf.support_size(), 6u);
  for (ClassId y = 1; y <= 3; ++y) EXPECT_NEAR(pmf[LabelSubset{y}], 1.0 / 9, kExact);
  for (const auto& pair : enumerate_subsets(ClassSpace(3), 2)) {
    EXPECT_NEAR(pmf[pair], 2.0 / 9, kExact);
  }
  EXPECT_NO_THROW(pmf.validate());
}

TEST(WhichOnePmf, SkewedPosterior) {
  const auto pmf = whichone_pmf(PosteriorVector({0.5, 0.3, 0.2}), 1);
  EXPECT_NEAR(pmf[LabelSubset{1}], 1.0 / 6, kExact);
  EXPECT_NEAR(pmf[(LabelSubset{2, 3})], 1.0 / 6, kExact);
  EXPECT_NEAR(pmf[LabelSubset{2}], 0.1, kExact);
  EXPECT_NEAR(pmf[(LabelSubset{1, 3})], 0.7 / 3, kExact);
}

TEST(WhichOnePmf, LastItemIsOrdinaryLabeling) {
  Rng rng(5);
  for (int k = 2; k <= 7; ++k) {
    const auto p = random_posterior(k, rng);
    const auto pmf = whichone_pmf(p, k - 1);
    EXPECT_EQ(pmf.support_size(), static_cast<std::size_t>(k));
    for (ClassId y = 1; y <= k; ++y) EXPECT_NEAR(pmf[LabelSubset{y}], p(y), kExact);
  }
}

TEST(IsInPmf, UniformFourClassesMergesChannels) {
  const auto pmf = isin_pmf(PosteriorVector::uniform(ClassSpace(4)), 2);
  EXPECT_EQ(pmf.support_size(), 6u);
  for (const auto& s : enumerate_subsets(ClassSpace(4), 2)) EXPECT_NEAR(pmf[s], 1.0 / 6, kExact);
}

TEST(IsInPmf, SkewedPosterior) {
  const auto pmf = isin_pmf(PosteriorVector({0.5, 0.3, 0.2}), 1);
  EXPECT_NEAR(pmf[LabelSubset{1}], 1.0 / 6, kExact);
  EXPECT_NEAR(pmf[(LabelSubset{1, 2})], 0.8 / 3, kExact);
}

TEST(IsInPmf, SymmetricInItems) {
  Rng rng(11);
  for (int k = 2; k <= 7; ++k) {
    for (int trial = 0; trial < 10; ++trial) {
      const auto p = random_posterior(k, rng);
      for (int i = 1; i < k; ++i) {
        const auto a = isin_pmf(p, i), b = isin_pmf(p, k - i);
        ASSERT_EQ(a.entries().size(), b.entries().size());
        for (const auto& [label, mass] : a.entries()) EXPECT_EQ(mass, b[label]);
      }
    }
  }
}

TEST(Pmfs, RejectInvalidItems) {
  const auto p = PosteriorVector::uniform(ClassSpace(4));
  EXPECT_THROW(whichone_pmf(p, 0), InvalidArgument);
  EXPECT_THROW(whichone_pmf(p, 4), InvalidArgument);
  EXPECT_THROW(isin_pmf(p, 4), InvalidArgument);
  EXPECT_THROW(candidate_pmf(p, 4), InvalidArgument);
}

TEST(ConditionalPmf, LemmaValuesWhichOne) {
  const auto pmf = conditional_pmf(QuestionType::which_one, 1, 1, ClassSpace(3));
  EXPECT_EQ(pmf.support_size(), 3u);
  EXPECT_NEAR(pmf[LabelSubset{1}], 1.0 / 3, kExact);
  EXPECT_NEAR(pmf[(LabelSubset{1, 2})], 1.0 / 3, kExact);
  EXPECT_NEAR(pmf[(LabelSubset{1, 3})], 1.0 / 3, kExact);
  EXPECT_THROW(conditional_pmf(QuestionType::is_in, 4, 1, ClassSpace(3)), InvalidArgument);
}

TEST(ConditionalPmf, MarginalisesToProcedurePmf) {
  Rng rng(17);
  for (int k = 2; k <= 6; ++k) {
    const ClassSpace space(k);
    for (auto qtype : {QuestionType::which_one, QuestionType::is_in}) {
      for (int i = 1; i < k; ++i) {
        std::vector<LabelPmf> given;
        for (ClassId z = 1; z <= k; ++z) {
          given.push_back(conditional_pmf(qtype, z, i, space));
          EXPECT_NEAR(given.back().total(), 1.0, kExact);
        }
        for (int trial = 0; trial < 10; ++trial) {
          const auto p = random_posterior(k, rng);
          LabelPmf mixed(space, Procedure::of(qtype, i));
          for (ClassId z = 1; z <= k; ++z) {
            for (const auto& [label, mass] : given[z - 1].entries()) mixed.add(label, p(z) * mass);
          }
          EXPECT_LE(max_abs_difference(mixed, qa_pmf(qtype, p, i)), kExact);
        }
      }
    }
  }
}

TEST(OraclePmf, AgreesWithClosedForms) {
  Rng rng(23);
  for (int k = 2; k <= 6; ++k) {
    for (int trial = 0; trial < 100; ++trial) {
      const auto p = random_posterior(k, rng);
      for (int i = 1; i < k; ++i) {
        EXPECT_LE(max_abs_difference(oracle_pmf(QuestionType::which_one, p, i), whichone_pmf(p, i)),
                  kExact);
        EXPECT_LE(max_abs_difference(oracle_pmf(QuestionType::is_in, p, i), isin_pmf(p, i)),
                  kExact);
      }
    }
  }
}

TEST(OraclePmf, UniformPosteriorIsRelabelingInvariant) {
  // With a uniform posterior the mass of a label depends only on its size.
  for (auto qtype : {QuestionType::which_one, QuestionType::is_in}) {
    const auto pmf = oracle_pmf(qtype, PosteriorVector::uniform(ClassSpace(5)), 2);
    std::map<std::size_t, double> by_size;
    for (const auto& [label, mass] : pmf.entries()) {
      auto [it, fresh] = by_size.emplace(label.size(), mass);
      if (!fresh) {
        EXPECT_NEAR(it->second, mass, kExact);
      }
    }
  }
}

TEST(OraclePmf, CapacityLimit) {
  EXPECT_THROW(oracle_pmf(QuestionType::is_in, PosteriorVector::uniform(ClassSpace(25)), 1),
               CapacityError);
}

TEST(ReceiverConfidence, Betas) {
  const auto p = PosteriorVector::uniform(ClassSpace(10));
  EXPECT_NEAR(receiver_confidence(QuestionType::which_one, p, 3).beta, 1.0 / 3, kExact);
  for (int i = 1; i < 10; ++i) {
    EXPECT_NEAR(receiver_confidence(QuestionType::is_in, p, i).beta, 1.0 / 9, kExact);
  }
  Rng rng(3);
  const auto q = random_posterior(10, rng);
  const auto rc = receiver_confidence(QuestionType::which_one, q, 9);
  EXPECT_DOUBLE_EQ(rc.beta, 1.0);
  for (ClassId a = 1; a <= 10; ++a) EXPECT_NEAR(rc.mixture[a - 1], q(a), kExact);
}

TEST(ReceiverConfidence, MixtureMatchesDirectBelief) {
  Rng rng(29);
  for (int k = 2; k <= 6; ++k) {
    for (int trial = 0; trial < 50; ++trial) {
      const auto p = random_posterior(k, rng);
      for (auto qtype : {QuestionType::which_one, QuestionType::is_in}) {
        for (int i = 1; i < k; ++i) {
          const auto rc = receiver_confidence(qtype, p, i);
          const auto direct = receiver_belief(oracle_pmf(qtype, p, i));
          for (int a = 0; a < k; ++a) EXPECT_NEAR(rc.mixture[a], direct[a], kExact);
        }
      }
      for (int n = 1; n < k; ++n) {
        const auto rc = receiver_confidence_candidate(p, n);
        const auto direct = receiver_belief(candidate_pmf(p, n));
        for (int a = 0; a < k; ++a) EXPECT_NEAR(rc.mixture[a], direct[a], kExact);
      }
    }
  }
}

TEST(CandidatePmf, OrdinaryAndComplementaryEndpoints) {
  const PosteriorVector p({0.1, 0.2, 0.3, 0.4});
  const auto one = candidate_pmf(p, 1);
  for (ClassId y = 1; y <= 4; ++y) EXPECT_NEAR(one[LabelSubset{y}], p(y), kExact);
  // N = K-1: the complementary label "not c" has mass (1 - P(c)) / (K - 1).
  const auto comp = candidate_pmf(p, 3);
  for (ClassId c = 1; c <= 4; ++c) {
    EXPECT_NEAR(comp[complement(ClassSpace(4), LabelSubset{c})], (1.0 - p(c)) / 3.0, kExact);
  }
  EXPECT_NO_THROW(comp.validate());
}

TEST(CandidatePmf, BetaEquivalences) {
  EXPECT_NEAR(beta_candidate(10, 2), 4.0 / 9, kExact);
  EXPECT_NEAR(beta_whichone(10, 4), 4.0 / 9, kExact);
  EXPECT_NEAR(beta_candidate(10, 5), beta_isin(10), kExact);
  for (int k = 2; k <= 24; ++k) {
    for (int i = 1; i < k; ++i) {
      if (k % (i + 1) == 0) {
        EXPECT_NEAR(beta_whichone(k, i), beta_candidate(k, k / (i + 1)), kExact);
      }
    }
  }
}

TEST(InvertToPosterior, RoundTrips) {
  Rng rng(31);
  for (int k = 3; k <= 6; ++k) {
    for (int trial = 0; trial < 50; ++trial) {
      const auto p = random_posterior(k, rng);
      for (int i = 1; i < k; ++i) {
        for (auto qtype : {QuestionType::which_one, QuestionType::is_in}) {
          const auto back = invert_to_posterior(qtype, qa_pmf(qtype, p, i), i);
          for (ClassId y = 1; y <= k; ++y) EXPECT_NEAR(back(y), p(y), kExact);
        }
      }
    }
  }
  const auto u = PosteriorVector::uniform(ClassSpace(5));
  const auto back = invert_to_posterior(QuestionType::is_in, isin_pmf(u, 2), 2);
  for (ClassId y = 1; y <= 5; ++y) EXPECT_NEAR(back(y), 0.2, kExact);
}

TEST(InvertToPosterior, RejectsInconsistentInput) {
  LabelPmf bad(ClassSpace(3), Procedure{Procedure::Kind::which_one, 1});
  bad.add(LabelSubset{1}, 1.0);  // a singleton can carry at most I/K = 1/3
  EXPECT_THROW(invert_to_posterior(QuestionType::which_one, bad, 1), InconsistentPmf);
  LabelPmf wrong_size(ClassSpace(4), Procedure{Procedure::Kind::is_in, 1});
  wrong_size.add(LabelSubset{1, 2}, 1.0);
  EXPECT_THROW(invert_to_posterior(QuestionType::is_in, wrong_size, 1), InconsistentPmf);
}

TEST(LabelPmf, ValidateCatchesBadSupportAndMass) {
  LabelPmf pmf(ClassSpace(4), Procedure{Procedure::Kind::is_in, 1});
  pmf.add(LabelSubset{1, 2}, 1.0);
  EXPECT_THROW(pmf.validate(), InconsistentPmf);
  LabelPmf light(ClassSpace(4), Procedure{Procedure::Kind::ordinary, 1});
  light.add(LabelSubset{1}, 0.5);
  EXPECT_THROW(light.validate(), InconsistentPmf);
}

TEST(PmfJson, RoundTrip) {
  const auto pmf = whichone_pmf(PosteriorVector({0.5, 0.3, 0.2}), 1);
  const auto j = pmf_to_json(pmf);
  EXPECT_EQ(j["procedure"], "which_one");
  EXPECT_EQ(j["K"], 3);
  EXPECT_EQ(j["I"], 1);
  EXPECT_EQ(j["entries"].size(), 6u);
  const auto back = pmf_from_json(Json::parse(j.dump()));
  EXPECT_EQ(back.procedure(), pmf.procedure());
  EXPECT_EQ(max_abs_difference(back, pmf), 0.0);
}

}  // namespace
}  // namespace qalabel
