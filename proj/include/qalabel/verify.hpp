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

#pragma once

// Self-contained numerical verification of the label models and the risk
// rewriting: every check enumerates (K, I, qtype) over a grid with random
// posteriors and reports its largest deviation.

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qalabel/generative.hpp"
#include "qalabel/losses.hpp"
#include "qalabel/rng.hpp"

namespace qalabel {

struct VerifyOptions {
  int k_min = 2;
  int k_max = 6;
  int posteriors = 100;
  std::uint64_t seed = 0;
  // Added to the rewriting coefficient; nonzero values exist to prove the
  // unbiasedness check can fail.
  double coefficient_perturbation = 0.0;
};

struct CaseId {
  int k = 0;
  int items = 0;
  QuestionType qtype = QuestionType::which_one;
  std::uint64_t seed = 0;  // run seed
  int trial = 0;           // index of the posterior draw under that seed
};

struct CheckResult {
  std::string name;
  double tolerance = 0.0;
  double max_deviation = 0.0;
  std::size_t cases = 0;
  std::optional<CaseId> worst;

  bool passed() const { return max_deviation <= tolerance; }
};

struct VerifyReport {
  std::vector<CheckResult> checks;

  bool passed() const {
    for (const auto& c : checks) {
      if (!c.passed()) return false;
    }
    return true;
  }
};

// Point on the simplex from exponential weights; one draw in four zeroes a
// coordinate so boundary posteriors are covered.
inline PosteriorVector draw_posterior(int k, Rng& rng) {
  std::vector<double> w(static_cast<std::size_t>(k));
  double s = 0.0;
  for (auto& v : w) {
    v = -std::log1p(-rng.uniform());
    s += v;
  }
  if (rng.below(4) == 0) {
    const auto drop = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(k)));
    s -= w[drop];
    w[drop] = 0.0;
  }
  for (auto& v : w) v /= s;
  return PosteriorVector(std::move(w));
}

namespace detail {

inline void record(CheckResult& c, double deviation, const CaseId& id) {
  ++c.cases;
  if (!c.worst || deviation > c.max_deviation) {
    c.max_deviation = std::max(c.max_deviation, deviation);
    c.worst = id;
  }
}

}  // namespace detail

inline VerifyReport run_verification(const VerifyOptions& opt) {
  if (opt.k_min < 2 || opt.k_max < opt.k_min || opt.posteriors < 1) {
    throw InvalidArgument("need 2 <= k_min <= k_max and posteriors >= 1");
  }
  if (opt.k_max > kMaxEnumerableClasses) {
    throw CapacityError("verification enumerates subsets and is limited to K <= " +
                        std::to_string(kMaxEnumerableClasses));
  }
  const auto check = [](const char* name, double tolerance) {
    CheckResult c;
    c.name = name;
    c.tolerance = tolerance;
    return c;
  };
  CheckResult oracle = check("oracle_equivalence", 1e-12);
  CheckResult unbiased = check("unbiasedness", 1e-10);
  CheckResult inversion = check("inversion", 1e-12);
  CheckResult mixture = check("mixture", 1e-12);
  CheckResult candidate = check("candidate_beta", 1e-12);

  const Rng root(opt.seed);
  for (int k = opt.k_min; k <= opt.k_max; ++k) {
    const Rng per_k = root.split(static_cast<std::uint64_t>(k));
    for (int t = 0; t < opt.posteriors; ++t) {
      Rng draw = per_k.split(static_cast<std::uint64_t>(t));
      const auto posterior = draw_posterior(k, draw);
      std::vector<double> losses(static_cast<std::size_t>(k));
      for (auto& l : losses) l = draw.uniform(0.0, 2.0);
      double ordinary = 0.0;
      for (int y = 1; y <= k; ++y) {
        ordinary += posterior(y) * losses[static_cast<std::size_t>(y - 1)];
      }

      for (int items = 1; items < k; ++items) {
        for (auto qtype : {QuestionType::which_one, QuestionType::is_in}) {
          const CaseId id{k, items, qtype, opt.seed, t};
          const auto closed = qa_pmf(qtype, posterior, items);
          const auto brute = oracle_pmf(qtype, posterior, items);
          detail::record(oracle, max_abs_difference(closed, brute), id);

          const double c = qa_coefficient(qtype, k, items) + opt.coefficient_perturbation;
          double rewritten = 0.0;
          for (const auto& [label, p] : brute.entries()) {
            rewritten += p * qa_loss_from_class_losses(c, losses, label);
          }
          detail::record(unbiased, std::abs(rewritten - ordinary), id);

          double inv = 0.0;
          try {
            const auto back = invert_to_posterior(qtype, closed, items);
            for (int y = 1; y <= k; ++y) inv = std::max(inv, std::abs(back(y) - posterior(y)));
          } catch (const InconsistentPmf&) {
            inv = INFINITY;
          }
          detail::record(inversion, inv, id);

          const auto direct = receiver_belief(closed);
          const auto mixed = receiver_confidence(qtype, posterior, items).mixture;
          double mix = 0.0;
          for (std::size_t a = 0; a < direct.size(); ++a) {
            mix = std::max(mix, std::abs(direct[a] - mixed[a]));
          }
          detail::record(mixture, mix, id);
        }
      }
    }
    // Which-one with I items matches candidate labels of size K/(I+1); is-in
    // matches size K/2.
    for (int items = 1; items < k; ++items) {
      if (k % (items + 1) == 0) {
        detail::record(candidate,
                       std::abs(beta_whichone(k, items) - beta_candidate(k, k / (items + 1))),
                       {k, items, QuestionType::which_one, opt.seed, -1});
      }
      if (k % 2 == 0) {
        detail::record(candidate, std::abs(beta_isin(k) - beta_candidate(k, k / 2)),
                       {k, items, QuestionType::is_in, opt.seed, -1});
      }
    }
  }
  return {{oracle, unbiased, inversion, mixture, candidate}};
}

inline std::string format_report(const VerifyReport& r) {
  std::ostringstream os;
  for (const auto& c : r.checks) {
    os << (c.passed() ? "PASS " : "FAIL ") << c.name << " cases=" << c.cases
       << " max_deviation=" << c.max_deviation << " tolerance=" << c.tolerance;
    if (!c.passed() && c.worst) {
      os << " worst: K=" << c.worst->k << " I=" << c.worst->items
         << " qtype=" << to_string(c.worst->qtype) << " seed=" << c.worst->seed
         << " trial=" << c.worst->trial;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace qalabel
