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

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "qalabel/combinatorics.hpp"
#include "qalabel/error.hpp"
#include "qalabel/labeling.hpp"

namespace qalabel {

// Which labeling procedure a pmf describes, with its size parameter
// (I for Q&A procedures, N for candidate labels, 1 for ordinary labels).
struct Procedure {
  enum class Kind { which_one, is_in, candidate, ordinary };

  Kind kind = Kind::ordinary;
  int param = 1;

  static Procedure of(QuestionType t, int items) {
    return {t == QuestionType::which_one ? Kind::which_one : Kind::is_in, items};
  }

  // Label sizes the procedure can emit.
  bool admits_size(int size, int k) const noexcept {
    switch (kind) {
      case Kind::which_one: return size == 1 || size == k - param;
      case Kind::is_in: return size == param || size == k - param;
      case Kind::candidate: return size == param;
      case Kind::ordinary: return size == 1;
    }
    return false;
  }

  std::string name() const {
    switch (kind) {
      case Kind::which_one: return "which_one";
      case Kind::is_in: return "is_in";
      case Kind::candidate: return "candidate";
      case Kind::ordinary: return "ordinary";
    }
    return "?";
  }

  friend bool operator==(const Procedure&, const Procedure&) = default;
};

// Sparse distribution over the label sets a procedure can produce.
class LabelPmf {
 public:
  static constexpr double kMassTolerance = 1e-12;

  LabelPmf(ClassSpace space, Procedure procedure)
      : space_(space), procedure_(procedure) {}

  // Accumulates, so coinciding answer branches merge onto one key.
  void add(const LabelSubset& label, double p) { entries_[label] += p; }

  double operator[](const LabelSubset& label) const {
    auto it = entries_.find(label);
    return it == entries_.end() ? 0.0 : it->second;
  }

  double total() const noexcept {
    double s = 0.0;
    for (const auto& [label, p] : entries_) s += p;
    return s;
  }

  void validate(double tolerance = kMassTolerance) const {
    for (const auto& [label, p] : entries_) {
      if (!(p >= 0.0)) {
        throw InconsistentPmf("negative mass on " + label.to_string());
      }
      if (!label.fits(space_) ||
          !procedure_.admits_size(static_cast<int>(label.size()), space_.size())) {
        throw InconsistentPmf("label " + label.to_string() +
                              " outside the support of " + procedure_.name());
      }
    }
    if (std::abs(total() - 1.0) > tolerance) {
      throw InconsistentPmf("total mass " + std::to_string(total()) + " != 1");
    }
  }

  const std::map<LabelSubset, double>& entries() const& noexcept { return entries_; }
  // By value on temporaries so `for (... : some_pmf(...).entries())` is safe.
  std::map<LabelSubset, double> entries() && { return std::move(entries_); }
  std::size_t support_size() const noexcept { return entries_.size(); }
  const ClassSpace& space() const noexcept { return space_; }
  const Procedure& procedure() const noexcept { return procedure_; }

 private:
  ClassSpace space_;
  Procedure procedure_;
  std::map<LabelSubset, double> entries_;
};

inline double max_abs_difference(const LabelPmf& a, const LabelPmf& b) {
  double worst = 0.0;
  for (const auto& [label, p] : a.entries()) worst = std::max(worst, std::abs(p - b[label]));
  for (const auto& [label, p] : b.entries()) worst = std::max(worst, std::abs(p - a[label]));
  return worst;
}

namespace detail {

inline void check_items(int items, int k) {
  if (items < 1 || items > k - 1) {
    throw InvalidArgument("I=" + std::to_string(items) +
                          " must satisfy 1 <= I <= K-1 (K=" + std::to_string(k) + ")");
  }
}

inline double mass_of(const PosteriorVector& p, const LabelSubset& s) {
  double m = 0.0;
  for (ClassId y : s) m += p(y);
  return m;
}

}  // namespace detail

// Which-one law: singletons {y} carry (I/K) P(y|x); every size-(K-I) set
// carries (1/C(K,I)) times its posterior mass.
inline LabelPmf whichone_pmf(const PosteriorVector& posterior, int items) {
  const ClassSpace space = posterior.space();
  const int k = space.size();
  detail::check_items(items, k);
  LabelPmf pmf(space, Procedure{Procedure::Kind::which_one, items});
  const double single = static_cast<double>(items) / k;
  for (ClassId y = 1; y <= k; ++y) pmf.add(LabelSubset{y}, single * posterior(y));
  const double inv = 1.0 / static_cast<double>(binomial(k, items));
  for (const auto& s : enumerate_subsets(space, k - items)) {
    pmf.add(s, inv * detail::mass_of(posterior, s));
  }
  return pmf;
}

// Is-in law: every set of size I or K-I carries (1/C(K,I)) times its mass.
// At 2I = K both channels land on the same sets and add up.
inline LabelPmf isin_pmf(const PosteriorVector& posterior, int items) {
  const ClassSpace space = posterior.space();
  const int k = space.size();
  detail::check_items(items, k);
  LabelPmf pmf(space, Procedure{Procedure::Kind::is_in, items});
  const double inv = 1.0 / static_cast<double>(binomial(k, items));
  for (const auto& s : enumerate_subsets(space, items)) {
    pmf.add(s, inv * detail::mass_of(posterior, s));
  }
  for (const auto& s : enumerate_subsets(space, k - items)) {
    pmf.add(s, inv * detail::mass_of(posterior, s));
  }
  return pmf;
}

inline LabelPmf qa_pmf(QuestionType qtype, const PosteriorVector& posterior, int items) {
  return qtype == QuestionType::which_one ? whichone_pmf(posterior, items)
                                          : isin_pmf(posterior, items);
}

// Label law given that the annotator settled on class z.
inline LabelPmf conditional_pmf(QuestionType qtype, ClassId z, int items,
                                const ClassSpace& space) {
  const int k = space.size();
  detail::check_items(items, k);
  if (!space.contains(z)) {
    throw InvalidArgument("class " + std::to_string(z) + " outside K=" +
                          std::to_string(k));
  }
  LabelPmf pmf(space, Procedure::of(qtype, items));
  const double inv = 1.0 / static_cast<double>(binomial(k, items));
  if (qtype == QuestionType::which_one) {
    pmf.add(LabelSubset{z}, static_cast<double>(items) / k);
    for (const auto& rest : enumerate_subsets(space, k - items)) {
      if (rest.contains(z)) pmf.add(rest, inv);
    }
  } else {
    for (const auto& q : enumerate_subsets(space, items)) {
      if (q.contains(z)) pmf.add(q, inv);
    }
    for (const auto& rest : enumerate_subsets(space, k - items)) {
      if (rest.contains(z)) pmf.add(rest, inv);
    }
  }
  return pmf;
}

// Brute force: run the labeling rules on every (z, Q) pair, weighting each by
// P(z|x) / C(K, I). Shares no arithmetic with the closed forms above.
inline LabelPmf oracle_pmf(QuestionType qtype, const PosteriorVector& posterior,
                           int items) {
  const ClassSpace space = posterior.space();
  const int k = space.size();
  if (k > kMaxEnumerableClasses) {
    throw CapacityError("oracle enumeration limited to K <= " +
                        std::to_string(kMaxEnumerableClasses));
  }
  detail::check_items(items, k);
  const auto questions = enumerate_subsets(space, items);
  const double weight_q = 1.0 / static_cast<double>(questions.size());
  LabelPmf pmf(space, Procedure::of(qtype, items));
  for (ClassId z = 1; z <= k; ++z) {
    if (posterior(z) == 0.0) continue;
    for (const auto& q : questions) {
      const Answer a = answer_question(z, qtype, q);
      pmf.add(assign_label(qtype, q, a, space), posterior(z) * weight_q);
    }
  }
  return pmf;
}

// Candidate-label baseline: uniform-over-members law for size-N labels.
inline LabelPmf candidate_pmf(const PosteriorVector& posterior, int size) {
  const ClassSpace space = posterior.space();
  const int k = space.size();
  if (size < 1 || size > k - 1) {
    throw InvalidArgument("candidate size N=" + std::to_string(size) +
                          " must satisfy 1 <= N <= K-1");
  }
  LabelPmf pmf(space, Procedure{Procedure::Kind::candidate, size});
  const double inv = 1.0 / static_cast<double>(binomial(k - 1, size - 1));
  for (const auto& s : enumerate_subsets(space, size)) {
    pmf.add(s, inv * detail::mass_of(posterior, s));
  }
  return pmf;
}

// Receiver-side belief Pr{Yhat = alpha | x}: a beta-mixture of the posterior
// and the uniform distribution.
struct ReceiverConfidence {
  double beta = 0.0;
  std::vector<double> mixture;  // index alpha-1
};

inline double beta_whichone(int k, int items) {
  detail::check_items(items, k);
  return static_cast<double>(items) / (k - 1);
}

inline double beta_isin(int k) { return 1.0 / (k - 1); }

inline double beta_candidate(int k, int size) {
  if (size < 1 || size > k - 1) throw InvalidArgument("candidate size out of range");
  return static_cast<double>(k - size) / (static_cast<double>(size) * (k - 1));
}

inline ReceiverConfidence mix_with_uniform(const PosteriorVector& posterior, double beta) {
  ReceiverConfidence rc;
  rc.beta = beta;
  const int k = posterior.num_classes();
  rc.mixture.resize(static_cast<std::size_t>(k));
  for (ClassId a = 1; a <= k; ++a) {
    rc.mixture[static_cast<std::size_t>(a - 1)] =
        beta * posterior(a) + (1.0 - beta) / k;
  }
  return rc;
}

inline ReceiverConfidence receiver_confidence(QuestionType qtype,
                                              const PosteriorVector& posterior,
                                              int items) {
  const int k = posterior.num_classes();
  detail::check_items(items, k);
  const double beta = qtype == QuestionType::which_one ? beta_whichone(k, items)
                                                       : beta_isin(k);
  return mix_with_uniform(posterior, beta);
}

inline ReceiverConfidence receiver_confidence_candidate(const PosteriorVector& posterior,
                                                        int size) {
  return mix_with_uniform(posterior, beta_candidate(posterior.num_classes(), size));
}

// Direct route: a receiver spreads each label's mass evenly over its members.
inline std::vector<double> receiver_belief(const LabelPmf& pmf) {
  std::vector<double> belief(static_cast<std::size_t>(pmf.space().size()), 0.0);
  for (const auto& [label, p] : pmf.entries()) {
    const double share = p / static_cast<double>(label.size());
    for (ClassId a : label) belief[static_cast<std::size_t>(a - 1)] += share;
  }
  return belief;
}

inline constexpr double kInversionTolerance = 1e-9;

// Recovers P(y|x) from a Q&A label law. Entries slightly outside [0, 1]
// (within kInversionTolerance) are clamped; anything further is an error.
inline PosteriorVector invert_to_posterior(QuestionType qtype, const LabelPmf& pmf,
                                           int items) {
  const int k = pmf.space().size();
  detail::check_items(items, k);
  const double kd = k, id = items;
  double scale = 0.0, offset = 0.0;
  if (qtype == QuestionType::which_one) {
    scale = kd * (kd - 1) / (id * (2 * kd - id - 1));
    offset = -(kd - id) * (kd - id - 1) / (id * (2 * kd - id - 1));
  } else {
    scale = kd * (kd - 1) / (2 * id * (kd - id));
    offset = 1.0 - scale;
  }
  std::vector<double> containing(static_cast<std::size_t>(k), 0.0);
  for (const auto& [label, p] : pmf.entries()) {
    if (!Procedure::of(qtype, items).admits_size(static_cast<int>(label.size()), k)) {
      throw InconsistentPmf("label " + label.to_string() +
                            " cannot arise from this procedure");
    }
    for (ClassId y : label) containing[static_cast<std::size_t>(y - 1)] += p;
  }
  double sum = 0.0;
  for (auto& v : containing) {
    v = scale * v + offset;
    if (v < 0.0 || v > 1.0) {
      if (v < -kInversionTolerance || v > 1.0 + kInversionTolerance) {
        throw InconsistentPmf("recovered probability " + std::to_string(v) +
                              " outside [0, 1]");
      }
      v = std::clamp(v, 0.0, 1.0);
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kInversionTolerance) {
    throw InconsistentPmf("recovered posterior sums to " + std::to_string(sum));
  }
  // Absorb rounding so the result meets the posterior's own 1e-12 contract.
  if (std::abs(sum - 1.0) > PosteriorVector::kSumTolerance) {
    for (auto& v : containing) v /= sum;
  }
  return PosteriorVector(std::move(containing));
}

}  // namespace qalabel
