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

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qalabel/combinatorics.hpp"
#include "qalabel/error.hpp"
#include "qalabel/generative.hpp"
#include "qalabel/labeling.hpp"

namespace qalabel {

// Per-class base loss L(f(x), y). MAE is the default; cross-entropy is
// available but unbounded, so it falls outside the bounded-loss setting.
enum class BaseLoss { mae, cross_entropy };

inline std::string_view to_string(BaseLoss b) noexcept {
  return b == BaseLoss::mae ? "mae" : "cross_entropy";
}

inline BaseLoss parse_base_loss(std::string_view s) {
  if (s == "mae") return BaseLoss::mae;
  if (s == "cross_entropy") return BaseLoss::cross_entropy;
  throw InvalidArgument("unknown base loss '" + std::string(s) + "'");
}

inline constexpr double kScoreSumTolerance = 1e-9;

// Classifier output on the simplex.
inline void check_scores(std::span<const double> f) {
  if (f.size() < 2) throw InvalidArgument("score vector needs K >= 2 entries");
  double sum = 0.0;
  for (double v : f) {
    if (!(v >= 0.0)) throw InvalidArgument("score entries must be >= 0");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kScoreSumTolerance) {
    throw InvalidArgument("scores sum to " + std::to_string(sum) + ", not 1");
  }
}

namespace detail {

inline void check_class(ClassId y, std::size_t k) {
  if (y < 1 || static_cast<std::size_t>(y) > k) {
    throw InvalidArgument("class " + std::to_string(y) + " outside 1.." +
                          std::to_string(k));
  }
}

}  // namespace detail

// sum_k |f_k - onehot(y)_k|
inline double mae(std::span<const double> f, ClassId y) {
  detail::check_class(y, f.size());
  double s = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    s += std::abs(f[k] - (static_cast<ClassId>(k) + 1 == y ? 1.0 : 0.0));
  }
  return s;
}

inline double cross_entropy(std::span<const double> f, ClassId y) {
  detail::check_class(y, f.size());
  return -std::log(f[static_cast<std::size_t>(y - 1)]);
}

inline double base_loss(BaseLoss base, std::span<const double> f, ClassId y) {
  return base == BaseLoss::mae ? mae(f, y) : cross_entropy(f, y);
}

// Writes dL(f, y)/df into grad (size K). The MAE subgradient at a kink is 0.
inline void base_loss_gradient(BaseLoss base, std::span<const double> f, ClassId y,
                               std::span<double> grad) {
  for (std::size_t k = 0; k < f.size(); ++k) {
    if (base == BaseLoss::mae) {
      const double t = f[k] - (static_cast<ClassId>(k) + 1 == y ? 1.0 : 0.0);
      grad[k] = t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0);
    } else {
      grad[k] = static_cast<ClassId>(k) + 1 == y ? -1.0 / f[k] : 0.0;
    }
  }
}

// Weight on the losses of classes outside the which-one label.
inline double coeff_whichone(int k, int items) {
  detail::check_items(items, k);
  const double kd = k, id = items;
  return (kd - id) * (kd - id - 1) / (id * (2 * kd - id - 1));
}

// Weight on the losses of classes outside the is-in label.
inline double coeff_isin(int k, int items) {
  detail::check_items(items, k);
  const double kd = k, id = items;
  return (2 * id * id + kd * kd - kd * (2 * id + 1)) / (2 * id * (kd - id));
}

inline double qa_coefficient(QuestionType qtype, int k, int items) {
  return qtype == QuestionType::which_one ? coeff_whichone(k, items)
                                          : coeff_isin(k, items);
}

inline void check_label_size(QuestionType qtype, const LabelSubset& label, int k,
                             int items) {
  if (!label.fits(ClassSpace(k)) ||
      !Procedure::of(qtype, items).admits_size(static_cast<int>(label.size()), k)) {
    throw InvalidArgument("label " + label.to_string() + " has a size that " +
                          std::string(to_string(qtype)) + " with I=" +
                          std::to_string(items) + ", K=" + std::to_string(k) +
                          " cannot produce");
  }
}

// Rewritten loss from precomputed per-class losses (index y-1):
// sum over the label minus coefficient times the sum over the rest.
inline double qa_loss_from_class_losses(double coefficient,
                                        std::span<const double> class_losses,
                                        const LabelSubset& label) {
  double inside = 0.0, outside = 0.0;
  for (std::size_t i = 0; i < class_losses.size(); ++i) {
    if (label.contains(static_cast<ClassId>(i) + 1)) {
      inside += class_losses[i];
    } else {
      outside += class_losses[i];
    }
  }
  return inside - coefficient * outside;
}

// Q&A loss; may be negative and is deliberately left unclipped.
inline double qa_loss(QuestionType qtype, std::span<const double> f,
                      const LabelSubset& label, int items,
                      BaseLoss base = BaseLoss::mae) {
  check_scores(f);
  const int k = static_cast<int>(f.size());
  check_label_size(qtype, label, k, items);
  std::vector<double> losses(f.size());
  for (int y = 1; y <= k; ++y) losses[static_cast<std::size_t>(y - 1)] = base_loss(base, f, y);
  return qa_loss_from_class_losses(qa_coefficient(qtype, k, items), losses, label);
}

// (ordinary risk, Q&A risk) at one instance. The Q&A side weights each label
// with the brute-force label law, so both sides come from enumeration.
inline std::pair<double, double> exact_risk_identity_check(
    QuestionType qtype, const PosteriorVector& posterior,
    std::span<const double> class_losses, int items) {
  const int k = posterior.num_classes();
  if (static_cast<int>(class_losses.size()) != k) {
    throw InvalidArgument("need one loss per class");
  }
  double ordinary = 0.0;
  for (ClassId y = 1; y <= k; ++y) {
    ordinary += posterior(y) * class_losses[static_cast<std::size_t>(y - 1)];
  }
  const double c = qa_coefficient(qtype, k, items);
  double rewritten = 0.0;
  for (const auto& [label, p] : oracle_pmf(qtype, posterior, items).entries()) {
    rewritten += p * qa_loss_from_class_losses(c, class_losses, label);
  }
  return {ordinary, rewritten};
}

// Maps an instance id to the classifier's score vector f(x).
using ScoreFn = std::function<std::vector<double>(const std::string&)>;

inline double empirical_qa_risk(const ScoreFn& f, std::span<const LabelingEvent> events,
                                QuestionType qtype, int items,
                                BaseLoss base = BaseLoss::mae) {
  if (events.empty()) throw InvalidArgument("empirical risk over an empty set");
  double total = 0.0;
  for (const auto& e : events) {
    if (e.qtype != qtype || e.items != items) {
      throw InvalidArgument("event '" + e.instance_id +
                            "' does not share the requested (qtype, I)");
    }
    total += qa_loss(qtype, f(e.instance_id), e.qa_label, items, base);
  }
  return total / static_cast<double>(events.size());
}

struct LabeledInstance {
  std::string instance_id;
  ClassId label = 1;
};

inline double empirical_test_risk(const ScoreFn& f,
                                  std::span<const LabeledInstance> pairs,
                                  BaseLoss base = BaseLoss::mae) {
  if (pairs.empty()) throw InvalidArgument("empirical risk over an empty set");
  double total = 0.0;
  for (const auto& [id, y] : pairs) total += base_loss(base, f(id), y);
  return total / static_cast<double>(pairs.size());
}

}  // namespace qalabel
