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
#include <numbers>
#include <string>

#include "qalabel/error.hpp"
#include "qalabel/generative.hpp"
#include "qalabel/labeling.hpp"

namespace qalabel {

// Inputs to the estimation-error bounds. rad_sum is the sum over classes of
// the Rademacher complexities of the per-class score functions; it is
// supplied by the caller (for kernel models, K * kernel_rademacher_bound).
struct BoundInputs {
  int k = 10;
  int items = 1;
  double rho = 1.0;    // Lipschitz constant of the rewritten loss
  double c_l = 2.0;    // sup of the base loss
  double delta = 0.05;
  double n = 1.0;
  double rad_sum = 0.0;

  void validate() const {
    detail::check_items(items, k);
    if (!(rho > 0.0) || !(c_l > 0.0)) throw InvalidArgument("rho and C_L must be > 0");
    if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must lie in (0, 1)");
    if (!(n >= 1.0)) throw InvalidArgument("n must be >= 1");
    if (!(rad_sum >= 0.0)) throw InvalidArgument("rad_sum must be >= 0");
  }
};

struct KernelBoundInputs {
  double r = 1.0;       // sup_x sqrt(k(x, x))
  double lambda = 1.0;  // RKHS norm bound on the weights
  double n = 1.0;
};

// Factor multiplying rad_sum in the Rademacher complexity of the
// rewritten-loss class.
inline double rademacher_coeff(QuestionType qtype, int k, int items, double rho) {
  detail::check_items(items, k);
  const double kd = k, id = items;
  const double num = std::numbers::sqrt2 * rho * kd * kd * (kd - 1);
  if (qtype == QuestionType::which_one) return num / (id * (2 * kd - id - 1));
  return num / (2 * id * (kd - id));
}

namespace detail {

inline double confidence_term(double delta, double n) {
  return std::sqrt(2.0 * std::log(2.0 / delta) / n);
}

}  // namespace detail

// The constant inside the second factor is K^2 + (I-2)K - I^2 + 1: the
// bounded-difference range of the which-one loss, (K-I)(1 + c(K-1)/(K-I))
// times C_L, expands to exactly this.
inline double error_bound_whichone(const BoundInputs& in) {
  in.validate();
  const double kd = in.k, id = in.items;
  const double denom = id * (2 * kd - id - 1);
  const double complexity =
      4.0 * std::numbers::sqrt2 * in.rho * kd * kd * (kd - 1) / denom * in.rad_sum;
  const double range = (kd - id) * (kd * kd + (id - 2) * kd - id * id + 1) / denom;
  return complexity + range * in.c_l * detail::confidence_term(in.delta, in.n);
}

inline double error_bound_isin(const BoundInputs& in) {
  in.validate();
  const double kd = in.k, id = in.items;
  const double complexity =
      std::numbers::sqrt2 * in.rho * kd * kd * (kd - 1) / (id * (kd - id)) * in.rad_sum;
  const double range = kd * (kd - 1) / (2.0 * std::min(id, kd - id));
  return complexity + range * in.c_l * detail::confidence_term(in.delta, in.n);
}

inline double error_bound(QuestionType qtype, const BoundInputs& in) {
  return qtype == QuestionType::which_one ? error_bound_whichone(in)
                                          : error_bound_isin(in);
}

// r * Lambda / sqrt(n) for a norm-bounded linear model in an RKHS.
inline double kernel_rademacher_bound(const KernelBoundInputs& in) {
  if (!(in.n >= 1.0)) throw InvalidArgument("n must be >= 1");
  if (!(in.r >= 0.0) || !(in.lambda >= 0.0)) {
    throw InvalidArgument("r and Lambda must be >= 0");
  }
  return in.r * in.lambda / std::sqrt(in.n);
}

}  // namespace qalabel
