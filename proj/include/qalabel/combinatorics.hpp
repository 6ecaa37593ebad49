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
#include <compare>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "qalabel/error.hpp"

namespace qalabel {

// Class ids are 1-based throughout: the class set is {1, ..., K}.
using ClassId = int;

// Largest K for which exhaustive subset enumeration is allowed.
inline constexpr int kMaxEnumerableClasses = 24;

class ClassSpace {
 public:
  explicit ClassSpace(int num_classes) : k_(num_classes) {
    if (num_classes < 2) {
      throw InvalidArgument("class count must be at least 2, got " +
                            std::to_string(num_classes));
    }
  }

  int size() const noexcept { return k_; }
  bool contains(ClassId c) const noexcept { return c >= 1 && c <= k_; }

  friend bool operator==(const ClassSpace&, const ClassSpace&) = default;

 private:
  int k_;
};

// A nonempty set of class ids kept in canonical (sorted, unique) form, so
// equality and ordering are structural. Used for ordinary labels, question
// sets, Q&A labels and candidate labels alike.
class LabelSubset {
 public:
  LabelSubset() = default;

  LabelSubset(std::initializer_list<ClassId> ids)
      : LabelSubset(std::vector<ClassId>(ids)) {}

  explicit LabelSubset(std::vector<ClassId> ids) : ids_(std::move(ids)) {
    std::sort(ids_.begin(), ids_.end());
    ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
    if (ids_.empty()) throw InvalidArgument("label subset must be nonempty");
    if (ids_.front() < 1) {
      throw InvalidArgument("class ids are 1-based, got " +
                            std::to_string(ids_.front()));
    }
  }

  // Validating constructor: every id must also be at most K.
  LabelSubset(std::vector<ClassId> ids, const ClassSpace& space)
      : LabelSubset(std::move(ids)) {
    if (ids_.back() > space.size()) {
      throw InvalidArgument("class id " + std::to_string(ids_.back()) +
                            " exceeds K=" + std::to_string(space.size()));
    }
  }

  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  std::span<const ClassId> classes() const noexcept { return ids_; }
  auto begin() const noexcept { return ids_.begin(); }
  auto end() const noexcept { return ids_.end(); }
  ClassId front() const { return ids_.front(); }
  ClassId back() const { return ids_.back(); }

  bool contains(ClassId c) const noexcept {
    return std::binary_search(ids_.begin(), ids_.end(), c);
  }

  bool fits(const ClassSpace& space) const noexcept {
    return !ids_.empty() && ids_.back() <= space.size();
  }

  // Bit i-1 set for class i; only valid for ids up to 64.
  std::uint64_t mask() const {
    std::uint64_t m = 0;
    for (ClassId c : ids_) {
      if (c > 64) throw CapacityError("mask requires class ids <= 64");
      m |= std::uint64_t{1} << (c - 1);
    }
    return m;
  }

  std::string to_string() const {
    std::string s = "{";
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(ids_[i]);
    }
    return s + "}";
  }

  friend bool operator==(const LabelSubset&, const LabelSubset&) = default;
  friend auto operator<=>(const LabelSubset& a, const LabelSubset& b) {
    return std::lexicographical_compare_three_way(
        a.ids_.begin(), a.ids_.end(), b.ids_.begin(), b.ids_.end());
  }

 private:
  std::vector<ClassId> ids_;
};

inline LabelSubset subset_from_mask(std::uint64_t mask) {
  std::vector<ClassId> ids;
  for (int i = 0; i < 64; ++i) {
    if (mask & (std::uint64_t{1} << i)) ids.push_back(i + 1);
  }
  return LabelSubset(std::move(ids));
}

// A class posterior P(.|x): K nonnegative entries summing to one.
class PosteriorVector {
 public:
  static constexpr double kSumTolerance = 1e-12;

  explicit PosteriorVector(std::vector<double> probs) : p_(std::move(probs)) {
    if (p_.size() < 2) throw InvalidArgument("posterior needs K >= 2 entries");
    double sum = 0.0;
    for (double v : p_) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw InvalidArgument("posterior entries must be finite and >= 0");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
      throw InvalidArgument("posterior does not sum to 1 (sum=" +
                            std::to_string(sum) + ")");
    }
  }

  static PosteriorVector uniform(const ClassSpace& space) {
    return PosteriorVector(std::vector<double>(
        static_cast<std::size_t>(space.size()), 1.0 / space.size()));
  }

  ClassSpace space() const { return ClassSpace(static_cast<int>(p_.size())); }
  int num_classes() const noexcept { return static_cast<int>(p_.size()); }

  // 1-based access.
  double operator()(ClassId y) const { return p_.at(static_cast<std::size_t>(y - 1)); }
  std::span<const double> probs() const noexcept { return p_; }

 private:
  std::vector<double> p_;
};

// Exact C(n, k) for 0 <= k <= n <= 64. The running product
// C(n, i+1) = C(n, i) * (n - i) / (i + 1) stays integral at every step and
// the intermediate fits in 128 bits over the whole supported range.
inline std::uint64_t binomial(int n, int k) {
  if (n < 0 || n > 64 || k < 0 || k > n) {
    throw InvalidArgument("binomial(" + std::to_string(n) + ", " +
                          std::to_string(k) +
                          ") requires 0 <= k <= n <= 64");
  }
  k = std::min(k, n - k);
  unsigned __int128 c = 1;
  for (int i = 0; i < k; ++i) {
    c = c * static_cast<unsigned>(n - i) / static_cast<unsigned>(i + 1);
  }
  return static_cast<std::uint64_t>(c);
}

// All C(K, size) subsets of {1..K}, each once, in lexicographic order.
inline std::vector<LabelSubset> enumerate_subsets(const ClassSpace& space,
                                                  int size) {
  const int k = space.size();
  if (size < 1 || size > k) {
    throw InvalidArgument("subset size " + std::to_string(size) +
                          " outside [1, " + std::to_string(k) + "]");
  }
  if (k > kMaxEnumerableClasses) {
    throw CapacityError("exhaustive enumeration limited to K <= " +
                        std::to_string(kMaxEnumerableClasses));
  }
  std::vector<LabelSubset> out;
  out.reserve(binomial(k, size));
  std::vector<ClassId> cur(static_cast<std::size_t>(size));
  std::iota(cur.begin(), cur.end(), 1);
  while (true) {
    out.emplace_back(cur);
    int i = size - 1;
    while (i >= 0 && cur[static_cast<std::size_t>(i)] == k - size + i + 1) --i;
    if (i < 0) break;
    ++cur[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < size; ++j) {
      cur[static_cast<std::size_t>(j)] = cur[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
  return out;
}

// The class set minus s. Rejects the full set, which would leave an empty label.
inline LabelSubset complement(const ClassSpace& space, const LabelSubset& s) {
  if (!s.fits(space)) {
    throw InvalidArgument("subset " + s.to_string() + " not within K=" +
                          std::to_string(space.size()));
  }
  if (static_cast<int>(s.size()) >= space.size()) {
    throw InvalidArgument("complement of the full class set is empty");
  }
  std::vector<ClassId> rest;
  rest.reserve(static_cast<std::size_t>(space.size()) - s.size());
  for (ClassId c = 1; c <= space.size(); ++c) {
    if (!s.contains(c)) rest.push_back(c);
  }
  return LabelSubset(std::move(rest));
}

}  // namespace qalabel
