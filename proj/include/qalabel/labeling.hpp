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

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qalabel/combinatorics.hpp"
#include "qalabel/error.hpp"
#include "qalabel/rng.hpp"

namespace qalabel {

enum class QuestionType { which_one, is_in };

inline std::string_view to_string(QuestionType t) noexcept {
  return t == QuestionType::which_one ? "which_one" : "is_in";
}

inline QuestionType parse_question_type(std::string_view s) {
  if (s == "which_one") return QuestionType::which_one;
  if (s == "is_in") return QuestionType::is_in;
  throw InvalidArgument("unknown question type '" + std::string(s) +
                        "' (expected which_one or is_in)");
}

// Procedure parameters: question type, number of question items I, classes.
class QuestionSpec {
 public:
  QuestionSpec(QuestionType qtype, int items, ClassSpace space)
      : qtype_(qtype), items_(items), space_(space) {
    if (items < 1 || items > space.size() - 1) {
      throw InvalidArgument("question items I=" + std::to_string(items) +
                            " must satisfy 1 <= I <= K-1 (K=" +
                            std::to_string(space.size()) + ")");
    }
  }

  QuestionType qtype() const noexcept { return qtype_; }
  int items() const noexcept { return items_; }
  const ClassSpace& space() const noexcept { return space_; }
  int num_classes() const noexcept { return space_.size(); }

 private:
  QuestionType qtype_;
  int items_;
  ClassSpace space_;
};

class Answer {
 public:
  enum class Kind { chose, not_included, yes, no };

  static Answer chose(ClassId z) { return Answer(Kind::chose, z); }
  static Answer not_included() { return Answer(Kind::not_included, 0); }
  static Answer yes() { return Answer(Kind::yes, 0); }
  static Answer no() { return Answer(Kind::no, 0); }

  Kind kind() const noexcept { return kind_; }
  // Only meaningful for Kind::chose.
  ClassId chosen() const noexcept { return chosen_; }

  bool valid_for(QuestionType t) const noexcept {
    if (t == QuestionType::which_one) {
      return kind_ == Kind::chose || kind_ == Kind::not_included;
    }
    return kind_ == Kind::yes || kind_ == Kind::no;
  }

  std::string to_string() const {
    switch (kind_) {
      case Kind::chose: return "chose(" + std::to_string(chosen_) + ")";
      case Kind::not_included: return "not_included";
      case Kind::yes: return "yes";
      case Kind::no: return "no";
    }
    return "?";
  }

  friend bool operator==(const Answer&, const Answer&) = default;

 private:
  Answer(Kind k, ClassId z) : kind_(k), chosen_(z) {}

  Kind kind_;
  ClassId chosen_;
};

// How the annotator arrives at the class Z it considers correct.
class AnnotatorModel {
 public:
  using LabelLookup = std::function<std::optional<ClassId>(std::string_view)>;
  using PosteriorLookup =
      std::function<std::optional<PosteriorVector>(std::string_view)>;

  // Z is read from ground truth (the default for relabelling a dataset).
  static AnnotatorModel deterministic(LabelLookup lookup) {
    AnnotatorModel m;
    m.labels_ = std::move(lookup);
    return m;
  }

  static AnnotatorModel from_labels(std::unordered_map<std::string, ClassId> truth) {
    return deterministic(
        [truth = std::move(truth)](std::string_view id) -> std::optional<ClassId> {
          auto it = truth.find(std::string(id));
          if (it == truth.end()) return std::nullopt;
          return it->second;
        });
  }

  // Z is drawn from a per-instance posterior.
  static AnnotatorModel stochastic(PosteriorLookup lookup) {
    AnnotatorModel m;
    m.posteriors_ = std::move(lookup);
    return m;
  }

  static AnnotatorModel stochastic(PosteriorVector shared) {
    return stochastic([p = std::move(shared)](std::string_view) {
      return std::optional<PosteriorVector>(p);
    });
  }

  bool is_deterministic() const noexcept { return static_cast<bool>(labels_); }

  ClassId infer(std::string_view instance_id, const ClassSpace& space,
                Rng& rng) const {
    if (labels_) {
      auto z = labels_(instance_id);
      if (!z) throw MissingGroundTruth("no ground truth for instance '" +
                                       std::string(instance_id) + "'");
      if (!space.contains(*z)) {
        throw InvalidArgument("ground truth class " + std::to_string(*z) +
                              " outside K=" + std::to_string(space.size()));
      }
      return *z;
    }
    auto p = posteriors_(instance_id);
    if (!p) throw MissingGroundTruth("no posterior for instance '" +
                                     std::string(instance_id) + "'");
    if (p->num_classes() != space.size()) {
      throw InvalidArgument("posterior length does not match K");
    }
    return sample_class(*p, rng);
  }

  static ClassId sample_class(const PosteriorVector& p, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    const auto probs = p.probs();
    int last_positive = 1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] > 0.0) last_positive = static_cast<int>(i) + 1;
      acc += probs[i];
      if (u < acc) return static_cast<ClassId>(i) + 1;
    }
    return last_positive;
  }

 private:
  AnnotatorModel() = default;

  LabelLookup labels_;
  PosteriorLookup posteriors_;
};

struct LabelingEvent {
  std::string instance_id;
  QuestionType qtype = QuestionType::which_one;
  int items = 1;
  LabelSubset question_set;
  Answer answer = Answer::not_included();
  LabelSubset qa_label;
  std::uint64_t seed = 0;

  friend bool operator==(const LabelingEvent&, const LabelingEvent&) = default;
};

// Step 1: a size-I question set, uniform over all C(K, I) subsets
// (partial Fisher-Yates over the class ids).
inline LabelSubset draw_question_set(Rng& rng, const QuestionSpec& spec) {
  const int k = spec.num_classes();
  std::vector<ClassId> pool(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) pool[static_cast<std::size_t>(i)] = i + 1;
  for (int i = 0; i < spec.items(); ++i) {
    const auto j = static_cast<std::size_t>(i) +
                   static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(k - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(spec.items()));
  return LabelSubset(std::move(pool));
}

// Step 3, annotator side.
inline Answer answer_question(ClassId z, QuestionType qtype,
                              const LabelSubset& question_set) {
  const bool inside = question_set.contains(z);
  if (qtype == QuestionType::which_one) {
    return inside ? Answer::chose(z) : Answer::not_included();
  }
  return inside ? Answer::yes() : Answer::no();
}

// Step 3, labeling side: turns an answer into the Q&A label.
inline LabelSubset assign_label(QuestionType qtype, const LabelSubset& question_set,
                                const Answer& answer, const ClassSpace& space) {
  if (!answer.valid_for(qtype)) {
    throw ProtocolViolation("answer " + answer.to_string() +
                            " is not valid for a " +
                            std::string(to_string(qtype)) + " question");
  }
  if (!question_set.fits(space) ||
      static_cast<int>(question_set.size()) >= space.size()) {
    throw ProtocolViolation("question set " + question_set.to_string() +
                            " is not a proper subset of the classes");
  }
  switch (answer.kind()) {
    case Answer::Kind::chose:
      if (!question_set.contains(answer.chosen())) {
        throw ProtocolViolation("chose(" + std::to_string(answer.chosen()) +
                                ") but class is not in question set " +
                                question_set.to_string());
      }
      return LabelSubset{answer.chosen()};
    case Answer::Kind::yes:
      return question_set;
    case Answer::Kind::not_included:
    case Answer::Kind::no:
      return complement(space, question_set);
  }
  throw ProtocolViolation("unreachable answer kind");
}

// Checks a stored or received event against the labeling rules.
inline void validate_event(const LabelingEvent& e, const ClassSpace& space) {
  if (e.items < 1 || e.items > space.size() - 1) {
    throw ProtocolViolation("I=" + std::to_string(e.items) + " out of range");
  }
  if (static_cast<int>(e.question_set.size()) != e.items) {
    throw ProtocolViolation("question set " + e.question_set.to_string() +
                            " does not have I=" + std::to_string(e.items) +
                            " classes");
  }
  const LabelSubset expected =
      assign_label(e.qtype, e.question_set, e.answer, space);
  if (!(expected == e.qa_label)) {
    throw ProtocolViolation("qa_label " + e.qa_label.to_string() +
                            " inconsistent with answer " + e.answer.to_string() +
                            " (expected " + expected.to_string() + ")");
  }
}

// One labeling event for one instance, fully determined by event_seed.
inline LabelingEvent label_instance(std::uint64_t event_seed,
                                    const QuestionSpec& spec,
                                    const AnnotatorModel& annotator,
                                    std::string instance_id) {
  Rng rng(event_seed);
  LabelingEvent e;
  e.question_set = draw_question_set(rng, spec);
  const ClassId z = annotator.infer(instance_id, spec.space(), rng);
  e.answer = answer_question(z, spec.qtype(), e.question_set);
  e.qa_label = assign_label(spec.qtype(), e.question_set, e.answer, spec.space());
  e.instance_id = std::move(instance_id);
  e.qtype = spec.qtype();
  e.items = spec.items();
  e.seed = event_seed;
  return e;
}

// Per-instance seeds come from rng.split(position), so the sequence depends
// only on the rng state and the instance order.
template <typename Sink>
void simulate_stream(const Rng& rng, const QuestionSpec& spec,
                     const AnnotatorModel& annotator,
                     std::span<const std::string> instances, Sink&& sink) {
  for (std::size_t i = 0; i < instances.size(); ++i) {
    Rng stream = rng.split(i);
    sink(label_instance(stream(), spec, annotator, instances[i]));
  }
}

inline std::vector<LabelingEvent> simulate_dataset(
    const Rng& rng, const QuestionSpec& spec, const AnnotatorModel& annotator,
    std::span<const std::string> instances) {
  std::vector<LabelingEvent> out;
  out.reserve(instances.size());
  simulate_stream(rng, spec, annotator, instances,
                  [&](LabelingEvent e) { out.push_back(std::move(e)); });
  return out;
}

}  // namespace qalabel
