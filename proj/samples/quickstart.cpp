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

// Walks through the toolkit on a small synthetic problem: the label law of
// one instance, the rewritten loss, and a short training run from which-one
// labels.

#include <iostream>
#include <unordered_map>

#include "qalabel/data_io.hpp"
#include "qalabel/generative.hpp"
#include "qalabel/labeling.hpp"
#include "qalabel/losses.hpp"
#include "qalabel/model.hpp"

int main() {
  using namespace qalabel;

  // Which Q&A labels does a which-one question with I=2 produce for an
  // instance whose class posterior is (0.6, 0.3, 0.1, 0.0)?
  const PosteriorVector posterior({0.6, 0.3, 0.1, 0.0});
  std::cout << "which-one, K=4, I=2\n";
  for (const auto& [label, p] : whichone_pmf(posterior, 2).entries()) {
    std::cout << "  " << label.to_string() << "  " << p << "\n";
  }
  std::cout << "rewriting coefficient: " << coeff_whichone(4, 2) << "\n\n";

  // Label a synthetic dataset and train on the labels alone.
  Rng rng(7);
  const auto train_data = synthetic_blobs(4, 8, 150, 6.0, rng);
  const auto test_data = synthetic_blobs(4, 8, 100, 6.0, rng);
  std::unordered_map<std::string, ClassId> truth;
  for (std::size_t i = 0; i < train_data.size(); ++i) {
    truth[train_data.instance_id(i)] = train_data.labels[i];
  }
  const QuestionSpec spec(QuestionType::which_one, 2, ClassSpace(4));
  const auto events = simulate_dataset(Rng(1), spec, AnnotatorModel::from_labels(truth),
                                       train_data.instance_ids());
  TrainingSet set{train_data.features, {}};
  for (const auto& e : events) set.targets.push_back(e.qa_label);

  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 100;
  cfg.hidden = 32;
  const auto test = test_data.labeled();
  const auto result = train(set, 4, Objective::qa(QuestionType::which_one, 2), cfg, &test);
  const auto& last = result.metrics.back();
  std::cout << "after " << last.epoch << " epochs: test MAE " << last.test_mae
            << ", accuracy " << last.test_accuracy << "\n";
  return 0;
}
