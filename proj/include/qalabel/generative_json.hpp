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

#include <string>

#include <nlohmann/json.hpp>

#include "qalabel/data_io.hpp"
#include "qalabel/generative.hpp"

namespace qalabel {

// {"procedure", "K", "I", "entries": [{"label": [...], "p": float}]}.
// "I" carries the procedure's size parameter (N for candidate labels).
inline Json pmf_to_json(const LabelPmf& pmf) {
  Json entries = Json::array();
  for (const auto& [label, p] : pmf.entries()) {
    entries.push_back(Json{{"label", subset_to_json(label)}, {"p", p}});
  }
  return Json{{"procedure", pmf.procedure().name()},
              {"K", pmf.space().size()},
              {"I", pmf.procedure().param},
              {"entries", std::move(entries)}};
}

inline LabelPmf pmf_from_json(const Json& j) {
  const auto name = j.at("procedure").get<std::string>();
  Procedure proc;
  if (name == "which_one") proc.kind = Procedure::Kind::which_one;
  else if (name == "is_in") proc.kind = Procedure::Kind::is_in;
  else if (name == "candidate") proc.kind = Procedure::Kind::candidate;
  else if (name == "ordinary") proc.kind = Procedure::Kind::ordinary;
  else throw InvalidArgument("unknown procedure '" + name + "'");
  proc.param = j.at("I").get<int>();
  LabelPmf pmf(ClassSpace(j.at("K").get<int>()), proc);
  for (const auto& e : j.at("entries")) {
    pmf.add(subset_from_json(e.at("label")), e.at("p").get<double>());
  }
  return pmf;
}

}  // namespace qalabel
