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

// Human-in-the-loop labeling service. Sessions walk a shuffled queue of
// dataset instances; each instance gets a question set when it is first
// issued, and the human answer becomes a Q&A label persisted to the event
// store. Transport-agnostic: handle() maps a method/path/query/body onto
// a status code and a JSON body, and annotation_http.hpp binds it to HTTP.

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "qalabel/data_io.hpp"
#include "qalabel/labeling.hpp"
#include "qalabel/png.hpp"
#include "qalabel/rng.hpp"

namespace qalabel {

struct ApiRequest {
  std::string method;  // GET, POST, OPTIONS
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct ApiResponse {
  int status = 200;
  Json body;  // null for bodiless responses (204)
  std::map<std::string, std::string> headers;
};

struct ServiceOptions {
  std::string store_path;       // empty: events are kept in memory only
  std::uint64_t default_seed = 0;
  std::string allowed_origin = "*";
};

// A dataset the service can hand out, with optional display names per class.
struct ServedDataset {
  ImageDataset data;
  std::vector<std::string> class_names;
};

class AnnotationService {
 public:
  explicit AnnotationService(ServiceOptions options = {}) : options_(std::move(options)) {}

  void add_dataset(const std::string& name, ServedDataset dataset) {
    if (!dataset.class_names.empty() &&
        static_cast<int>(dataset.class_names.size()) != dataset.data.num_classes) {
      throw InvalidArgument("need one display name per class");
    }
    std::unique_lock lock(sessions_mutex_);
    if (default_dataset_.empty()) default_dataset_ = name;
    datasets_[name] = std::make_shared<const ServedDataset>(std::move(dataset));
  }

  ApiResponse create_session(const Json& body) {
    if (!body.is_object()) return error(400, "request body must be a JSON object");
    std::optional<QuestionSpec> spec;
    std::shared_ptr<const ServedDataset> ds;
    std::string dataset_name;
    std::uint64_t seed = options_.default_seed;
    try {
      dataset_name = body.value("dataset", default_dataset_);
      {
        std::shared_lock lock(sessions_mutex_);
        auto it = datasets_.find(dataset_name);
        if (it == datasets_.end()) return error(404, "unknown dataset '" + dataset_name + "'");
        ds = it->second;
      }
      if (!body.contains("qtype") || !body.contains("I")) {
        return error(400, "session needs 'qtype' and 'I'");
      }
      seed = body.value("seed", seed);
      spec.emplace(parse_question_type(body["qtype"].get<std::string>()),
                   body["I"].get<int>(), ClassSpace(ds->data.num_classes));
    } catch (const Json::exception& e) {
      return error(400, e.what());
    } catch (const InvalidArgument& e) {
      return error(400, e.what());
    }

    auto session = std::make_shared<Session>(*spec, ds, seed);
    session->order.resize(ds->data.size());
    for (std::size_t i = 0; i < session->order.size(); ++i) session->order[i] = i;
    Rng(seed).split(0).shuffle(std::span<std::size_t>(session->order));

    std::string token;
    {
      std::unique_lock lock(sessions_mutex_);
      do {
        token = new_token();
      } while (sessions_.contains(token));
      sessions_[token] = session;
    }
    return {201,
            Json{{"session_id", token},
                 {"qtype", std::string(to_string(spec->qtype()))},
                 {"I", spec->items()},
                 {"K", spec->num_classes()},
                 {"dataset", dataset_name},
                 {"seed", seed},
                 {"total", session->order.size()}},
            {}};
  }

  // Idempotent until the issued question is answered.
  ApiResponse question(const std::string& session_id) {
    auto session = find_session(session_id);
    if (!session) return error(404, "unknown session");
    std::lock_guard lock(session->mutex);
    if (!session->issued) {
      if (session->cursor >= session->order.size()) return {204, nullptr, {}};
      Rng stream = Rng(session->seed).split(1).split(session->cursor);
      Issued q;
      q.row = session->order[session->cursor];
      q.instance_id = session->dataset->data.instance_id(q.row);
      q.seed = stream();
      Rng draw(q.seed);
      q.question_set = draw_question_set(draw, session->spec);
      session->issued = std::move(q);
    }
    return {200, payload(*session), {}};
  }

  ApiResponse answer(const Json& body) {
    if (!body.is_object()) return error(400, "request body must be a JSON object");
    std::string session_id, instance_id;
    Answer ans = Answer::not_included();
    try {
      session_id = body.at("session").get<std::string>();
      instance_id = body.at("instance_id").get<std::string>();
    } catch (const Json::exception& e) {
      return error(400, e.what());
    }
    auto session = find_session(session_id);
    if (!session) return error(404, "unknown session");
    try {
      ans = answer_from_json(body.at("answer"));
    } catch (const Json::exception& e) {
      return error(400, e.what());
    } catch (const InvalidArgument& e) {
      return error(422, e.what());
    }

    std::lock_guard lock(session->mutex);
    if (session->answered_ids.contains(instance_id)) {
      return error(409, "instance '" + instance_id + "' was already answered in this session");
    }
    if (!session->issued || session->issued->instance_id != instance_id) {
      return error(404, "instance '" + instance_id + "' is not the issued question");
    }
    const Issued& q = *session->issued;
    LabelingEvent e;
    try {
      e.qa_label = assign_label(session->spec.qtype(), q.question_set, ans, session->spec.space());
    } catch (const ProtocolViolation& err) {
      return error(422, err.what());
    }
    e.instance_id = instance_id;
    e.qtype = session->spec.qtype();
    e.items = session->spec.items();
    e.question_set = q.question_set;
    e.answer = ans;
    e.seed = q.seed;
    validate_event(e, session->spec.space());

    StoredEvent stored{e, session->spec.num_classes(), current_timestamp(), "human"};
    try {
      persist(stored);
    } catch (const Error& err) {
      return error(500, err.what());
    }
    session->answered_ids.insert(instance_id);
    ++session->histogram[static_cast<int>(e.qa_label.size())];
    ++session->cursor;
    session->issued.reset();
    session->events.push_back(std::move(stored));
    return {200,
            Json{{"instance_id", instance_id},
                 {"qa_label", subset_to_json(e.qa_label)},
                 {"answered", session->answered_ids.size()},
                 {"remaining", session->order.size() - session->answered_ids.size()}},
            {}};
  }

  ApiResponse stats(const std::string& session_id) {
    auto session = find_session(session_id);
    if (!session) return error(404, "unknown session");
    std::lock_guard lock(session->mutex);
    Json hist = Json::object();
    for (const auto& [size, count] : session->histogram) hist[std::to_string(size)] = count;
    return {200,
            Json{{"answered", session->answered_ids.size()},
                 {"remaining", session->order.size() - session->answered_ids.size()},
                 {"label_size_histogram", hist}},
            {}};
  }

  ApiResponse datasets() const {
    std::shared_lock lock(sessions_mutex_);
    Json list = Json::array();
    for (const auto& [name, ds] : datasets_) {
      list.push_back({{"name", name},
                      {"K", ds->data.num_classes},
                      {"size", ds->data.size()},
                      {"class_names", ds->class_names}});
    }
    return {200, Json{{"datasets", list}}, {}};
  }

  // Events answered so far in one session, in answer order.
  std::vector<StoredEvent> session_events(const std::string& session_id) {
    auto session = find_session(session_id);
    if (!session) throw InvalidArgument("unknown session");
    std::lock_guard lock(session->mutex);
    return session->events;
  }

  ApiResponse handle(const ApiRequest& req) {
    ApiResponse r = route(req);
    r.headers["Access-Control-Allow-Origin"] = options_.allowed_origin;
    r.headers["Access-Control-Allow-Methods"] = "GET, POST, OPTIONS";
    r.headers["Access-Control-Allow-Headers"] = "Content-Type";
    return r;
  }

 private:
  struct Issued {
    std::size_t row = 0;
    std::string instance_id;
    LabelSubset question_set{1};
    std::uint64_t seed = 0;
  };

  struct Session {
    Session(QuestionSpec s, std::shared_ptr<const ServedDataset> d, std::uint64_t sd)
        : spec(s), dataset(std::move(d)), seed(sd) {}

    std::mutex mutex;
    QuestionSpec spec;
    std::shared_ptr<const ServedDataset> dataset;
    std::uint64_t seed;
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    std::optional<Issued> issued;
    std::unordered_set<std::string> answered_ids;
    std::map<int, std::size_t> histogram;
    std::vector<StoredEvent> events;
  };

  static ApiResponse error(int status, const std::string& message) {
    return {status, Json{{"error", message}}, {}};
  }

  std::shared_ptr<Session> find_session(const std::string& id) const {
    std::shared_lock lock(sessions_mutex_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  std::string new_token() {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string t;
    for (int i = 0; i < 2; ++i) {
      std::uint64_t v = token_rng_();
      for (int j = 0; j < 16; ++j, v >>= 4) t.push_back(kHex[v & 15]);
    }
    return t;
  }

  void persist(const StoredEvent& e) {
    if (options_.store_path.empty()) return;
    std::lock_guard lock(store_mutex_);
    append_events(options_.store_path, std::span(&e, 1));
  }

  static Json payload(const Session& s) {
    const Issued& q = *s.issued;
    const ImageDataset& data = s.dataset->data;
    const auto pixels_in = data.features.row(q.row);
    std::vector<std::uint8_t> pixels(pixels_in.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      pixels[i] =
          static_cast<std::uint8_t>(std::lround(std::clamp(pixels_in[i], 0.0, 1.0) * 255.0));
    }
    int width = data.image_cols, height = data.image_rows;
    if (width * height != static_cast<int>(pixels.size())) {
      width = static_cast<int>(pixels.size());
      height = 1;
    }
    Json j{{"instance_id", q.instance_id},
           {"image", base64_encode(encode_png_gray(width, height, pixels))},
           {"image_width", width},
           {"image_height", height},
           {"qtype", std::string(to_string(s.spec.qtype()))},
           {"I", s.spec.items()},
           {"K", s.spec.num_classes()},
           {"question_classes", subset_to_json(q.question_set)},
           {"position", s.cursor},
           {"total", s.order.size()}};
    if (!s.dataset->class_names.empty()) {
      Json names = Json::array();
      for (ClassId c : q.question_set) names.push_back(s.dataset->class_names[c - 1]);
      j["class_names"] = names;
    }
    return j;
  }

  ApiResponse route(const ApiRequest& req) {
    if (req.method == "OPTIONS") return {204, nullptr, {}};
    const auto session_param = [&]() -> std::string {
      auto it = req.query.find("session");
      return it == req.query.end() ? std::string{} : it->second;
    };
    const auto parse_body = [&](Json& out) {
      out = Json::parse(req.body, nullptr, false);
      return !out.is_discarded();
    };
    Json body;
    if (req.path == "/api/session") {
      if (req.method != "POST") return error(405, "use POST");
      if (!parse_body(body)) return error(400, "malformed JSON body");
      return create_session(body);
    }
    if (req.path == "/api/question") {
      if (req.method != "GET") return error(405, "use GET");
      return question(session_param());
    }
    if (req.path == "/api/answer") {
      if (req.method != "POST") return error(405, "use POST");
      if (!parse_body(body)) return error(400, "malformed JSON body");
      return answer(body);
    }
    if (req.path == "/api/stats") {
      if (req.method != "GET") return error(405, "use GET");
      return stats(session_param());
    }
    if (req.path == "/api/datasets") {
      if (req.method != "GET") return error(405, "use GET");
      return datasets();
    }
    return error(404, "no route for " + req.path);
  }

  ServiceOptions options_;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<const ServedDataset>> datasets_;
  std::string default_dataset_;
  std::unordered_map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex store_mutex_;
  std::mt19937_64 token_rng_{std::random_device{}()};
};

}  // namespace qalabel
