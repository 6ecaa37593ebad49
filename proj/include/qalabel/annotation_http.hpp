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

// Binds AnnotationService to cpp-httplib. Kept apart from annotation.hpp so
// the service can be used and tested without a socket.

#include <httplib.h>

#include <string>

#include "qalabel/annotation.hpp"

namespace qalabel {

inline void bind_annotation_routes(httplib::Server& server, AnnotationService& service) {
  const auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
    ApiRequest api;
    api.method = req.method;
    api.path = req.path;
    for (const auto& [key, value] : req.params) api.query.emplace(key, value);
    api.body = req.body;
    const ApiResponse out = service.handle(api);
    res.status = out.status;
    for (const auto& [key, value] : out.headers) res.set_header(key, value);
    if (!out.body.is_null()) res.set_content(out.body.dump(), "application/json");
  };
  for (const char* path :
       {"/api/session", "/api/question", "/api/answer", "/api/stats", "/api/datasets"}) {
    server.Get(path, forward);
    server.Post(path, forward);
    server.Options(path, forward);
  }
}

// Blocks until server.stop() is called from another thread. An empty
// ui_dir serves the API only.
inline bool serve_annotation(httplib::Server& server, AnnotationService& service,
                             const std::string& host, int port,
                             const std::string& ui_dir = {}) {
  bind_annotation_routes(server, service);
  if (!ui_dir.empty() && !server.set_mount_point("/", ui_dir)) {
    throw InvalidArgument("cannot serve UI from " + ui_dir);
  }
  return server.listen(host, port);
}

}  // namespace qalabel
