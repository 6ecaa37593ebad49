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

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <mutex>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qalabel/combinatorics.hpp"
#include "qalabel/error.hpp"
#include "qalabel/labeling.hpp"
#include "qalabel/matrix.hpp"
#include "qalabel/model.hpp"
#include "qalabel/rng.hpp"

namespace qalabel {

using Json = nlohmann::ordered_json;

// n images of rows x cols pixels flattened to d = rows * cols features in
// [0, 1], with 1-based labels. origin[i] is the row index in the source file
// and doubles as the instance id.
struct ImageDataset {
  Matrix features;
  std::vector<ClassId> labels;
  int num_classes = 0;
  int image_rows = 0;
  int image_cols = 0;
  std::vector<std::size_t> origin;
  std::string source;

  std::size_t size() const noexcept { return labels.size(); }
  std::string instance_id(std::size_t i) const { return std::to_string(origin[i]); }

  std::vector<std::string> instance_ids() const {
    std::vector<std::string> ids;
    ids.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) ids.push_back(instance_id(i));
    return ids;
  }

  // Row index by instance id, or nullopt.
  std::optional<std::size_t> find(std::string_view id) const {
    std::size_t value = 0;
    if (id.empty() || id.size() > 19) return std::nullopt;
    for (char c : id) {
      if (c < '0' || c > '9') return std::nullopt;
      value = value * 10 + static_cast<std::size_t>(c - '0');
    }
    auto it = std::lower_bound(origin.begin(), origin.end(), value);
    if (it != origin.end() && *it == value) return static_cast<std::size_t>(it - origin.begin());
    // origin is sorted for loaded and subsampled data; fall back otherwise.
    auto lin = std::find(origin.begin(), origin.end(), value);
    if (lin == origin.end()) return std::nullopt;
    return static_cast<std::size_t>(lin - origin.begin());
  }

  LabeledSet labeled() const { return {features, labels}; }
};

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

// gzip is recognised by its magic bytes, not the file name.
inline std::string maybe_gunzip(std::string bytes) {
  if (bytes.size() < 2 || static_cast<unsigned char>(bytes[0]) != 0x1f ||
      static_cast<unsigned char>(bytes[1]) != 0x8b) {
    return bytes;
  }
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw Error("zlib init failed");
  std::string out;
  char buf[1 << 16];
  zs.next_in = reinterpret_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  int rc = Z_OK;
  do {
    zs.next_out = reinterpret_cast<Bytef*>(buf);
    zs.avail_out = sizeof(buf);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      const auto at = static_cast<std::size_t>(zs.total_in);
      inflateEnd(&zs);
      throw FormatError("corrupt gzip stream", at);
    }
    out.append(buf, sizeof(buf) - zs.avail_out);
  } while (rc != Z_STREAM_END && (zs.avail_in > 0 || zs.avail_out == 0));
  const bool complete = rc == Z_STREAM_END;
  const auto at = static_cast<std::size_t>(zs.total_in);
  inflateEnd(&zs);
  if (!complete) throw FormatError("truncated gzip stream", at);
  return out;
}

inline std::uint32_t read_be32(std::string_view b, std::size_t pos, const char* what) {
  if (pos + 4 > b.size()) throw FormatError(std::string("truncated IDX ") + what, pos);
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos])) << 24) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos + 1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos + 2])) << 8) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos + 3]));
}

inline void put_be32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// IDX ubyte images + labels (optionally gzipped). Pixels are scaled by 1/255
// and the 0-based digit labels become classes 1..K. K defaults to the
// largest label + 1 (at least 2).
inline ImageDataset parse_idx(std::string_view images, std::string_view labels,
                              std::optional<int> num_classes = std::nullopt) {
  if (detail::read_be32(images, 0, "image header") != kIdxImagesMagic) {
    throw FormatError("bad IDX image magic (expected 0x00000803)", 0);
  }
  const auto n = detail::read_be32(images, 4, "image header");
  const auto rows = detail::read_be32(images, 8, "image header");
  const auto cols = detail::read_be32(images, 12, "image header");
  if (detail::read_be32(labels, 0, "label header") != kIdxLabelsMagic) {
    throw FormatError("bad IDX label magic (expected 0x00000801)", 0);
  }
  const auto n_labels = detail::read_be32(labels, 4, "label header");
  if (n != n_labels) {
    throw FormatError("image count " + std::to_string(n) + " != label count " +
                          std::to_string(n_labels), 4);
  }
  const std::size_t d = static_cast<std::size_t>(rows) * cols;
  const std::size_t need_images = 16 + static_cast<std::size_t>(n) * d;
  if (images.size() < need_images) {
    throw FormatError("truncated IDX image data: need " + std::to_string(need_images) +
                          " bytes", images.size());
  }
  if (labels.size() < 8 + static_cast<std::size_t>(n)) {
    throw FormatError("truncated IDX label data", labels.size());
  }
  ImageDataset ds;
  ds.image_rows = static_cast<int>(rows);
  ds.image_cols = static_cast<int>(cols);
  ds.features = Matrix(n, d);
  ds.labels.resize(n);
  ds.origin.resize(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto raw = static_cast<unsigned char>(labels[8 + i]);
    ds.labels[i] = static_cast<ClassId>(raw) + 1;
    max_label = std::max(max_label, static_cast<int>(raw));
    ds.origin[i] = i;
  }
  const auto* px = reinterpret_cast<const unsigned char*>(images.data() + 16);
  for (std::size_t j = 0; j < n * d; ++j) ds.features.data[j] = px[j] / 255.0;
  ds.num_classes = num_classes.value_or(std::max(2, max_label + 1));
  if (ds.num_classes < max_label + 1) {
    throw FormatError("label " + std::to_string(max_label) + " exceeds K=" +
                          std::to_string(ds.num_classes), 8);
  }
  return ds;
}

inline ImageDataset load_idx(const std::string& images_path, const std::string& labels_path,
                             std::optional<int> num_classes = std::nullopt) {
  ImageDataset ds = parse_idx(detail::maybe_gunzip(detail::read_file(images_path)),
                              detail::maybe_gunzip(detail::read_file(labels_path)),
                              num_classes);
  ds.source = images_path;
  return ds;
}

// Inverse of parse_idx, used to build fixtures. Pixels are rounded to bytes.
inline std::pair<std::string, std::string> encode_idx(const ImageDataset& ds) {
  std::string images, labels;
  const auto n = static_cast<std::uint32_t>(ds.size());
  detail::put_be32(images, kIdxImagesMagic);
  detail::put_be32(images, n);
  detail::put_be32(images, static_cast<std::uint32_t>(ds.image_rows));
  detail::put_be32(images, static_cast<std::uint32_t>(ds.image_cols));
  for (double v : ds.features.data) {
    images.push_back(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  detail::put_be32(labels, kIdxLabelsMagic);
  detail::put_be32(labels, n);
  for (ClassId y : ds.labels) labels.push_back(static_cast<char>(y - 1));
  return {images, labels};
}

inline void write_idx(const ImageDataset& ds, const std::string& images_path,
                      const std::string& labels_path) {
  const auto [images, labels] = encode_idx(ds);
  for (const auto& [path, bytes] :
       {std::pair{images_path, images}, std::pair{labels_path, labels}}) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + path + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
}

inline ImageDataset select_rows(const ImageDataset& ds, std::span<const std::size_t> rows) {
  ImageDataset out;
  out.num_classes = ds.num_classes;
  out.image_rows = ds.image_rows;
  out.image_cols = ds.image_cols;
  out.source = ds.source;
  out.features = Matrix(rows.size(), ds.features.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(ds.features.row(rows[i]).begin(), ds.features.cols, out.features.row(i).begin());
    out.labels.push_back(ds.labels[rows[i]]);
    out.origin.push_back(ds.origin[rows[i]]);
  }
  return out;
}

// Exactly per_class rows of every class, uniformly without replacement.
// Rows keep their original relative order.
inline ImageDataset subsample_per_class(const ImageDataset& ds, int per_class, Rng& rng) {
  if (per_class < 1) throw InvalidArgument("per_class must be >= 1");
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.num_classes));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    by_class[static_cast<std::size_t>(ds.labels[i] - 1)].push_back(i);
  }
  std::vector<std::size_t> chosen;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& pool = by_class[c];
    if (static_cast<int>(pool.size()) < per_class) {
      throw InvalidArgument("class " + std::to_string(c + 1) + " has only " +
                            std::to_string(pool.size()) + " instances, need " +
                            std::to_string(per_class));
    }
    for (std::size_t i = 0; i < static_cast<std::size_t>(per_class); ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    chosen.insert(chosen.end(), pool.begin(), pool.begin() + per_class);
  }
  std::sort(chosen.begin(), chosen.end());
  return select_rows(ds, chosen);
}

// Unit-variance Gaussian clusters whose means are pairwise `separation`
// apart (on scaled basis vectors when d >= K, else on a circle with
// neighbouring means `separation` apart), mapped into [0, 1] by a fixed
// affine transform and clipped.
inline ImageDataset synthetic_blobs(int num_classes, int d, int per_class, double separation,
                                    Rng& rng) {
  if (num_classes < 2 || d < 2 || per_class < 1 || !(separation >= 0.0)) {
    throw InvalidArgument("synthetic_blobs needs K >= 2, d >= 2, per_class >= 1");
  }
  const auto k = static_cast<std::size_t>(num_classes);
  Matrix means(k, static_cast<std::size_t>(d));
  if (d >= num_classes) {
    for (std::size_t c = 0; c < k; ++c) means(c, c) = separation / std::numbers::sqrt2;
  } else {
    const double radius = separation / (2.0 * std::sin(std::numbers::pi / num_classes));
    for (std::size_t c = 0; c < k; ++c) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / num_classes;
      means(c, 0) = radius * std::cos(angle);
      means(c, 1) = radius * std::sin(angle);
    }
  }
  double extent = 0.0;
  for (double v : means.data) extent = std::max(extent, std::abs(v));
  const double scale = 1.0 / (2.0 * (extent + 4.0));

  ImageDataset ds;
  ds.num_classes = num_classes;
  ds.image_rows = 1;
  ds.image_cols = d;
  ds.source = "synthetic";
  const std::size_t n = k * static_cast<std::size_t>(per_class);
  ds.features = Matrix(n, static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % k;
    ds.labels.push_back(static_cast<ClassId>(c) + 1);
    ds.origin.push_back(i);
    for (std::size_t j = 0; j < static_cast<std::size_t>(d); ++j) {
      ds.features(i, j) = std::clamp(0.5 + scale * (means(c, j) + rng.normal()), 0.0, 1.0);
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Labeling-event store: one JSON object per line, append-only.

struct StoredEvent {
  LabelingEvent event;
  int num_classes = 0;
  std::string timestamp;        // RFC 3339, UTC
  std::string origin = "simulated";  // or "human"

  friend bool operator==(const StoredEvent&, const StoredEvent&) = default;
};

// UTC now, or SOURCE_DATE_EPOCH when set so reruns produce identical files.
inline std::string current_timestamp() {
  std::time_t t = 0;
  if (const char* fixed = std::getenv("SOURCE_DATE_EPOCH"); fixed && *fixed) {
    t = static_cast<std::time_t>(std::strtoll(fixed, nullptr, 10));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline Json answer_to_json(const Answer& a) {
  switch (a.kind()) {
    case Answer::Kind::chose: return {{"type", "chose"}, {"class", a.chosen()}};
    case Answer::Kind::not_included: return {{"type", "not_included"}};
    case Answer::Kind::yes: return {{"type", "yes"}};
    case Answer::Kind::no: return {{"type", "no"}};
  }
  return nullptr;
}

inline Answer answer_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
    throw InvalidArgument("answer must be an object with a string 'type'");
  }
  const auto type = j["type"].get<std::string>();
  if (type == "chose") {
    if (!j.contains("class") || !j["class"].is_number_integer()) {
      throw InvalidArgument("chose answer needs an integer 'class'");
    }
    return Answer::chose(j["class"].get<ClassId>());
  }
  if (type == "not_included") return Answer::not_included();
  if (type == "yes") return Answer::yes();
  if (type == "no") return Answer::no();
  throw InvalidArgument("unknown answer type '" + type + "'");
}

inline Json subset_to_json(const LabelSubset& s) {
  return Json(std::vector<ClassId>(s.begin(), s.end()));
}

inline LabelSubset subset_from_json(const Json& j) {
  if (!j.is_array()) throw InvalidArgument("label set must be an array");
  std::vector<ClassId> ids;
  for (const auto& v : j) {
    if (!v.is_number_integer()) throw InvalidArgument("class ids must be integers");
    ids.push_back(v.get<ClassId>());
  }
  return LabelSubset(std::move(ids));
}

inline Json stored_event_to_json(const StoredEvent& s) {
  const auto& e = s.event;
  return Json{{"instance_id", e.instance_id},
              {"qtype", std::string(to_string(e.qtype))},
              {"I", e.items},
              {"K", s.num_classes},
              {"question_set", subset_to_json(e.question_set)},
              {"answer", answer_to_json(e.answer)},
              {"qa_label", subset_to_json(e.qa_label)},
              {"seed", e.seed},
              {"timestamp", s.timestamp},
              {"origin", s.origin}};
}

// Parses and validates one store line; K comes from the line or the caller.
inline StoredEvent stored_event_from_json(const Json& j,
                                          std::optional<int> num_classes = std::nullopt) {
  if (!j.is_object()) throw InvalidArgument("event must be a JSON object");
  auto need = [&](const char* key) -> const Json& {
    if (!j.contains(key)) throw InvalidArgument(std::string("missing field '") + key + "'");
    return j[key];
  };
  StoredEvent s;
  s.event.instance_id = need("instance_id").get<std::string>();
  s.event.qtype = parse_question_type(need("qtype").get<std::string>());
  s.event.items = need("I").get<int>();
  s.event.question_set = subset_from_json(need("question_set"));
  s.event.answer = answer_from_json(need("answer"));
  s.event.qa_label = subset_from_json(need("qa_label"));
  s.event.seed = j.value("seed", std::uint64_t{0});
  s.timestamp = j.value("timestamp", std::string{});
  s.origin = j.value("origin", std::string{"simulated"});
  if (s.origin != "simulated" && s.origin != "human") {
    throw InvalidArgument("origin must be 'simulated' or 'human'");
  }
  if (j.contains("K")) {
    s.num_classes = j["K"].get<int>();
    if (num_classes && *num_classes != s.num_classes) {
      throw InvalidArgument("event K=" + std::to_string(s.num_classes) +
                            " differs from expected K=" + std::to_string(*num_classes));
    }
  } else if (num_classes) {
    s.num_classes = *num_classes;
  } else {
    throw InvalidArgument("missing field 'K' and no class count supplied");
  }
  return s;
}

namespace detail {

// Advisory exclusive lock on "<path>.lock" for the lifetime of the object.
class StoreLock {
 public:
  explicit StoreLock(const std::string& store_path) {
    const std::string lock_path = store_path + ".lock";
    fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd_ < 0) throw Error("cannot open lock file " + lock_path);
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw Error("cannot lock " + lock_path);
    }
  }
  ~StoreLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  StoreLock(const StoreLock&) = delete;
  StoreLock& operator=(const StoreLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace detail

inline void append_events(const std::string& path, std::span<const StoredEvent> events) {
  std::string buffer;
  for (const auto& s : events) {
    buffer += stored_event_to_json(s).dump();
    buffer += '\n';
  }
  detail::StoreLock lock(path);
  std::ofstream os(path, std::ios::binary | std::ios::app);
  if (!os) throw Error("cannot open " + path + " for appending");
  os.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
  os.flush();
  if (!os) throw Error("failed appending to " + path);
}

// Reads the whole store. Every line must parse (ParseError otherwise) and
// satisfy the labeling rules (StoredProtocolViolation otherwise); both
// carry the 1-based line number.
inline std::vector<StoredEvent> read_events(const std::string& path,
                                            std::optional<int> num_classes = std::nullopt) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  std::vector<StoredEvent> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    StoredEvent s;
    try {
      s = stored_event_from_json(Json::parse(line), num_classes);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), line_no);
    } catch (const ProtocolViolation& e) {
      throw StoredProtocolViolation(e.what(), line_no);
    } catch (const InvalidArgument& e) {
      throw ParseError(e.what(), line_no);
    }
    try {
      validate_event(s.event, ClassSpace(s.num_classes));
    } catch (const Error& e) {
      throw StoredProtocolViolation(e.what(), line_no);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace qalabel
