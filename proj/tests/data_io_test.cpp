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

#include "qalabel/data_io.hpp"

#include <gtest/gtest.h>
#include <zlib.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "qalabel/labeling.hpp"
#include "qalabel/model.hpp"
#include "test_support.hpp"

namespace qalabel {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("qalabel_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

std::string gzip(const std::string& raw) {
  z_stream zs{};
  EXPECT_EQ(deflateInit2(&zs, Z_BEST_SPEED, Z_DEFLATED, 16 + MAX_WBITS, 8, Z_DEFAULT_STRATEGY),
            Z_OK);
  std::string out(deflateBound(&zs, raw.size()) + 32, '\0');
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(raw.data()));
  zs.avail_in = static_cast<uInt>(raw.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  EXPECT_EQ(deflate(&zs, Z_FINISH), Z_STREAM_END);
  out.resize(zs.total_out);
  deflateEnd(&zs);
  return out;
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream(path, std::ios::binary) << bytes;
}

// Four 2x3 images with hand-picked bytes, written byte by byte.
std::pair<std::string, std::string> fixture_bytes() {
  std::string images = {0, 0, 8, 3, 0, 0, 0, 4, 0, 0, 0, 2, 0, 0, 0, 3};
  for (int i = 0; i < 24; ++i) images.push_back(static_cast<char>(i * 11));
  std::string labels = {0, 0, 8, 1, 0, 0, 0, 4, 7, 0, 9, 3};
  return {images, labels};
}

TEST(Idx, ParsesHandBuiltFixture) {
  const auto [images, labels] = fixture_bytes();
  const auto ds = parse_idx(images, labels);
  EXPECT_EQ(ds.size(), 4u);
  EXPECT_EQ(ds.features.cols, 6u);
  EXPECT_EQ(ds.image_rows, 2);
  EXPECT_EQ(ds.image_cols, 3);
  EXPECT_EQ(ds.num_classes, 10);
  EXPECT_EQ(ds.labels, (std::vector<ClassId>{8, 1, 10, 4}));
  for (int i = 0; i < 24; ++i) EXPECT_EQ(ds.features.data[i], i * 11 / 255.0);
  EXPECT_EQ(ds.instance_id(2), "2");
}

TEST(Idx, RoundTripIsByteExact) {
  const auto [images, labels] = fixture_bytes();
  const auto [images2, labels2] = encode_idx(parse_idx(images, labels));
  EXPECT_EQ(images2, images);
  EXPECT_EQ(labels2, labels);

  TempDir dir;
  const auto ds = parse_idx(images, labels);
  write_idx(ds, dir.file("img"), dir.file("lbl"));
  const auto back = load_idx(dir.file("img"), dir.file("lbl"));
  EXPECT_EQ(back.features, ds.features);
  EXPECT_EQ(back.labels, ds.labels);
}

TEST(Idx, GzipIsSniffedByContent) {
  const auto [images, labels] = fixture_bytes();
  TempDir dir;
  write_bytes(dir.file("images.bin"), gzip(images));
  write_bytes(dir.file("labels.idx"), labels);
  const auto ds = load_idx(dir.file("images.bin"), dir.file("labels.idx"));
  EXPECT_EQ(ds.features, parse_idx(images, labels).features);

  auto broken = gzip(images);
  broken.resize(broken.size() / 2);
  write_bytes(dir.file("cut.gz"), broken);
  EXPECT_THROW(load_idx(dir.file("cut.gz"), dir.file("labels.idx")), FormatError);
}

TEST(Idx, RejectsMalformedFiles) {
  const auto [images, labels] = fixture_bytes();
  try {
    parse_idx(images.substr(0, 30), labels);
    FAIL() << "truncated images accepted";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 30u);
  }
  EXPECT_THROW(parse_idx(images.substr(0, 10), labels), FormatError);
  EXPECT_THROW(parse_idx(images, labels.substr(0, 10)), FormatError);
  auto bad_magic = images;
  bad_magic[3] = 1;
  EXPECT_THROW(parse_idx(bad_magic, labels), FormatError);
  EXPECT_THROW(parse_idx(labels, labels), FormatError);
  auto count = labels;
  count[7] = 3;
  EXPECT_THROW(parse_idx(images, count), FormatError);
  EXPECT_THROW(parse_idx(images, labels, 5), FormatError);
  EXPECT_EQ(parse_idx(images, labels, 12).num_classes, 12);
  TempDir dir;
  EXPECT_THROW(load_idx(dir.file("missing"), dir.file("missing2")), Error);
}

ImageDataset tiny_dataset(int k, int per_class) {
  Rng rng(0);
  return synthetic_blobs(k, 2, per_class, 1.0, rng);
}

TEST(Subsample, ExactCountsAndDeterminism) {
  const auto ds = tiny_dataset(4, 10);
  Rng a(5), b(5);
  const auto s1 = subsample_per_class(ds, 3, a);
  const auto s2 = subsample_per_class(ds, 3, b);
  EXPECT_EQ(s1.origin, s2.origin);
  EXPECT_EQ(s1.size(), 12u);
  std::vector<int> counts(4, 0);
  for (ClassId y : s1.labels) ++counts[y - 1];
  EXPECT_EQ(counts, (std::vector<int>{3, 3, 3, 3}));
  EXPECT_TRUE(std::is_sorted(s1.origin.begin(), s1.origin.end()));
  for (std::size_t i = 0; i < s1.size(); ++i) {
    EXPECT_EQ(s1.labels[i], ds.labels[s1.origin[i]]);
    EXPECT_EQ(s1.features.row(i)[0], ds.features.row(s1.origin[i])[0]);
  }
}

TEST(Subsample, FullClassAndInsufficientPopulation) {
  const auto ds = tiny_dataset(3, 4);
  Rng rng(1);
  EXPECT_EQ(subsample_per_class(ds, 4, rng).origin, ds.origin);
  EXPECT_THROW(subsample_per_class(ds, 5, rng), InvalidArgument);
  EXPECT_THROW(subsample_per_class(ds, 0, rng), InvalidArgument);
}

TEST(Subsample, InclusionFrequenciesAreUniform) {
  const auto ds = tiny_dataset(3, 5);
  const int runs = 2000;
  std::vector<int> hits(ds.size(), 0);
  Rng rng(77);
  for (int r = 0; r < runs; ++r) {
    for (std::size_t o : subsample_per_class(ds, 2, rng).origin) ++hits[o];
  }
  const double p = 2.0 / 5.0;
  const double se = testing::frequency_se(p, runs);
  for (int h : hits) EXPECT_LE(std::abs(h / static_cast<double>(runs) - p), 3.0 * se);
}

TEST(SyntheticBlobs, ShapeAndRange) {
  Rng rng(3);
  const auto ds = synthetic_blobs(5, 3, 7, 4.0, rng);
  EXPECT_EQ(ds.size(), 35u);
  EXPECT_EQ(ds.features.cols, 3u);
  EXPECT_EQ(ds.num_classes, 5);
  for (double v : ds.features.data) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  std::vector<int> counts(5, 0);
  for (ClassId y : ds.labels) ++counts[y - 1];
  EXPECT_EQ(counts, std::vector<int>(5, 7));
  EXPECT_THROW(synthetic_blobs(1, 3, 7, 4.0, rng), InvalidArgument);
  EXPECT_THROW(synthetic_blobs(3, 1, 7, 4.0, rng), InvalidArgument);
}

double blob_accuracy(double separation, int k, int d) {
  Rng rng(21);
  const auto tr = synthetic_blobs(k, d, 200, separation, rng);
  const auto te = synthetic_blobs(k, d, 200, separation, rng);
  TrainingSet data{tr.features, {}};
  for (ClassId y : tr.labels) data.targets.push_back(LabelSubset{y});
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 64;
  cfg.hidden = 16;
  cfg.seed = 4;
  const auto test = te.labeled();
  return train(data, k, Objective::ordinary(), cfg, &test).metrics.back().test_accuracy;
}

TEST(SyntheticBlobs, SeparatedClustersAreLearnable) {
  EXPECT_GT(blob_accuracy(6.0, 3, 8), 0.95);
}

TEST(SyntheticBlobs, CoincidentClustersAreNot) {
  EXPECT_NEAR(blob_accuracy(0.0, 3, 8), 1.0 / 3.0, 0.05);
}

std::vector<StoredEvent> sample_events(std::size_t n) {
  const QuestionSpec spec(QuestionType::is_in, 2, ClassSpace(5));
  const auto events = simulate_dataset(
      Rng(4), spec, AnnotatorModel::stochastic(PosteriorVector::uniform(ClassSpace(5))),
      testing::numbered_ids(n));
  std::vector<StoredEvent> out;
  for (const auto& e : events) out.push_back({e, 5, "2026-01-02T03:04:05Z", "simulated"});
  return out;
}

TEST(EventStore, RoundTripPreservesEveryField) {
  TempDir dir;
  const auto path = dir.file("events.jsonl");
  const auto events = sample_events(50);
  append_events(path, std::span(events).first(20));
  append_events(path, std::span(events).subspan(20));
  EXPECT_EQ(read_events(path), events);
  EXPECT_EQ(read_events(path, 5), events);
  EXPECT_THROW(read_events(path, 6), ParseError);
}

TEST(EventStore, WireFormat) {
  LabelingEvent e{"17", QuestionType::which_one, 1, LabelSubset{3}, Answer::chose(3),
                  LabelSubset{3}, 99};
  const auto j = stored_event_to_json({e, 4, "2026-01-02T03:04:05Z", "human"});
  EXPECT_EQ(j.dump(),
            R"({"instance_id":"17","qtype":"which_one","I":1,"K":4,"question_set":[3],)"
            R"("answer":{"type":"chose","class":3},"qa_label":[3],"seed":99,)"
            R"("timestamp":"2026-01-02T03:04:05Z","origin":"human"})");
  EXPECT_EQ(stored_event_from_json(j).event, e);
}

TEST(EventStore, CorruptedLineReportsItsNumber) {
  TempDir dir;
  const auto path = dir.file("events.jsonl");
  append_events(path, sample_events(3));
  {
    std::ofstream os(path, std::ios::app);
    os << "{\"instance_id\": \"oops\"\n";
  }
  try {
    read_events(path);
    FAIL() << "corrupted line accepted";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
}

TEST(EventStore, InconsistentLabelIsAProtocolViolation) {
  TempDir dir;
  const auto path = dir.file("events.jsonl");
  append_events(path, sample_events(2));
  // A human which-one answer naming a class outside the question set.
  LabelingEvent bad{"h1", QuestionType::which_one, 2, LabelSubset{1, 2}, Answer::chose(4),
                    LabelSubset{4}, 0};
  {
    std::ofstream os(path, std::ios::app);
    os << stored_event_to_json({bad, 5, "2026-01-02T03:04:05Z", "human"}).dump() << "\n";
  }
  try {
    read_events(path);
    FAIL() << "inconsistent event accepted";
  } catch (const StoredProtocolViolation& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(EventStore, RejectsUnknownOriginAndMissingClassCount) {
  auto j = stored_event_to_json(sample_events(1)[0]);
  j["origin"] = "robot";
  EXPECT_THROW(stored_event_from_json(j), InvalidArgument);
  j = stored_event_to_json(sample_events(1)[0]);
  j.erase("K");
  EXPECT_THROW(stored_event_from_json(j), InvalidArgument);
  EXPECT_EQ(stored_event_from_json(j, 5).num_classes, 5);
}

TEST(Timestamp, HonoursSourceDateEpoch) {
  ::setenv("SOURCE_DATE_EPOCH", "86400", 1);
  EXPECT_EQ(current_timestamp(), "1970-01-02T00:00:00Z");
  ::unsetenv("SOURCE_DATE_EPOCH");
  EXPECT_EQ(current_timestamp().size(), 20u);
}

}  // namespace
}  // namespace qalabel
