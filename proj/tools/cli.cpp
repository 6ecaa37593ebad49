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

#include "cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "qalabel/annotation_http.hpp"
#include "qalabel/bounds.hpp"
#include "qalabel/data_io.hpp"
#include "qalabel/labeling.hpp"
#include "qalabel/model.hpp"
#include "qalabel/verify.hpp"

namespace qalabel::cli {
namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Everything a command can be configured with. Keys in a --config JSON file
// are the flag names with '-' replaced by '_'.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string qtype = "which_one";
  int items = 1;
  int k = 10;
  int k_min = 2;
  std::string dataset_images, dataset_labels, test_images, test_labels;
  int per_class = 0;  // 0: whole IDX file, or 200 per class for synthetic data
  int test_per_class = 100;
  int blobs_d = 16;
  double blobs_separation = 6.0;
  std::string out = ".";
  std::string events;
  std::string params;
  // Training.
  int epochs = 800;
  int repetitions = 5;
  int batch_size = 500;
  int hidden = 500;
  double learning_rate = 1e-2;
  double weight_decay = 1e-3;
  int eval_every = 1;
  // Verification.
  int posteriors = 100;
  double perturb_coefficient = 0.0;
  // Bounds.
  double rho = 1.0;
  double c_l = 2.0;
  double delta = 0.05;
  double n = 10000.0;
  double rad_sum = -1.0;  // negative: derived from the kernel bound
  double kernel_r = 1.0;
  double kernel_lambda = 1.0;
  // Serving.
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string ui_dir;
  std::string allowed_origin = "*";
};

using Member = std::variant<int RunConfig::*, double RunConfig::*, std::string RunConfig::*,
                            std::uint64_t RunConfig::*>;

struct Field {
  const char* flag;  // without leading dashes
  Member member;
  const char* help;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      {"seed", &RunConfig::seed, "Seed for every random choice"},
      {"qtype", &RunConfig::qtype, "which_one or is_in (train also accepts ordinary)"},
      {"I", &RunConfig::items, "Number of question items"},
      {"K", &RunConfig::k, "Number of classes (verify: largest K checked)"},
      {"K-min", &RunConfig::k_min, "Smallest K checked by verify"},
      {"dataset-images", &RunConfig::dataset_images, "IDX image file (gzip allowed)"},
      {"dataset-labels", &RunConfig::dataset_labels, "IDX label file (gzip allowed)"},
      {"test-images", &RunConfig::test_images, "IDX test image file"},
      {"test-labels", &RunConfig::test_labels, "IDX test label file"},
      {"per-class", &RunConfig::per_class, "Instances drawn per class (0: all)"},
      {"test-per-class", &RunConfig::test_per_class, "Synthetic test instances per class"},
      {"blobs-d", &RunConfig::blobs_d, "Synthetic feature dimension"},
      {"blobs-separation", &RunConfig::blobs_separation, "Synthetic cluster separation"},
      {"out", &RunConfig::out, "Output directory"},
      {"events", &RunConfig::events, "Event store (train: labels to learn from)"},
      {"params", &RunConfig::params, "Parameter file to evaluate"},
      {"epochs", &RunConfig::epochs, "Training epochs"},
      {"repetitions", &RunConfig::repetitions, "Independent training runs"},
      {"batch-size", &RunConfig::batch_size, "Mini-batch size"},
      {"hidden", &RunConfig::hidden, "Hidden units"},
      {"learning-rate", &RunConfig::learning_rate, "Adam step size"},
      {"weight-decay", &RunConfig::weight_decay, "L2 weight decay"},
      {"eval-every", &RunConfig::eval_every, "Epochs between test evaluations"},
      {"posteriors", &RunConfig::posteriors, "Random posteriors per K"},
      {"perturb-coefficient", &RunConfig::perturb_coefficient,
       "Offset added to the rewriting coefficient (negative control)"},
      {"rho", &RunConfig::rho, "Lipschitz constant"},
      {"c-l", &RunConfig::c_l, "Upper bound of the base loss"},
      {"delta", &RunConfig::delta, "Confidence parameter"},
      {"n", &RunConfig::n, "Number of training samples"},
      {"rad-sum", &RunConfig::rad_sum, "Sum of per-class Rademacher complexities"},
      {"kernel-r", &RunConfig::kernel_r, "Kernel radius, used when --rad-sum is not set"},
      {"kernel-lambda", &RunConfig::kernel_lambda, "Weight norm bound for the kernel model"},
      {"host", &RunConfig::host, "Bind address"},
      {"port", &RunConfig::port, "Port"},
      {"ui-dir", &RunConfig::ui_dir, "Directory with the browser UI to serve at /"},
      {"allowed-origin", &RunConfig::allowed_origin, "CORS origin"},
  };
  return all;
}

std::string json_key(const std::string& flag) {
  std::string key = flag;
  for (char& c : key) {
    if (c == '-') c = '_';
  }
  return key;
}

void apply_json(RunConfig& cfg, const Json& j, const std::vector<std::string>& allowed) {
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    const Field* match = nullptr;
    for (const auto& f : fields()) {
      if (json_key(f.flag) == key &&
          std::find(allowed.begin(), allowed.end(), f.flag) != allowed.end()) {
        match = &f;
      }
    }
    if (!match) throw UsageError("unknown config key '" + key + "'");
    try {
      std::visit(
          [&](auto member) {
            using T = std::remove_reference_t<decltype(cfg.*member)>;
            if constexpr (std::is_same_v<T, std::string>) {
              cfg.*member = value.get<std::string>();
            } else if constexpr (std::is_floating_point_v<T>) {
              if (!value.is_number()) throw UsageError("config key '" + key + "' must be a number");
              cfg.*member = value.get<double>();
            } else {
              if (!value.is_number_integer()) {
                throw UsageError("config key '" + key + "' must be an integer");
              }
              cfg.*member = value.get<T>();
            }
          },
          match->member);
    } catch (const Json::exception&) {
      throw UsageError("config key '" + key + "' has the wrong type");
    }
  }
}

Json config_to_json(const RunConfig& cfg, const std::vector<std::string>& used) {
  Json j = Json::object();
  for (const auto& f : fields()) {
    if (std::find(used.begin(), used.end(), f.flag) == used.end()) continue;
    std::visit([&](auto member) { j[json_key(f.flag)] = cfg.*member; }, f.member);
  }
  return j;
}

// One subcommand: its CLI11 handle, the flags it accepts, and the values
// parsed from them (only copied over the config where the flag was given).
struct Command {
  CLI::App* app = nullptr;
  std::vector<std::string> flags;
  RunConfig parsed;
  std::string config_path;
  std::map<std::string, CLI::Option*> options;
};

void add_fields(Command& cmd, std::vector<std::string> flags) {
  cmd.app->add_option("--config", cmd.config_path, "JSON file with defaults for any flag")
      ->check(CLI::ExistingFile);
  for (const auto& name : flags) {
    const auto it = std::find_if(fields().begin(), fields().end(),
                                 [&](const Field& f) { return name == f.flag; });
    if (it == fields().end()) throw std::logic_error("no field " + name);
    cmd.options[name] = std::visit(
        [&](auto member) { return cmd.app->add_option("--" + name, cmd.parsed.*member, it->help); },
        it->member);
  }
  cmd.flags = std::move(flags);
}

RunConfig resolve(const Command& cmd) {
  RunConfig cfg;
  if (!cmd.config_path.empty()) {
    std::ifstream is(cmd.config_path);
    const Json j = Json::parse(is, nullptr, false);
    if (j.is_discarded()) throw UsageError("config file " + cmd.config_path + " is not JSON");
    apply_json(cfg, j, cmd.flags);
  }
  for (const auto& name : cmd.flags) {
    if (cmd.options.at(name)->count() == 0) continue;
    const auto& f = *std::find_if(fields().begin(), fields().end(),
                                  [&](const Field& x) { return name == x.flag; });
    std::visit([&](auto member) { cfg.*member = cmd.parsed.*member; }, f.member);
  }
  return cfg;
}

QuestionType question_type(const RunConfig& cfg) {
  try {
    return parse_question_type(cfg.qtype);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

QuestionSpec question_spec(const RunConfig& cfg, int k) {
  const QuestionType qtype = question_type(cfg);
  if (cfg.items < 1 || cfg.items > k - 1) {
    throw UsageError("--I must satisfy 1 <= I <= K-1 (K=" + std::to_string(k) + ")");
  }
  return QuestionSpec(qtype, cfg.items, ClassSpace(k));
}

// Independent streams of the run seed.
enum Stream : std::uint64_t { kSubsample = 1, kBlobsTrain = 2, kBlobsTest = 3, kLabels = 4,
                              kRepetitions = 5 };

struct Data {
  ImageDataset train;
  std::optional<ImageDataset> test;
};

Data load_data(const RunConfig& cfg, bool want_test) {
  const Rng root(cfg.seed);
  Data data;
  if (cfg.dataset_images.empty() != cfg.dataset_labels.empty()) {
    throw UsageError("--dataset-images and --dataset-labels go together");
  }
  if (cfg.test_images.empty() != cfg.test_labels.empty()) {
    throw UsageError("--test-images and --test-labels go together");
  }
  if (cfg.per_class < 0 || cfg.test_per_class < 1) {
    throw UsageError("per-class counts must be >= 0");
  }
  if (!cfg.dataset_images.empty()) {
    data.train = load_idx(cfg.dataset_images, cfg.dataset_labels);
    if (cfg.per_class > 0) {
      Rng rng = root.split(kSubsample);
      data.train = subsample_per_class(data.train, cfg.per_class, rng);
    }
    if (want_test && !cfg.test_images.empty()) {
      data.test = load_idx(cfg.test_images, cfg.test_labels, data.train.num_classes);
    }
    return data;
  }
  if (cfg.k < 2) throw UsageError("--K must be >= 2");
  Rng train_rng = root.split(kBlobsTrain);
  data.train = synthetic_blobs(cfg.k, cfg.blobs_d, cfg.per_class > 0 ? cfg.per_class : 200,
                               cfg.blobs_separation, train_rng);
  if (want_test) {
    if (!cfg.test_images.empty()) {
      data.test = load_idx(cfg.test_images, cfg.test_labels, cfg.k);
    } else {
      Rng test_rng = root.split(kBlobsTest);
      data.test = synthetic_blobs(cfg.k, cfg.blobs_d, cfg.test_per_class, cfg.blobs_separation,
                                  test_rng);
    }
  }
  return data;
}

AnnotatorModel truth_of(const ImageDataset& ds) {
  std::unordered_map<std::string, ClassId> truth;
  for (std::size_t i = 0; i < ds.size(); ++i) truth[ds.instance_id(i)] = ds.labels[i];
  return AnnotatorModel::from_labels(std::move(truth));
}

fs::path prepare_out(const RunConfig& cfg) {
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
}

void write_run_config(const fs::path& dir, const std::string& command, const RunConfig& cfg,
                      const std::vector<std::string>& flags) {
  Json j{{"command", command}, {"config", config_to_json(cfg, flags)}};
  write_text(dir / "run_config.json", j.dump(2) + "\n");
}

std::string histogram_text(const std::map<std::size_t, std::size_t>& hist, std::size_t total) {
  std::ostringstream os;
  os << "label_size_histogram:\n";
  for (const auto& [size, count] : hist) {
    os << "  size " << size << ": " << count << " (" << std::fixed << std::setprecision(2)
       << 100.0 * static_cast<double>(count) / static_cast<double>(total) << "%)\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------

int cmd_label(const Command& cmd, std::ostream& out) {
  const RunConfig cfg = resolve(cmd);
  const Data data = load_data(cfg, false);
  const QuestionSpec spec = question_spec(cfg, data.train.num_classes);
  const fs::path dir = prepare_out(cfg);
  const fs::path store = cfg.events.empty() ? dir / "events.jsonl" : fs::path(cfg.events);
  fs::remove(store);

  const auto ids = data.train.instance_ids();
  const auto events =
      simulate_dataset(Rng(cfg.seed).split(kLabels), spec, truth_of(data.train), ids);
  std::vector<StoredEvent> stored;
  stored.reserve(events.size());
  const std::string now = current_timestamp();
  std::map<std::size_t, std::size_t> hist;
  for (const auto& e : events) {
    ++hist[e.qa_label.size()];
    stored.push_back({e, spec.num_classes(), now, "simulated"});
  }
  append_events(store.string(), stored);
  write_run_config(dir, "label", cfg, cmd.flags);
  out << "events: " << events.size() << " -> " << store.string() << "\n"
      << histogram_text(hist, events.size());
  return kExitOk;
}

int cmd_verify(const Command& cmd, std::ostream& out) {
  const RunConfig cfg = resolve(cmd);
  VerifyOptions opt;
  opt.k_min = cfg.k_min;
  opt.k_max = cfg.k;
  opt.posteriors = cfg.posteriors;
  opt.seed = cfg.seed;
  opt.coefficient_perturbation = cfg.perturb_coefficient;
  if (opt.k_min < 2 || opt.k_max < opt.k_min || opt.posteriors < 1) {
    throw UsageError("need 2 <= --K-min <= --K and --posteriors >= 1");
  }
  const VerifyReport report = run_verification(opt);
  out << format_report(report);
  out << (report.passed() ? "all checks passed\n" : "verification FAILED\n");
  return report.passed() ? kExitOk : kExitFailure;
}

// Shortest text that reads back to the same double; NaN becomes an empty cell.
std::string cell(double v) {
  if (std::isnan(v)) return {};
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_metrics(const fs::path& path, const std::vector<EpochMetrics>& metrics) {
  std::ostringstream os;
  os << "epoch,train_qa_risk,test_mae,test_accuracy\n";
  for (const auto& m : metrics) {
    os << m.epoch << ',' << cell(m.train_qa_risk) << ',' << cell(m.test_mae) << ','
       << cell(m.test_accuracy) << '\n';
  }
  write_text(path, os.str());
}

Objective objective_of(const RunConfig& cfg, int k) {
  if (cfg.qtype == "ordinary") return Objective::ordinary();
  const QuestionSpec spec = question_spec(cfg, k);
  return Objective::qa(spec.qtype(), spec.items());
}

// Training targets from a stored event file: instances with an event, in
// dataset order.
TrainingSet targets_from_store(const ImageDataset& ds, const std::string& path,
                               const Objective& objective) {
  const auto events = read_events(path, ds.num_classes);
  std::map<std::size_t, LabelSubset> by_row;
  for (const auto& s : events) {
    const auto& e = s.event;
    if (objective.kind == Objective::Kind::ordinary || e.qtype != objective.qtype() ||
        e.items != objective.items) {
      throw UsageError("event for '" + e.instance_id + "' was not produced by --qtype " +
                       std::string(to_string(objective.qtype())) + " --I " +
                       std::to_string(objective.items));
    }
    const auto row = ds.find(e.instance_id);
    if (!row) throw UsageError("event names unknown instance '" + e.instance_id + "'");
    if (!by_row.emplace(*row, e.qa_label).second) {
      throw UsageError("instance '" + e.instance_id + "' has more than one event");
    }
  }
  if (by_row.empty()) throw UsageError("event store " + path + " is empty");
  TrainingSet set;
  set.features = Matrix(by_row.size(), ds.features.cols);
  std::size_t i = 0;
  for (const auto& [row, label] : by_row) {
    std::copy_n(ds.features.row(row).begin(), ds.features.cols, set.features.row(i++).begin());
    set.targets.push_back(label);
  }
  return set;
}

int cmd_train(const Command& cmd, std::ostream& out) {
  const RunConfig cfg = resolve(cmd);
  const Data data = load_data(cfg, true);
  const int k = data.train.num_classes;
  const Objective objective = objective_of(cfg, k);
  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.hidden = cfg.hidden;
  tc.learning_rate = cfg.learning_rate;
  tc.weight_decay = cfg.weight_decay;
  tc.repetitions = cfg.repetitions;
  tc.eval_every = cfg.eval_every;
  try {
    tc.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const fs::path dir = prepare_out(cfg);
  write_run_config(dir, "train", cfg, cmd.flags);

  std::optional<TrainingSet> stored;
  if (!cfg.events.empty()) stored = targets_from_store(data.train, cfg.events, objective);
  const LabeledSet test = data.test->labeled();
  const Rng reps = Rng(cfg.seed).split(kRepetitions);
  for (int r = 0; r < cfg.repetitions; ++r) {
    const Rng rep = reps.split(static_cast<std::uint64_t>(r));
    TrainingSet set;
    if (stored) {
      set = *stored;
    } else {
      set.features = data.train.features;
      if (objective.kind == Objective::Kind::ordinary) {
        for (ClassId y : data.train.labels) set.targets.push_back(LabelSubset{y});
      } else {
        const QuestionSpec spec(objective.qtype(), objective.items, ClassSpace(k));
        for (auto& e : simulate_dataset(rep.split(0), spec, truth_of(data.train),
                                        data.train.instance_ids())) {
          set.targets.push_back(std::move(e.qa_label));
        }
      }
    }
    Rng seeder = rep.split(1);
    tc.seed = seeder();
    const TrainResult result = train(set, k, objective, tc, &test);
    write_metrics(dir / ("metrics_rep" + std::to_string(r) + ".csv"), result.metrics);
    save_params((dir / ("params_rep" + std::to_string(r) + ".bin")).string(), result.params);
    const auto final_eval = evaluate(result.params, test);
    out << "rep " << r << ": test_mae=" << final_eval.mae
        << " test_accuracy=" << final_eval.accuracy << "\n";
  }
  return kExitOk;
}

int cmd_eval(const Command& cmd, std::ostream& out) {
  const RunConfig cfg = resolve(cmd);
  const Data data = load_data(cfg, !cfg.test_images.empty());
  const ImageDataset& target = data.test ? *data.test : data.train;
  MlpParams params;
  if (cfg.params.empty()) {
    if (cfg.hidden < 1) throw UsageError("--hidden must be >= 1");
    params = MlpParams::zeros(static_cast<int>(target.features.cols), cfg.hidden,
                              target.num_classes);
  } else {
    params = load_params(cfg.params);
  }
  if (params.k != target.num_classes) {
    throw UsageError("parameters have K=" + std::to_string(params.k) + ", data has K=" +
                     std::to_string(target.num_classes));
  }
  const auto ev = evaluate(params, target.labeled());
  out << "n=" << target.size() << " mae=" << ev.mae << " accuracy=" << ev.accuracy << "\n";
  return kExitOk;
}

int cmd_bounds(const Command& cmd, std::ostream& out) {
  const RunConfig cfg = resolve(cmd);
  if (cfg.k < 2) throw UsageError("--K must be >= 2");
  BoundInputs in;
  in.k = cfg.k;
  in.rho = cfg.rho;
  in.c_l = cfg.c_l;
  in.delta = cfg.delta;
  in.n = cfg.n;
  in.rad_sum = cfg.rad_sum >= 0.0
                   ? cfg.rad_sum
                   : cfg.k * kernel_rademacher_bound({cfg.kernel_r, cfg.kernel_lambda, cfg.n});
  std::ostringstream csv;
  csv << "I,bound_whichone,bound_isin\n";
  for (int i = 1; i < cfg.k; ++i) {
    in.items = i;
    try {
      csv << i << ',' << cell(error_bound_whichone(in)) << ','
          << cell(error_bound_isin(in)) << '\n';
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
  }
  const fs::path dir = prepare_out(cfg);
  write_text(dir / "bounds.csv", csv.str());
  write_run_config(dir, "bounds", cfg, cmd.flags);
  out << csv.str();
  return kExitOk;
}

int cmd_serve(const Command& cmd, std::ostream& out) {
  const RunConfig cfg = resolve(cmd);
  const Data data = load_data(cfg, false);
  ServiceOptions opt;
  opt.store_path = cfg.events.empty() ? (prepare_out(cfg) / "events.jsonl").string() : cfg.events;
  opt.default_seed = cfg.seed;
  opt.allowed_origin = cfg.allowed_origin;
  AnnotationService service(opt);
  service.add_dataset("default", {data.train, {}});
  httplib::Server server;
  out << "serving " << data.train.size() << " instances on http://" << cfg.host << ":"
      << cfg.port << " (events -> " << opt.store_path << ")" << std::endl;
  if (!serve_annotation(server, service, cfg.host, cfg.port, cfg.ui_dir)) {
    throw Error("cannot listen on " + cfg.host + ":" + std::to_string(cfg.port));
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Q&A labeling toolkit", "qalabel"};
  app.require_subcommand(1);
  const std::vector<std::string> data_flags = {
      "seed",  "K", "dataset-images", "dataset-labels", "per-class", "blobs-d",
      "blobs-separation"};
  const auto with = [&](std::vector<std::string> extra) {
    std::vector<std::string> all = data_flags;
    all.insert(all.end(), extra.begin(), extra.end());
    return all;
  };

  Command label, verify, train_cmd, eval, bounds, serve;
  label.app = app.add_subcommand("label", "Simulate Q&A labeling of a dataset");
  add_fields(label, with({"qtype", "I", "out", "events"}));
  verify.app = app.add_subcommand("verify", "Check the label models and risk rewriting");
  add_fields(verify, {"seed", "K", "K-min", "posteriors", "perturb-coefficient"});
  verify.options.at("perturb-coefficient")->group("");
  train_cmd.app = app.add_subcommand("train", "Train the MLP from Q&A or ordinary labels");
  add_fields(train_cmd, with({"qtype", "I", "test-images", "test-labels", "test-per-class", "out",
                              "events", "epochs", "repetitions", "batch-size", "hidden",
                              "learning-rate", "weight-decay", "eval-every"}));
  eval.app = app.add_subcommand("eval", "Report test MAE and accuracy of saved parameters");
  add_fields(eval, with({"test-images", "test-labels", "params", "hidden"}));
  bounds.app = app.add_subcommand("bounds", "Tabulate the estimation-error bounds over I");
  add_fields(bounds, {"K", "rho", "c-l", "delta", "n", "rad-sum", "kernel-r", "kernel-lambda",
                      "out"});
  serve.app = app.add_subcommand("serve", "Run the annotation HTTP service");
  add_fields(serve, with({"out", "events", "host", "port", "ui-dir", "allowed-origin"}));

  std::vector<std::string> args;
  for (int i = argc - 1; i >= 1; --i) args.emplace_back(argv[i]);
  try {
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*label.app) return cmd_label(label, out);
    if (*verify.app) return cmd_verify(verify, out);
    if (*train_cmd.app) return cmd_train(train_cmd, out);
    if (*eval.app) return cmd_eval(eval, out);
    if (*bounds.app) return cmd_bounds(bounds, out);
    if (*serve.app) return cmd_serve(serve, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CapacityError& e) {
    err << "capacity error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace qalabel::cli
