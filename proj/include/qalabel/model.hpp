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
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qalabel/combinatorics.hpp"
#include "qalabel/error.hpp"
#include "qalabel/labeling.hpp"
#include "qalabel/losses.hpp"
#include "qalabel/matrix.hpp"
#include "qalabel/rng.hpp"

namespace qalabel {

// One-hidden-layer perceptron: softmax(W2^T relu(W1^T x + b1) + b2).
// w1 is d x H and w2 is H x K, both row-major.
struct MlpParams {
  int d = 0, h = 0, k = 0;
  std::vector<double> w1, b1, w2, b2;

  static MlpParams zeros(int d, int h, int k) {
    if (d < 1 || h < 1 || k < 2) throw InvalidArgument("bad MLP shape");
    MlpParams p;
    p.d = d;
    p.h = h;
    p.k = k;
    p.w1.assign(static_cast<std::size_t>(d) * h, 0.0);
    p.b1.assign(static_cast<std::size_t>(h), 0.0);
    p.w2.assign(static_cast<std::size_t>(h) * k, 0.0);
    p.b2.assign(static_cast<std::size_t>(k), 0.0);
    return p;
  }

  // Glorot-uniform weights, zero biases.
  static MlpParams glorot(int d, int h, int k, Rng& rng) {
    MlpParams p = zeros(d, h, k);
    const double a1 = std::sqrt(6.0 / (d + h));
    for (double& w : p.w1) w = rng.uniform(-a1, a1);
    const double a2 = std::sqrt(6.0 / (h + k));
    for (double& w : p.w2) w = rng.uniform(-a2, a2);
    return p;
  }

  std::array<std::span<double>, 4> blocks() { return {w1, b1, w2, b2}; }
  std::array<std::span<const double>, 4> blocks() const { return {w1, b1, w2, b2}; }

  std::size_t parameter_count() const {
    return w1.size() + b1.size() + w2.size() + b2.size();
  }

  bool same_shape(const MlpParams& o) const {
    return d == o.d && h == o.h && k == o.k;
  }

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

using MlpGradients = MlpParams;

// What the network is trained against: ordinary labels or one of the two
// Q&A procedures with its number of question items.
struct Objective {
  enum class Kind { ordinary, which_one, is_in };

  Kind kind = Kind::ordinary;
  int items = 0;
  BaseLoss base = BaseLoss::mae;

  static Objective ordinary(BaseLoss b = BaseLoss::mae) { return {Kind::ordinary, 0, b}; }
  static Objective qa(QuestionType t, int items, BaseLoss b = BaseLoss::mae) {
    return {t == QuestionType::which_one ? Kind::which_one : Kind::is_in, items, b};
  }

  QuestionType qtype() const {
    return kind == Kind::which_one ? QuestionType::which_one : QuestionType::is_in;
  }
};

struct TrainConfig {
  int epochs = 800;
  int batch_size = 500;
  int hidden = 500;
  double learning_rate = 1e-2;
  double weight_decay = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  int repetitions = 5;
  // Test metrics are computed every eval_every epochs and at the last one.
  int eval_every = 1;

  void validate() const {
    if (epochs < 0 || batch_size < 1 || hidden < 1 || repetitions < 1 || eval_every < 1) {
      throw InvalidArgument("epochs >= 0, batch_size/hidden/repetitions/eval_every >= 1");
    }
    if (!(learning_rate > 0.0) || !(weight_decay >= 0.0) || !(adam_eps > 0.0) ||
        !(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
      throw InvalidArgument("invalid optimizer hyperparameters");
    }
  }
};

struct AdamState {
  MlpParams m, v;
  std::int64_t step = 0;

  static AdamState for_params(const MlpParams& p) {
    return {MlpParams::zeros(p.d, p.h, p.k), MlpParams::zeros(p.d, p.h, p.k), 0};
  }
};

// Training data: features plus one target set per row (a singleton for
// ordinary labels, the Q&A label otherwise).
struct TrainingSet {
  Matrix features;
  std::vector<LabelSubset> targets;
};

struct LabeledSet {
  Matrix features;
  std::vector<ClassId> labels;
};

namespace detail {

inline void softmax_inplace(std::span<double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double& v : z) {
    v = std::exp(v - mx);
    s += v;
  }
  for (double& v : z) v /= s;
}

// Hidden pre-activations and softmax output for one input row.
inline void forward_into(const MlpParams& p, std::span<const double> x,
                         std::span<double> pre, std::span<double> out) {
  const auto h = static_cast<std::size_t>(p.h), k = static_cast<std::size_t>(p.k);
  std::copy(p.b1.begin(), p.b1.end(), pre.begin());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* w = p.w1.data() + i * h;
    for (std::size_t j = 0; j < h; ++j) pre[j] += xi * w[j];
  }
  std::copy(p.b2.begin(), p.b2.end(), out.begin());
  for (std::size_t j = 0; j < h; ++j) {
    const double a = pre[j] > 0.0 ? pre[j] : 0.0;
    if (a == 0.0) continue;
    const double* w = p.w2.data() + j * k;
    for (std::size_t c = 0; c < k; ++c) out[c] += a * w[c];
  }
  softmax_inplace(out);
}

inline void check_input(const MlpParams& p, std::span<const double> x) {
  if (static_cast<int>(x.size()) != p.d) {
    throw InvalidArgument("input has " + std::to_string(x.size()) +
                          " features, network expects " + std::to_string(p.d));
  }
}

}  // namespace detail

inline std::vector<double> forward(const MlpParams& p, std::span<const double> x) {
  detail::check_input(p, x);
  std::vector<double> pre(static_cast<std::size_t>(p.h));
  std::vector<double> out(static_cast<std::size_t>(p.k));
  detail::forward_into(p, x, pre, out);
  return out;
}

struct LossAndGrad {
  double loss = 0.0;
  MlpGradients grad;
};

// Mean objective over the selected rows and its exact gradient.
inline LossAndGrad loss_and_grad(const MlpParams& p, const Matrix& features,
                                 std::span<const LabelSubset> targets,
                                 std::span<const std::size_t> rows,
                                 const Objective& objective) {
  if (rows.empty()) throw InvalidArgument("empty batch");
  if (static_cast<int>(features.cols) != p.d) {
    throw InvalidArgument("feature dimension does not match the network");
  }
  const auto h = static_cast<std::size_t>(p.h), k = static_cast<std::size_t>(p.k);
  const bool ordinary = objective.kind == Objective::Kind::ordinary;
  const double coefficient =
      ordinary ? 0.0 : qa_coefficient(objective.qtype(), p.k, objective.items);

  LossAndGrad r{0.0, MlpParams::zeros(p.d, p.h, p.k)};
  std::vector<double> pre(h), f(k), g(k), gy(k), dz(k), dh(h), class_losses(k);
  const double inv_n = 1.0 / static_cast<double>(rows.size());

  for (std::size_t row : rows) {
    const auto x = features.row(row);
    const LabelSubset& target = targets[row];
    detail::forward_into(p, x, pre, f);

    // dLoss/df for this sample.
    if (ordinary) {
      if (target.size() != 1) throw InvalidArgument("ordinary target must be one class");
      const ClassId y = target.front();
      detail::check_class(y, k);
      r.loss += base_loss(objective.base, f, y) * inv_n;
      base_loss_gradient(objective.base, f, y, g);
    } else {
      check_label_size(objective.qtype(), target, p.k, objective.items);
      std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t y = 0; y < k; ++y) {
        const auto cls = static_cast<ClassId>(y) + 1;
        class_losses[y] = base_loss(objective.base, f, cls);
        const double w = target.contains(cls) ? 1.0 : -coefficient;
        base_loss_gradient(objective.base, f, cls, gy);
        for (std::size_t c = 0; c < k; ++c) g[c] += w * gy[c];
      }
      r.loss += qa_loss_from_class_losses(coefficient, class_losses, target) * inv_n;
    }

    // Through the softmax: dz_j = f_j (g_j - <g, f>).
    double gf = 0.0;
    for (std::size_t c = 0; c < k; ++c) gf += g[c] * f[c];
    for (std::size_t c = 0; c < k; ++c) dz[c] = f[c] * (g[c] - gf) * inv_n;

    for (std::size_t c = 0; c < k; ++c) r.grad.b2[c] += dz[c];
    for (std::size_t j = 0; j < h; ++j) {
      const double a = pre[j] > 0.0 ? pre[j] : 0.0;
      const double* w = p.w2.data() + j * k;
      double* gw = r.grad.w2.data() + j * k;
      double back = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        gw[c] += a * dz[c];
        back += w[c] * dz[c];
      }
      dh[j] = pre[j] > 0.0 ? back : 0.0;
      r.grad.b1[j] += dh[j];
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double xi = x[i];
      if (xi == 0.0) continue;
      double* gw = r.grad.w1.data() + i * h;
      for (std::size_t j = 0; j < h; ++j) gw[j] += xi * dh[j];
    }
  }
  return r;
}

// Adam with bias correction; weight decay is an L2 term added to the
// gradient before the moment updates.
inline void adam_step(MlpParams& params, const MlpGradients& grads, AdamState& state,
                      const TrainConfig& cfg) {
  if (!params.same_shape(grads) || !params.same_shape(state.m)) {
    throw InvalidArgument("adam_step shape mismatch");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
  auto pb = params.blocks();
  auto gb = grads.blocks();
  auto mb = state.m.blocks();
  auto vb = state.v.blocks();
  for (std::size_t b = 0; b < pb.size(); ++b) {
    for (std::size_t i = 0; i < pb[b].size(); ++i) {
      const double g = gb[b][i] + cfg.weight_decay * pb[b][i];
      mb[b][i] = cfg.adam_beta1 * mb[b][i] + (1.0 - cfg.adam_beta1) * g;
      vb[b][i] = cfg.adam_beta2 * vb[b][i] + (1.0 - cfg.adam_beta2) * g * g;
      const double mhat = mb[b][i] / c1;
      const double vhat = vb[b][i] / c2;
      pb[b][i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

struct Evaluation {
  double mae = 0.0;
  double accuracy = 0.0;
};

// argmax with the lowest class id winning ties.
inline ClassId predict_class(std::span<const double> scores) {
  return static_cast<ClassId>(std::max_element(scores.begin(), scores.end()) -
                              scores.begin()) + 1;
}

inline Evaluation evaluate(const MlpParams& p, const LabeledSet& test) {
  if (test.labels.empty()) throw InvalidArgument("empty test set");
  if (static_cast<int>(test.features.cols) != p.d) {
    throw InvalidArgument("feature dimension does not match the network");
  }
  std::vector<double> pre(static_cast<std::size_t>(p.h)), f(static_cast<std::size_t>(p.k));
  double loss = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.labels.size(); ++i) {
    detail::forward_into(p, test.features.row(i), pre, f);
    loss += mae(f, test.labels[i]);
    if (predict_class(f) == test.labels[i]) ++hits;
  }
  const auto n = static_cast<double>(test.labels.size());
  return {loss / n, static_cast<double>(hits) / n};
}

struct EpochMetrics {
  int epoch = 0;
  double train_qa_risk = 0.0;
  double test_mae = std::numeric_limits<double>::quiet_NaN();
  double test_accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  MlpParams params;
  std::vector<EpochMetrics> metrics;
};

// Called after every epoch with that epoch's metrics and the current weights.
using EpochHook = std::function<void(const EpochMetrics&, const MlpParams&)>;

// Mini-batch training. Stream 0 of the seed initialises the weights and
// stream 1 shuffles, so two objectives trained from one seed see identical
// initial weights and batch orders.
inline TrainResult train(const TrainingSet& data, int num_classes, const Objective& objective,
                         const TrainConfig& cfg, const LabeledSet* test = nullptr,
                         const EpochHook& on_epoch = {}) {
  cfg.validate();
  const std::size_t n = data.targets.size();
  if (n == 0 || data.features.rows != n) {
    throw InvalidArgument("training set is empty or features/targets disagree");
  }
  if (test && static_cast<std::size_t>(test->features.cols) != data.features.cols) {
    throw InvalidArgument("test features have a different dimension");
  }
  if (objective.kind != Objective::Kind::ordinary) {
    detail::check_items(objective.items, num_classes);
  }
  const Rng root(cfg.seed);
  Rng init = root.split(0);
  Rng shuffler = root.split(1);

  TrainResult result;
  result.params = MlpParams::glorot(static_cast<int>(data.features.cols), cfg.hidden,
                                    num_classes, init);
  AdamState state = AdamState::for_params(result.params);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffler.shuffle(std::span<std::size_t>(order));
    double risk = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      std::span<const std::size_t> batch(order.data() + start, stop - start);
      auto lg = loss_and_grad(result.params, data.features, data.targets, batch, objective);
      risk += lg.loss * static_cast<double>(batch.size());
      adam_step(result.params, lg.grad, state, cfg);
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_qa_risk = risk / static_cast<double>(n);
    if (test && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)) {
      const auto ev = evaluate(result.params, *test);
      m.test_mae = ev.mae;
      m.test_accuracy = ev.accuracy;
    }
    result.metrics.push_back(m);
    if (on_epoch) on_epoch(m, result.params);
  }
  return result;
}

// Binary parameter file: "QAMLP1", then d, H, K as little-endian uint32,
// then w1, b1, w2, b2 as little-endian float64 in row-major order.
inline constexpr std::array<char, 6> kParamsMagic = {'Q', 'A', 'M', 'L', 'P', '1'};

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  auto u = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>(u & 0xff));
    u >>= 8;
  }
}

template <typename T>
T get_le(std::string_view in, std::size_t& pos) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  if (pos + sizeof(U) > in.size()) throw FormatError("truncated parameter file", pos);
  U u = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    u |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  pos += sizeof(U);
  return std::bit_cast<T>(u);
}

}  // namespace detail

inline std::string encode_params(const MlpParams& p) {
  std::string out(kParamsMagic.begin(), kParamsMagic.end());
  detail::put_le(out, static_cast<std::uint32_t>(p.d));
  detail::put_le(out, static_cast<std::uint32_t>(p.h));
  detail::put_le(out, static_cast<std::uint32_t>(p.k));
  for (auto block : p.blocks()) {
    for (double v : block) detail::put_le(out, v);
  }
  return out;
}

inline MlpParams decode_params(std::string_view bytes) {
  if (bytes.size() < kParamsMagic.size() ||
      !std::equal(kParamsMagic.begin(), kParamsMagic.end(), bytes.begin())) {
    throw FormatError("bad parameter file magic", 0);
  }
  std::size_t pos = kParamsMagic.size();
  const auto d = detail::get_le<std::uint32_t>(bytes, pos);
  const auto h = detail::get_le<std::uint32_t>(bytes, pos);
  const auto k = detail::get_le<std::uint32_t>(bytes, pos);
  if (d == 0 || h == 0 || k < 2 || d > (1u << 24) || h > (1u << 24) || k > (1u << 16)) {
    throw FormatError("implausible network shape", kParamsMagic.size());
  }
  MlpParams p = MlpParams::zeros(static_cast<int>(d), static_cast<int>(h), static_cast<int>(k));
  for (auto block : p.blocks()) {
    for (double& v : block) v = detail::get_le<double>(bytes, pos);
  }
  if (pos != bytes.size()) throw FormatError("trailing bytes after parameters", pos);
  return p;
}

inline void save_params(const std::string& path, const MlpParams& p) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path + " for writing");
  const std::string bytes = encode_params(p);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error("failed writing " + path);
}

inline MlpParams load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_params(bytes);
}

}  // namespace qalabel
