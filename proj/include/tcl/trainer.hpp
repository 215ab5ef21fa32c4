#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tcl/batch.hpp"
#include "tcl/data.hpp"
#include "tcl/error.hpp"
#include "tcl/gradlab.hpp"
#include "tcl/losses.hpp"
#include "tcl/network.hpp"
#include "tcl/numerics.hpp"
#include "tcl/optim.hpp"
#include "tcl/trace.hpp"

namespace tcl {

enum class Mode { supervised, selfsup };

inline const char* to_string(Mode m) { return m == Mode::supervised ? "supervised" : "selfsup"; }

struct LossSpec {
  LossKind kind = LossKind::tcl;
  LossParams params;
};

struct TrainConfig {
  Mode mode = Mode::supervised;
  LossKind loss = LossKind::tcl;
  LossParams params{0.1, 5000.0, 1.0};
  MlpSpec mlp;
  OptimConfig optim{0.05, 0.9, 1e-4, 100};
  ViewConfig views;
  std::size_t batch_size = 64;
  bool log_gradients = true;
  // Extra losses whose gradient magnitudes are logged on every training
  // batch without affecting the update.
  std::vector<LossSpec> compare_losses;
  std::uint64_t seed = 0;

  void validate() const {
    for (const auto& c : compare_losses) detail::check_kind_params(c.kind, c.params);
    if (loss == LossKind::tcl) {
      params.validate();
    } else {
      LossParams{params.tau, 0.0, 1.0}.validate();
    }
    mlp.validate();
    optim.validate();
    views.validate();
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  }
};

// RNG stream ids derived from one seed; the batch/augmentation streams do
// not depend on the loss, so runs with equal seeds see the same batches.
namespace streams {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t order = 2;
inline constexpr std::uint64_t augment = 3;
inline constexpr std::uint64_t jitter = 4;
inline constexpr std::uint64_t split = 10;
inline constexpr std::uint64_t probe_init = 11;
inline constexpr std::uint64_t probe_order = 12;
}  // namespace streams

struct TrainResult {
  Network model;
  TrainTrace trace;
};

inline ViewBatch make_views(const Dataset& ds, Mode mode, std::span<const std::size_t> rows,
                            const ViewConfig& views, Rng& rng) {
  return mode == Mode::supervised ? build_supervised_batch(ds, rows, views, rng)
                                  : build_selfsup_batch(ds, rows, views, rng);
}

// Contrastive pre-training of encoder and projector. The optimized objective
// is the mean of L_i over the anchors that have positives.
inline TrainResult train_contrastive(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  ds.validate();
  if (cfg.mode == Mode::supervised && !ds.has_labels()) throw NoLabels("supervised training needs labels");
  if (cfg.batch_size > ds.size()) throw BatchTooLarge("batch size exceeds dataset size");
  if (ds.dim() != cfg.mlp.input_dim()) throw DimensionMismatch("dataset width does not match encoder input");

  TrainResult out;
  if (cfg.loss == LossKind::tcl && !cfg.params.within_guarantee_range()) {
    out.trace.warnings.push_back("k1 or k2 below 1: the TCL gradient guarantees do not apply");
  }
  out.trace.gradients_logged = cfg.log_gradients;

  Rng init_rng(cfg.seed, streams::init);
  Rng order_rng(cfg.seed, streams::order);
  Rng augment_rng(cfg.seed, streams::augment);
  Rng jitter_rng(cfg.seed, streams::jitter);

  out.model = init_network(cfg.mlp, init_rng);
  Sgd<Network> opt(cfg.optim, out.model);
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.optim.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const double lr = cosine_lr(cfg.optim, epoch);
    order_rng.shuffle(order.begin(), order.end());
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      const ViewBatch views = make_views(ds, cfg.mode, rows, cfg.views, augment_rng);
      const ForwardPass fp = forward(out.model, views.features, jitter_rng);
      const ContrastiveBatch batch(fp.embeddings, views.positives);

      const LossResult loss = contrastive_loss(batch, cfg.loss, cfg.params);
      auto grad = full_batch_grad(batch, cfg.params, cfg.loss);
      const double scale = 1.0 / static_cast<double>(loss.included_anchors);
      for (auto& g : grad) {
        for (double& x : g) x *= scale;
      }

      StepRecord s;
      s.epoch = epoch;
      s.step = step++;
      s.views = batch.size();
      s.loss = loss.total * scale;
      s.lr = lr;
      if (cfg.log_gradients) {
        s.has_gradients = true;
        s.magnitudes = gradient_magnitudes(batch, cfg.params, cfg.loss);
        for (const auto& c : cfg.compare_losses) s.compared.push_back(gradient_magnitudes(batch, c.params, c.kind));
      }
      out.trace.steps.push_back(s);
      if (rec.steps == 0) rec.views_per_batch = batch.size();
      rec.loss += s.loss;
      ++rec.steps;

      const Network g = backward(out.model, fp, grad);
      opt.step(out.model, g, lr);
    }
    rec.loss /= static_cast<double>(std::max<std::size_t>(rec.steps, 1));
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    out.trace.epochs.push_back(rec);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear probe on frozen encoder representations.

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Seeded shuffle, first round(n * train_fraction) rows train.
inline Split split_indices(std::size_t n, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed, streams::split);
  rng.shuffle(idx.begin(), idx.end());
  const auto cut = static_cast<std::size_t>(std::lround(static_cast<double>(n) * train_fraction));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cut));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(cut), idx.end());
  return s;
}

struct ProbeConfig {
  std::size_t epochs = 50;
  double lr = 0.5;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_size = 64;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;

  OptimConfig optim() const { return {lr, momentum, weight_decay, epochs}; }
};

struct ProbeEpoch {
  std::size_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double top1 = 0.0;  // held-out accuracy, percent
};

struct ProbeResult {
  Dense classifier;  // classes x d_rep
  double top1 = 0.0;  // percent
  std::vector<ProbeEpoch> epochs;
  Split split;
};

inline double top1_accuracy(const Dense& classifier, const Eigen::MatrixXd& reps,
                            std::span<const int> labels) {
  if (labels.empty()) return 0.0;
  const Eigen::MatrixXd logits = detail::affine(classifier, reps);
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    logits.row(r).maxCoeff(&best);
    if (best == labels[static_cast<std::size_t>(r)]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
}

// Trains a linear classifier with cross-entropy on encode(net, x) for the
// train split and reports top-1 on the held-out split. `net` is not touched.
inline ProbeResult train_linear_probe(const Network& net, const Dataset& ds, const ProbeConfig& cfg) {
  if (!ds.has_labels()) throw NoLabels("linear probe needs labels");
  ds.validate();
  if (cfg.batch_size < 1) throw ConfigError("probe batch_size must be >= 1");
  const OptimConfig optim = cfg.optim();
  optim.validate();

  ProbeResult out;
  out.split = split_indices(ds.size(), cfg.train_fraction, cfg.seed);
  const Eigen::MatrixXd reps = encode(net, ds.features);
  const auto labels = ds.label_span();
  auto gather = [&](const std::vector<std::size_t>& rows, Eigen::MatrixXd& x, std::vector<int>& y) {
    x.resize(static_cast<Eigen::Index>(rows.size()), reps.cols());
    y.resize(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      x.row(static_cast<Eigen::Index>(r)) = reps.row(static_cast<Eigen::Index>(rows[r]));
      y[r] = labels[rows[r]];
    }
  };
  Eigen::MatrixXd train_x, test_x;
  std::vector<int> train_y, test_y;
  gather(out.split.train, train_x, train_y);
  gather(out.split.test, test_x, test_y);

  Rng init_rng(cfg.seed, streams::probe_init);
  Rng order_rng(cfg.seed, streams::probe_order);
  out.classifier = init_dense(static_cast<std::size_t>(reps.cols()), ds.class_count, init_rng);
  Sgd<Dense> opt(optim, out.classifier);

  std::vector<std::size_t> order(train_y.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Eigen::MatrixXd xb;
  std::vector<int> yb;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(optim, epoch);
    order_rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      xb.resize(static_cast<Eigen::Index>(stop - start), train_x.cols());
      yb.resize(stop - start);
      for (std::size_t r = start; r < stop; ++r) {
        xb.row(static_cast<Eigen::Index>(r - start)) = train_x.row(static_cast<Eigen::Index>(order[r]));
        yb[r - start] = train_y[order[r]];
      }
      const auto ce = cross_entropy(detail::affine(out.classifier, xb), yb);
      Dense g{ce.grad.transpose() * xb, ce.grad.colwise().sum().transpose()};
      opt.step(out.classifier, g, lr);
      loss_sum += ce.loss;
      ++batches;
    }
    out.epochs.push_back({epoch, batches ? loss_sum / static_cast<double>(batches) : 0.0, lr,
                          top1_accuracy(out.classifier, test_x, test_y)});
  }
  out.top1 = top1_accuracy(out.classifier, test_x, test_y);
  return out;
}

// Contrastive pre-training on the train split followed by the probe, both
// using the split derived from probe.seed.
struct ExperimentResult {
  TrainResult train;
  ProbeResult probe;
};

inline ExperimentResult run_experiment(const Dataset& ds, const TrainConfig& train_cfg,
                                       const ProbeConfig& probe_cfg) {
  const Split split = split_indices(ds.size(), probe_cfg.train_fraction, probe_cfg.seed);
  ExperimentResult r;
  r.train = train_contrastive(ds.subset(split.train), train_cfg);
  r.probe = train_linear_probe(r.train.model, ds, probe_cfg);
  return r;
}

}  // namespace tcl
