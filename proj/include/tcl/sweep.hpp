#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "tcl/batch.hpp"
#include "tcl/data.hpp"
#include "tcl/error.hpp"
#include "tcl/gradlab.hpp"
#include "tcl/network.hpp"
#include "tcl/trainer.hpp"

namespace tcl {

// Grid evaluation of gradient-response magnitudes over (k1, k2). Every grid
// point sees the same seeded set of encoded batches.
struct SweepConfig {
  Mode mode = Mode::supervised;
  ViewConfig views;
  MlpSpec mlp;
  std::size_t batch_size = 64;
  std::size_t n_batches = 8;
  double tau = 0.1;
  std::vector<double> k1_grid{1.0};
  std::vector<double> k2_grid{1.0};
  std::uint64_t seed = 0;
  // Encoder/projector used to embed the frozen batches; a seeded
  // initialization when empty.
  std::optional<Network> model;
  // When set, each grid point also trains a TCL model from `train` (with
  // k1/k2 replaced) and records probe top-1.
  bool with_probe = false;
  TrainConfig train;
  ProbeConfig probe;

  void validate() const {
    if (k1_grid.empty() || k2_grid.empty()) throw InvalidGrid("k1 and k2 grids must be non-empty");
    for (const auto* grid : {&k1_grid, &k2_grid}) {
      for (double k : *grid) {
        if (!(k >= 0.0) || !std::isfinite(k)) throw InvalidGrid("grid values must be finite and >= 0");
      }
    }
    if (n_batches < 1) throw InvalidGrid("need at least one frozen batch");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    LossParams{tau, 1.0, 1.0}.validate();
    views.validate();
    mlp.validate();
  }
};

struct SweepRow {
  double k1 = 0.0;
  double k2 = 0.0;
  GradientMagnitudes tcl;
  GradientMagnitudes supcon;
  std::optional<double> top1;
};

inline std::vector<ContrastiveBatch> frozen_batches(const Dataset& ds, const SweepConfig& cfg) {
  if (cfg.mode == Mode::supervised && !ds.has_labels()) throw NoLabels("supervised batches need labels");
  if (cfg.batch_size > ds.size()) throw BatchTooLarge("batch size exceeds dataset size");
  Rng init_rng(cfg.seed, streams::init);
  Rng order_rng(cfg.seed, streams::order);
  Rng augment_rng(cfg.seed, streams::augment);
  Rng jitter_rng(cfg.seed, streams::jitter);
  const Network net = cfg.model ? *cfg.model : init_network(cfg.mlp, init_rng);
  std::vector<ContrastiveBatch> out;
  for (std::size_t b = 0; b < cfg.n_batches; ++b) {
    const auto rows = detail::sample_without_replacement(ds.size(), cfg.batch_size, order_rng);
    const auto views = make_views(ds, cfg.mode, rows, cfg.views, augment_rng);
    const auto fp = forward(net, views.features, jitter_rng);
    out.emplace_back(fp.embeddings, views.positives);
  }
  return out;
}

inline GradientMagnitudes mean_magnitudes(const std::vector<ContrastiveBatch>& batches,
                                          const LossParams& params, LossKind kind) {
  GradientMagnitudes acc;
  for (const auto& b : batches) {
    const auto m = gradient_magnitudes(b, params, kind);
    acc.mean_pos_grad += m.mean_pos_grad;
    acc.mean_neg_grad += m.mean_neg_grad;
    acc.mean_pos_coeff += m.mean_pos_coeff;
    acc.mean_neg_coeff += m.mean_neg_coeff;
  }
  const double n = static_cast<double>(batches.size());
  acc.mean_pos_grad /= n;
  acc.mean_neg_grad /= n;
  acc.mean_pos_coeff /= n;
  acc.mean_neg_coeff /= n;
  return acc;
}

// One row per (k1, k2), k1 outer.
inline std::vector<SweepRow> k_sweep(const Dataset& ds, const SweepConfig& cfg) {
  cfg.validate();
  const auto batches = frozen_batches(ds, cfg);
  const auto supcon = mean_magnitudes(batches, LossParams{cfg.tau, 0.0, 1.0}, LossKind::supcon);
  std::vector<SweepRow> rows;
  for (double k1 : cfg.k1_grid) {
    for (double k2 : cfg.k2_grid) {
      SweepRow row{k1, k2, mean_magnitudes(batches, LossParams{cfg.tau, k1, k2}, LossKind::tcl), supcon, {}};
      if (cfg.with_probe) {
        TrainConfig tc = cfg.train;
        tc.loss = LossKind::tcl;
        tc.params = LossParams{cfg.tau, k1, k2};
        row.top1 = run_experiment(ds, tc, cfg.probe).probe.top1;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace tcl
