#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tcl/batch.hpp"
#include "tcl/checkpoint.hpp"
#include "tcl/data.hpp"
#include "tcl/error.hpp"
#include "tcl/finite_difference.hpp"
#include "tcl/gradlab.hpp"
#include "tcl/losses.hpp"
#include "tcl/network.hpp"
#include "tcl/numerics.hpp"
#include "tcl/parallel.hpp"
#include "tcl/trainer.hpp"

// Property suites behind `tcl-lab verify`. Each suite samples its own seeded
// batches, so suites can be run and reproduced independently.
namespace tcl {

struct VerifyConfig {
  std::uint64_t seed = 0;
  std::size_t oracle_batches = 100;
  std::size_t identity_batches = 1000;
  std::size_t pair_batches = 1000;
  std::size_t property_batches = 200;
  std::vector<double> taus{0.1, 0.5, 1.0};
  std::vector<double> k1s{0.0, 1.0, 100.0, 5000.0};
  std::vector<double> k2s{1.0, 1.5, 3.0};
  std::vector<double> k2_grid{1.0, 1.5, 2.0, 3.0, 5.0};
  double fd_tolerance = 1e-6;
  double mlp_fd_tolerance = 1e-5;
  double identity_tolerance = 1e-12;
  double trace_tolerance = 1e-10;
  BatchSpec batch_spec;
  std::size_t training_epochs = 2;
  // Fault injection: evaluate the hard-positive check with the sign of y flipped.
  bool inject_y_sign_flip = false;

  void validate() const {
    batch_spec.validate();
    if (taus.empty() || k1s.empty() || k2s.empty()) throw ConfigError("verify grids must be non-empty");
    for (double t : taus) LossParams{t, 0.0, 1.0}.validate();
    for (double k : k1s) LossParams{1.0, k, 1.0}.validate();
    for (double k : k2s) LossParams{1.0, 1.0, k}.validate();
    validate_k2_grid(k2_grid);
  }
};

// Everything needed to replay a failing check.
struct FailureDump {
  std::string check;
  LossKind kind = LossKind::tcl;
  LossParams params;
  std::size_t batch = 0;
  std::size_t anchor = 0;
  std::size_t other = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  std::vector<Vector> points;
  std::vector<std::vector<std::size_t>> positives;
};

struct PropertyResult {
  std::string name;
  bool passed = true;
  std::size_t checked = 0;
  std::size_t failures = 0;
  double worst = 0.0;  // largest error or smallest margin seen, per suite
  std::vector<std::string> skipped;
  std::string detail;
  std::optional<FailureDump> counterexample;
  double seconds = 0.0;
};

struct VerifyReport {
  std::vector<PropertyResult> properties;

  bool passed() const {
    return std::all_of(properties.begin(), properties.end(), [](const auto& p) { return p.passed; });
  }

  const PropertyResult* find(const std::string& name) const {
    for (const auto& p : properties) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }
};

namespace detail {

// Per-batch tally, merged in batch order.
struct Tally {
  std::size_t checked = 0;
  std::size_t failures = 0;
  double worst = 0.0;
  std::optional<FailureDump> first;

  void fail(FailureDump d) {
    ++failures;
    if (!first) first = std::move(d);
  }
};

inline FailureDump dump(const ContrastiveBatch& batch, std::string check, LossKind kind,
                        const LossParams& params, std::size_t b, std::size_t anchor, std::size_t other,
                        double lhs, double rhs) {
  FailureDump d{std::move(check), kind, params, b, anchor, other, lhs, rhs, batch.points(), {}};
  for (std::size_t i = 0; i < batch.size(); ++i) d.positives.push_back(batch.positives(i));
  return d;
}

inline std::vector<ContrastiveBatch> sample_batches(const VerifyConfig& cfg, std::size_t n,
                                                    std::uint64_t stream) {
  Rng rng(cfg.seed, stream);
  std::vector<ContrastiveBatch> out;
  out.reserve(n);
  for (std::size_t b = 0; b < n; ++b) out.push_back(random_batch(cfg.batch_spec, rng));
  return out;
}

inline std::vector<LossParams> param_grid(const VerifyConfig& cfg) {
  std::vector<LossParams> out;
  for (double t : cfg.taus) {
    for (double k1 : cfg.k1s) {
      for (double k2 : cfg.k2s) out.push_back({t, k1, k2});
    }
  }
  return out;
}

inline std::string params_label(const LossParams& p) {
  std::ostringstream os;
  os << "tau=" << p.tau << " k1=" << p.k1 << " k2=" << p.k2;
  return os.str();
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

// Runs fn(batch, index) -> Tally over the batches in parallel and folds the
// tallies into a PropertyResult. `worst_is_max` picks how `worst` merges.
template <class Fn>
PropertyResult run_suite(std::string name, const std::vector<ContrastiveBatch>& batches, Fn&& fn,
                         bool worst_is_max = true) {
  const auto started = std::chrono::steady_clock::now();
  const auto tallies = parallel_map<Tally>(batches.size(), [&](std::size_t b) { return fn(batches[b], b); });
  PropertyResult r;
  r.name = std::move(name);
  r.worst = worst_is_max ? 0.0 : std::numeric_limits<double>::infinity();
  for (const auto& t : tallies) {
    r.checked += t.checked;
    r.failures += t.failures;
    r.worst = worst_is_max ? std::max(r.worst, t.worst) : std::min(r.worst, t.worst);
    if (!r.counterexample && t.first) r.counterexample = t.first;
  }
  r.passed = r.failures == 0;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return r;
}

inline void finish(PropertyResult& r, const std::string& what) {
  std::ostringstream os;
  os << r.checked << " " << what << ", " << r.failures << " failures, worst " << r.worst;
  r.detail = os.str();
}

// Small labelled problem for the suites that train.
inline Dataset tiny_dataset(std::uint64_t seed) { return make_gaussian_clusters(4, 12, 6, 0.15, seed); }

inline TrainConfig tiny_train_config(const VerifyConfig& cfg) {
  TrainConfig tc;
  tc.mlp = MlpSpec{{6, 8, 6}, {6, 6, 4}};
  tc.optim.epochs = cfg.training_epochs;
  tc.batch_size = 16;
  tc.seed = cfg.seed;
  return tc;
}

}  // namespace detail

// Analytic per-anchor and full-batch gradients against central differences.
inline PropertyResult check_gradient_oracle(const VerifyConfig& cfg) {
  const auto batches = detail::sample_batches(cfg, cfg.oracle_batches, 101);
  const auto grid = detail::param_grid(cfg);
  auto r = detail::run_suite("gradient_oracle", batches, [&](const ContrastiveBatch& batch, std::size_t b) {
    detail::Tally t;
    auto compare = [&](LossKind kind, const LossParams& p) {
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (!batch.has_positives(i)) continue;
        const Vector analytic = anchor_grad(batch, i, kind, p);
        const Vector numeric = fd::anchor_grad(batch, i, kind, p);
        const double err = fd::relative_error(analytic, numeric);
        ++t.checked;
        t.worst = std::max(t.worst, err);
        if (!(err <= cfg.fd_tolerance)) {
          t.fail(detail::dump(batch, "anchor_grad", kind, p, b, i, i, err, cfg.fd_tolerance));
        }
      }
      const Vector analytic = fd::flatten(full_batch_grad(batch, p, kind));
      const Vector numeric = fd::full_batch_grad(batch, kind, p);
      const double err = fd::relative_error(analytic, numeric);
      ++t.checked;
      t.worst = std::max(t.worst, err);
      if (!(err <= cfg.fd_tolerance)) {
        t.fail(detail::dump(batch, "full_batch_grad", kind, p, b, 0, 0, err, cfg.fd_tolerance));
      }
    };
    for (const auto& p : grid) compare(LossKind::tcl, p);
    for (double tau : cfg.taus) compare(LossKind::supcon, {tau, 0.0, 1.0});
    return t;
  });
  detail::finish(r, "gradients compared (relative error)");
  return r;
}

// TCL with k1 = 0, k2 = 1 against SupCon: losses, anchor and full gradients.
inline PropertyResult check_reduction_identity(const VerifyConfig& cfg) {
  const auto batches = detail::sample_batches(cfg, cfg.identity_batches, 102);
  auto r = detail::run_suite("reduction_identity", batches, [&](const ContrastiveBatch& batch, std::size_t b) {
    detail::Tally t;
    for (double tau : cfg.taus) {
      const LossParams p{tau, 0.0, 1.0};
      auto note = [&](const char* what, std::size_t i, double diff) {
        ++t.checked;
        t.worst = std::max(t.worst, diff);
        if (!(diff <= cfg.identity_tolerance)) {
          t.fail(detail::dump(batch, what, LossKind::tcl, p, b, i, i, diff, cfg.identity_tolerance));
        }
      };
      const auto tl = tcl_loss(batch, p);
      const auto sl = supcon_loss(batch, tau);
      note("loss_total", 0, std::abs(tl.total - sl.total));
      note("loss_per_anchor", 0, detail::max_abs_diff(tl.per_anchor, sl.per_anchor));
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (!batch.has_positives(i)) continue;
        note("anchor_grad", i, detail::max_abs_diff(tcl_anchor_grad(batch, i, p), supcon_anchor_grad(batch, i, tau)));
      }
      note("full_batch_grad", 0,
           detail::max_abs_diff(fd::flatten(full_batch_grad(batch, p, LossKind::tcl)),
                                fd::flatten(full_batch_grad(batch, p, LossKind::supcon))));
    }
    return t;
  });
  detail::finish(r, "comparisons (absolute difference)");
  return r;
}

// Same identity end to end: two trainings with equal seeds.
inline PropertyResult check_reduction_training(const VerifyConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  PropertyResult r;
  r.name = "reduction_identity_training";
  const Dataset ds = detail::tiny_dataset(cfg.seed);
  TrainConfig tc = detail::tiny_train_config(cfg);
  tc.loss = LossKind::supcon;
  tc.params = {0.1, 0.0, 1.0};
  const auto sup = train_contrastive(ds, tc);
  tc.loss = LossKind::tcl;
  const auto tcl = train_contrastive(ds, tc);
  if (sup.trace.steps.size() != tcl.trace.steps.size()) {
    r.failures = 1;
  } else {
    for (std::size_t s = 0; s < sup.trace.steps.size(); ++s) {
      const double diff = std::abs(sup.trace.steps[s].loss - tcl.trace.steps[s].loss);
      ++r.checked;
      r.worst = std::max(r.worst, diff);
      if (!(diff <= cfg.trace_tolerance)) ++r.failures;
    }
    for (std::size_t e = 0; e < sup.trace.epochs.size(); ++e) {
      const double diff = std::abs(sup.trace.epochs[e].loss - tcl.trace.epochs[e].loss);
      ++r.checked;
      r.worst = std::max(r.worst, diff);
      if (!(diff <= cfg.trace_tolerance)) ++r.failures;
    }
  }
  r.passed = r.failures == 0;
  detail::finish(r, "step/epoch losses compared");
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return r;
}

// Signed inequality on every positive pair; magnitude form on hard pairs in
// the hard-positive regime. Parameter combinations below the guarantee range
// are listed as skipped.
inline PropertyResult check_hard_positive_gain(const VerifyConfig& cfg) {
  const auto batches = detail::sample_batches(cfg, cfg.pair_batches, 103);
  std::vector<LossParams> grid;
  std::vector<std::string> skipped;
  for (const auto& p : detail::param_grid(cfg)) {
    if (p.within_guarantee_range()) {
      grid.push_back(p);
    } else {
      skipped.push_back(detail::params_label(p) + " (below k1, k2 >= 1)");
    }
  }
  const HardPositiveOptions opts{cfg.inject_y_sign_flip};
  std::vector<std::size_t> hard(batches.size(), 0), magnitude(batches.size(), 0);
  auto r = detail::run_suite(
      "hard_positive_gain", batches,
      [&](const ContrastiveBatch& batch, std::size_t b) {
        detail::Tally t;
        t.worst = std::numeric_limits<double>::infinity();
        for (const auto& p : grid) {
          PairCheckReport rep;
          check_hard_positive_batch(batch, p, rep, b, opts);
          t.checked += rep.pairs_checked;
          t.worst = std::min(t.worst, rep.min_margin);
          hard[b] += rep.hard_pairs_checked;
          magnitude[b] += rep.magnitude_form_failures;
          for (const auto& c : rep.counterexamples) {
            t.fail(detail::dump(batch, c.check, LossKind::tcl, p, b, c.anchor, c.other, c.lhs, c.rhs));
          }
          t.failures += rep.violations - rep.counterexamples.size();
        }
        return t;
      },
      false);
  r.skipped = std::move(skipped);
  std::size_t hard_total = 0, magnitude_total = 0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    hard_total += hard[b];
    magnitude_total += magnitude[b];
  }
  detail::finish(r, "positive pairs (worst = smallest signed margin)");
  r.detail += "; " + std::to_string(hard_total) + " hard pairs in the hard-positive regime; magnitude form " +
              "failed on " + std::to_string(magnitude_total) + " non-gating pairs";
  return r;
}

// TCL negative coefficient strictly increasing along the k2 grid for every
// negative pair.
inline PropertyResult check_negative_monotone(const VerifyConfig& cfg) {
  const auto batches = detail::sample_batches(cfg, cfg.pair_batches, 104);
  auto r = detail::run_suite(
      "negative_monotone", batches,
      [&](const ContrastiveBatch& batch, std::size_t b) {
        detail::Tally t;
        t.worst = std::numeric_limits<double>::infinity();
        for (double tau : cfg.taus) {
          for (double k1 : cfg.k1s) {
            const LossParams base{tau, k1, cfg.k2_grid.front()};
            const auto rep = verify_negative_monotone(batch, base, cfg.k2_grid, b);
            t.checked += rep.pairs_checked;
            if (rep.pairs_checked > 0) t.worst = std::min(t.worst, rep.min_margin);
            for (const auto& c : rep.counterexamples) {
              t.fail(detail::dump(batch, c.check, LossKind::tcl, base, b, c.anchor, c.other, c.lhs, c.rhs));
            }
            t.failures += rep.violations - rep.counterexamples.size();
          }
        }
        return t;
      },
      false);
  detail::finish(r, "negative pairs (worst = smallest step increase)");
  return r;
}

// L_i > 0 whenever the anchor has a negative or k1 > 0; total equals the sum.
inline PropertyResult check_loss_positivity(const VerifyConfig& cfg) {
  const auto batches = detail::sample_batches(cfg, cfg.property_batches, 105);
  const auto grid = detail::param_grid(cfg);
  auto r = detail::run_suite("loss_positivity", batches, [&](const ContrastiveBatch& batch, std::size_t b) {
    detail::Tally t;
    auto run = [&](LossKind kind, const LossParams& p) {
      const auto res = contrastive_loss(batch, kind, p);
      double sum = 0.0;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        sum += res.per_anchor[i];
        if (!batch.has_positives(i)) continue;
        const bool required = !batch.negatives(i).empty() || (kind == LossKind::tcl && p.k1 > 0.0);
        if (!required) continue;
        ++t.checked;
        if (!(res.per_anchor[i] > 0.0)) t.fail(detail::dump(batch, "loss_positive", kind, p, b, i, i, res.per_anchor[i], 0.0));
      }
      const double diff = std::abs(sum - res.total);
      t.worst = std::max(t.worst, diff);
      ++t.checked;
      if (!(diff <= 1e-10)) t.fail(detail::dump(batch, "total_is_sum", kind, p, b, 0, 0, res.total, sum));
    };
    for (const auto& p : grid) run(LossKind::tcl, p);
    for (double tau : cfg.taus) run(LossKind::supcon, {tau, 0.0, 1.0});
    return t;
  });
  detail::finish(r, "anchors and totals (worst = |total - sum|)");
  return r;
}

// Sum of (p - x) over positives plus sum of p over negatives is 0 for every
// SupCon anchor.
inline PropertyResult check_supcon_zero_sum(const VerifyConfig& cfg) {
  const auto batches = detail::sample_batches(cfg, cfg.property_batches, 106);
  auto r = detail::run_suite("supcon_zero_sum", batches, [&](const ContrastiveBatch& batch, std::size_t b) {
    detail::Tally t;
    for (double tau : cfg.taus) {
      const LossParams p{tau, 0.0, 1.0};
      for (const auto& a : decompose(batch, p, LossKind::supcon).anchors) {
        double s = 0.0;
        for (const auto& pc : a.positives) s += pc.weight();
        for (const auto& nc : a.negatives) s += nc.p;
        ++t.checked;
        t.worst = std::max(t.worst, std::abs(s));
        if (!(std::abs(s) <= 1e-12)) t.fail(detail::dump(batch, "zero_sum", LossKind::supcon, p, b, a.anchor, a.anchor, s, 0.0));
      }
    }
    return t;
  });
  detail::finish(r, "anchors (worst = |coefficient sum|)");
  return r;
}

// TCL negative p > 0 and y > 0 for k1, k2 > 0; TCL positive p below the
// SupCon one when k1 >= 1, or when k2 > 1 and the anchor has a negative.
inline PropertyResult check_coefficient_signs(const VerifyConfig& cfg) {
  const auto batches = detail::sample_batches(cfg, cfg.property_batches, 107);
  const auto grid = detail::param_grid(cfg);
  auto r = detail::run_suite("coefficient_signs", batches, [&](const ContrastiveBatch& batch, std::size_t b) {
    detail::Tally t;
    for (const auto& p : grid) {
      for (const auto& pair : hard_positive_magnitudes(batch, p)) {
        if (p.k1 > 0.0) {
          ++t.checked;
          if (!(pair.tcl_y > 0.0)) t.fail(detail::dump(batch, "y_positive", LossKind::tcl, p, b, pair.anchor, pair.positive, pair.tcl_y, 0.0));
        }
        const bool strict = p.k1 >= 1.0 || (p.k2 > 1.0 && !batch.negatives(pair.anchor).empty());
        if (strict) {
          ++t.checked;
          if (!(pair.tcl_p < pair.supcon_p)) {
            t.fail(detail::dump(batch, "tcl_p_below_supcon_p", LossKind::tcl, p, b, pair.anchor, pair.positive, pair.tcl_p, pair.supcon_p));
          }
        }
      }
      if (p.k2 > 0.0) {
        for (const auto& pair : hard_negative_magnitudes(batch, p)) {
          ++t.checked;
          if (!(pair.tcl_p > 0.0)) t.fail(detail::dump(batch, "p_in_positive", LossKind::tcl, p, b, pair.anchor, pair.negative, pair.tcl_p, 0.0));
        }
      }
    }
    return t;
  });
  detail::finish(r, "coefficients");
  return r;
}

// Reindexing the batch, positive sets included, leaves the loss unchanged.
inline PropertyResult check_permutation_invariance(const VerifyConfig& cfg) {
  const auto batches = detail::sample_batches(cfg, cfg.property_batches, 108);
  std::vector<std::vector<std::size_t>> perms;
  {
    Rng rng(cfg.seed, 109);
    for (const auto& batch : batches) {
      std::vector<std::size_t> perm(batch.size());
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      rng.shuffle(perm.begin(), perm.end());
      perms.push_back(std::move(perm));
    }
  }
  const auto grid = detail::param_grid(cfg);
  auto r = detail::run_suite("permutation_invariance", batches, [&](const ContrastiveBatch& batch, std::size_t b) {
    detail::Tally t;
    const auto moved = batch.permuted(perms[b]);
    auto run = [&](LossKind kind, const LossParams& p) {
      const auto a = contrastive_loss(batch, kind, p);
      const auto c = contrastive_loss(moved, kind, p);
      const double diff = std::abs(a.total - c.total);
      double anchor_diff = 0.0;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        anchor_diff = std::max(anchor_diff, std::abs(a.per_anchor[i] - c.per_anchor[perms[b][i]]));
      }
      t.checked += 1;
      t.worst = std::max({t.worst, diff, anchor_diff});
      if (!(diff <= 1e-10 && anchor_diff <= 1e-10)) {
        t.fail(detail::dump(batch, "permuted_loss", kind, p, b, 0, 0, a.total, c.total));
      }
    };
    for (const auto& p : grid) run(LossKind::tcl, p);
    for (double tau : cfg.taus) run(LossKind::supcon, {tau, 0.0, 1.0});
    return t;
  });
  detail::finish(r, "permuted batches (worst = absolute loss change)");
  return r;
}

// positive_term + negative_term = tau * anchor gradient, both losses.
inline PropertyResult check_decomposition_consistency(const VerifyConfig& cfg) {
  const auto batches = detail::sample_batches(cfg, cfg.property_batches, 110);
  const auto grid = detail::param_grid(cfg);
  auto r = detail::run_suite("decomposition_consistency", batches, [&](const ContrastiveBatch& batch, std::size_t b) {
    detail::Tally t;
    auto run = [&](LossKind kind, const LossParams& p) {
      for (const auto& a : decompose(batch, p, kind).anchors) {
        Vector sum = a.positive_term;
        axpy(1.0, a.negative_term, sum);
        Vector scaled = anchor_grad(batch, a.anchor, kind, p);
        for (double& x : scaled) x *= p.tau;
        const double diff = detail::max_abs_diff(sum, scaled);
        ++t.checked;
        t.worst = std::max(t.worst, diff);
        if (!(diff <= 1e-10)) t.fail(detail::dump(batch, "reassembled_gradient", kind, p, b, a.anchor, a.anchor, diff, 1e-10));
      }
    };
    for (const auto& p : grid) run(LossKind::tcl, p);
    for (double tau : cfg.taus) run(LossKind::supcon, {tau, 0.0, 1.0});
    return t;
  });
  detail::finish(r, "anchors (worst = absolute difference)");
  return r;
}

// Loss -> normalization -> MLP backprop against finite differences over
// every parameter of small random networks.
inline PropertyResult check_network_gradient(const VerifyConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  PropertyResult r;
  r.name = "network_gradient";
  Rng rng(cfg.seed, 111);
  const MlpSpec spec{{3, 5, 4}, {4, 4, 3}};
  const std::vector<std::pair<LossKind, LossParams>> cases{
      {LossKind::supcon, {0.5, 0.0, 1.0}}, {LossKind::tcl, {0.5, 1.0, 1.5}}, {LossKind::tcl, {0.1, 100.0, 1.0}}};
  for (std::size_t trial = 0; trial < 12; ++trial) {
    const auto& [kind, params] = cases[trial % cases.size()];
    Network net = init_network(spec, rng);
    const std::size_t sources = 3, views = 2;
    Eigen::MatrixXd x(static_cast<Eigen::Index>(sources * views), 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal(0.0, 1.0);
    std::vector<std::size_t> group(sources * views);
    for (std::size_t k = 0; k < group.size(); ++k) group[k] = k % sources;
    const auto sets = PositiveSets::from_groups(std::span<const std::size_t>(group));

    auto objective = [&](const Network& n) {
      const auto fp = forward(n, x);
      const auto res = contrastive_loss(ContrastiveBatch(fp.embeddings, sets), kind, params);
      return res.total / static_cast<double>(res.included_anchors);
    };
    const auto fp = forward(net, x);
    const ContrastiveBatch batch(fp.embeddings, sets);
    auto gz = full_batch_grad(batch, params, kind);
    const double scale = 1.0 / static_cast<double>(contrastive_loss(batch, kind, params).included_anchors);
    for (auto& g : gz) {
      for (double& v : g) v *= scale;
    }
    const Network analytic = backward(net, fp, gz);

    Vector a, numeric;
    for_each_tensor(
        [&](auto& param, const auto& grad) {
          for (Eigen::Index k = 0; k < param.size(); ++k) {
            const double saved = param.data()[k];
            param.data()[k] = saved + fd::kStep;
            const double up = objective(net);
            param.data()[k] = saved - fd::kStep;
            const double down = objective(net);
            param.data()[k] = saved;
            numeric.push_back((up - down) / (2.0 * fd::kStep));
            a.push_back(grad.data()[k]);
          }
        },
        net, analytic);
    const double err = fd::relative_error(a, numeric);
    ++r.checked;
    r.worst = std::max(r.worst, err);
    if (!(err <= cfg.mlp_fd_tolerance)) {
      ++r.failures;
      if (!r.counterexample) {
        r.counterexample = detail::dump(batch, "network_gradient", kind, params, trial, 0, 0, err, cfg.mlp_fd_tolerance);
      }
    }
  }
  r.passed = r.failures == 0;
  detail::finish(r, "networks (relative error over all parameters)");
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return r;
}

// Training the probe leaves the network bit-identical.
inline PropertyResult check_probe_isolation(const VerifyConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  PropertyResult r;
  r.name = "probe_isolation";
  const Dataset ds = detail::tiny_dataset(cfg.seed);
  const TrainConfig tc = detail::tiny_train_config(cfg);
  const Network net = train_contrastive(ds, tc).model;
  const Network before = net;
  ProbeConfig pc;
  pc.epochs = 5;
  pc.batch_size = 16;
  pc.seed = cfg.seed;
  const auto probe = train_linear_probe(net, ds, pc);
  r.checked = 1;
  r.passed = net == before && std::isfinite(probe.top1);
  r.failures = r.passed ? 0 : 1;
  r.detail = r.passed ? "encoder and projector unchanged by probe training" : "probe training modified the network";
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return r;
}

// Serialize/deserialize is bit-exact, and damaged images are rejected.
inline PropertyResult check_checkpoint_roundtrip(const VerifyConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  PropertyResult r;
  r.name = "checkpoint_roundtrip";
  Rng rng(cfg.seed, 112);
  const std::vector<MlpSpec> specs{MlpSpec{}, MlpSpec{{2, 1}, {1, 3}}, MlpSpec{{5, 7, 3, 4}, {4, 6, 2}}};
  for (const auto& spec : specs) {
    Network net = init_network(spec, rng);
    // Exercise special values that a text format would lose.
    net.encoder.front().weight(0, 0) = -0.0;
    net.encoder.front().bias(0) = std::nextafter(1.0, 2.0);
    auto bytes = serialize_checkpoint(net);
    ++r.checked;
    const Network back = deserialize_checkpoint(bytes);
    bool ok = back == net && serialize_checkpoint(back) == bytes &&
              std::signbit(back.encoder.front().weight(0, 0));
    auto rejects = [&](std::vector<std::uint8_t> damaged, bool version) {
      ++r.checked;
      try {
        deserialize_checkpoint(damaged);
      } catch (const VersionMismatch&) {
        return version;
      } catch (const CorruptFile&) {
        return !version;
      }
      return false;
    };
    auto flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x10;
    auto truncated = bytes;
    truncated.resize(bytes.size() - 9);
    auto versioned = bytes;
    versioned[4] = static_cast<std::uint8_t>(kCheckpointVersion + 1);
    ok = rejects(flipped, false) && ok;
    ok = rejects(truncated, false) && ok;
    ok = rejects(versioned, true) && ok;
    if (!ok) ++r.failures;
  }
  r.passed = r.failures == 0;
  r.detail = std::to_string(r.checked) + " roundtrip/rejection checks over " + std::to_string(specs.size()) +
             " layer layouts, " + std::to_string(r.failures) + " failures";
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return r;
}

// Equal seeds give identical datasets, batches, traces and parameters.
inline PropertyResult check_determinism(const VerifyConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  PropertyResult r;
  r.name = "determinism";
  auto expect = [&](bool ok) {
    ++r.checked;
    if (!ok) ++r.failures;
  };
  const Dataset a = detail::tiny_dataset(cfg.seed), b = detail::tiny_dataset(cfg.seed);
  expect(a.features == b.features && a.labels == b.labels);

  Rng ra(cfg.seed, 113), rb(cfg.seed, 113);
  for (int k = 0; k < 3; ++k) {
    const auto va = build_supervised_batch(a, 8, ViewConfig{}, ra);
    const auto vb = build_supervised_batch(b, 8, ViewConfig{}, rb);
    expect(va.features == vb.features && va.positives == vb.positives);
  }

  TrainConfig tc = detail::tiny_train_config(cfg);
  for (Mode mode : {Mode::supervised, Mode::selfsup}) {
    tc.mode = mode;
    const auto x = train_contrastive(a, tc);
    const auto y = train_contrastive(a, tc);
    expect(x.model == y.model);
    bool same = x.trace.steps.size() == y.trace.steps.size();
    for (std::size_t s = 0; same && s < x.trace.steps.size(); ++s) {
      const auto &p = x.trace.steps[s], &q = y.trace.steps[s];
      same = p.loss == q.loss && p.lr == q.lr && p.views == q.views &&
             p.magnitudes.mean_pos_grad == q.magnitudes.mean_pos_grad &&
             p.magnitudes.mean_neg_grad == q.magnitudes.mean_neg_grad;
    }
    expect(same);
  }
  r.passed = r.failures == 0;
  r.detail = std::to_string(r.checked) + " repeated computations compared bitwise, " +
             std::to_string(r.failures) + " differed";
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return r;
}

inline VerifyReport run_verification(const VerifyConfig& cfg) {
  cfg.validate();
  VerifyReport report;
  report.properties.push_back(check_gradient_oracle(cfg));
  report.properties.push_back(check_reduction_identity(cfg));
  report.properties.push_back(check_reduction_training(cfg));
  report.properties.push_back(check_hard_positive_gain(cfg));
  report.properties.push_back(check_negative_monotone(cfg));
  report.properties.push_back(check_loss_positivity(cfg));
  report.properties.push_back(check_supcon_zero_sum(cfg));
  report.properties.push_back(check_coefficient_signs(cfg));
  report.properties.push_back(check_permutation_invariance(cfg));
  report.properties.push_back(check_decomposition_consistency(cfg));
  report.properties.push_back(check_network_gradient(cfg));
  report.properties.push_back(check_probe_isolation(cfg));
  report.properties.push_back(check_checkpoint_roundtrip(cfg));
  report.properties.push_back(check_determinism(cfg));
  return report;
}

}  // namespace tcl
