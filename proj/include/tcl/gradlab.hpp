#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tcl/batch.hpp"
#include "tcl/error.hpp"
#include "tcl/losses.hpp"
#include "tcl/numerics.hpp"
#include "tcl/trace.hpp"

namespace tcl {

// A pair is reported as "hard" when the anchor and partner are this close to
// orthogonal.
inline constexpr double kHardDotThreshold = 0.1;

struct PositiveCoefficient {
  std::size_t index = 0;
  double x = 0.0;
  double p = 0.0;
  double y = 0.0;
  // Coefficient of z_p inside tau * dL_i/dz_i.
  double weight() const { return p - x - y; }
};

struct NegativeCoefficient {
  std::size_t index = 0;
  double p = 0.0;
};

struct AnchorDecomposition {
  std::size_t anchor = 0;
  Vector positive_term;  // sum over positives of z_p * (p - x - y)
  Vector negative_term;  // sum over negatives of z_n * p
  std::vector<PositiveCoefficient> positives;
  std::vector<NegativeCoefficient> negatives;
};

// Split of tau * dL_i/dz_i into its positive and negative parts for every
// anchor that has at least one positive.
struct GradientDecomposition {
  LossKind kind = LossKind::tcl;
  LossParams params;
  std::vector<AnchorDecomposition> anchors;
};

inline GradientDecomposition decompose(const ContrastiveBatch& batch, const LossParams& params,
                                       LossKind kind) {
  detail::check_kind_params(kind, params);
  GradientDecomposition out{kind, params, {}};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch.has_positives(i)) continue;
    const auto c = detail::anchor_coefficients(batch, i, kind, params);
    const auto& pos = batch.positives(i);
    const auto& neg = batch.negatives(i);
    AnchorDecomposition a;
    a.anchor = i;
    a.positive_term.assign(batch.dim(), 0.0);
    a.negative_term.assign(batch.dim(), 0.0);
    for (std::size_t k = 0; k < pos.size(); ++k) {
      PositiveCoefficient pc{pos[k], c.x, c.positive_p[k], c.positive_y[k]};
      axpy(pc.weight(), batch.point(pos[k]), a.positive_term);
      a.positives.push_back(pc);
    }
    for (std::size_t k = 0; k < neg.size(); ++k) {
      axpy(c.negative_p[k], batch.point(neg[k]), a.negative_term);
      a.negatives.push_back({neg[k], c.negative_p[k]});
    }
    out.anchors.push_back(std::move(a));
  }
  if (out.anchors.empty()) throw EmptyPositiveSet("no anchor in the batch has a positive");
  return out;
}

inline GradientMagnitudes summarize(const GradientDecomposition& d) {
  GradientMagnitudes m;
  std::size_t with_neg = 0;
  for (const auto& a : d.anchors) {
    m.mean_pos_grad += norm(a.positive_term);
    m.mean_neg_grad += norm(a.negative_term);
    double pos_coeff = 0.0;
    for (const auto& p : a.positives) pos_coeff += std::abs(p.weight());
    m.mean_pos_coeff += pos_coeff / static_cast<double>(a.positives.size());
    if (!a.negatives.empty()) {
      double neg_coeff = 0.0;
      for (const auto& n : a.negatives) neg_coeff += n.p;
      m.mean_neg_coeff += neg_coeff / static_cast<double>(a.negatives.size());
      ++with_neg;
    }
  }
  const double anchors = static_cast<double>(d.anchors.size());
  m.mean_pos_grad /= anchors;
  m.mean_neg_grad /= anchors;
  m.mean_pos_coeff /= anchors;
  if (with_neg > 0) m.mean_neg_coeff /= static_cast<double>(with_neg);
  return m;
}

inline GradientMagnitudes gradient_magnitudes(const ContrastiveBatch& batch,
                                              const LossParams& params, LossKind kind) {
  return summarize(decompose(batch, params, kind));
}

// Hard-positive gradient coefficients of SupCon and TCL side by side.
struct PositivePairMagnitudes {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  double dot = 0.0;
  double x = 0.0;
  double supcon_p = 0.0;
  double tcl_p = 0.0;
  double tcl_y = 0.0;

  double supcon_signed() const { return x - supcon_p; }
  double tcl_signed() const { return x - tcl_p + tcl_y; }
  double supcon_magnitude() const { return std::abs(supcon_signed()); }
  double tcl_magnitude() const { return std::abs(tcl_signed()); }
  bool hard() const { return std::abs(dot) < kHardDotThreshold; }
};

struct NegativePairMagnitudes {
  std::size_t anchor = 0;
  std::size_t negative = 0;
  double dot = 0.0;
  double supcon_p = 0.0;
  double tcl_p = 0.0;
  bool hard() const { return std::abs(dot) < kHardDotThreshold; }
};

inline std::vector<PositivePairMagnitudes> hard_positive_magnitudes(const ContrastiveBatch& batch,
                                                                    const LossParams& params) {
  params.validate();
  std::vector<PositivePairMagnitudes> out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch.has_positives(i)) continue;
    const auto s = detail::anchor_coefficients(batch, i, LossKind::supcon, params);
    const auto t = detail::anchor_coefficients(batch, i, LossKind::tcl, params);
    const auto& pos = batch.positives(i);
    for (std::size_t k = 0; k < pos.size(); ++k) {
      out.push_back({i, pos[k], dot(batch.point(i), batch.point(pos[k])), s.x, s.positive_p[k],
                     t.positive_p[k], t.positive_y[k]});
    }
  }
  return out;
}

inline std::vector<NegativePairMagnitudes> hard_negative_magnitudes(const ContrastiveBatch& batch,
                                                                    const LossParams& params) {
  params.validate();
  std::vector<NegativePairMagnitudes> out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch.has_positives(i)) continue;
    const auto s = detail::anchor_coefficients(batch, i, LossKind::supcon, params);
    const auto t = detail::anchor_coefficients(batch, i, LossKind::tcl, params);
    const auto& neg = batch.negatives(i);
    for (std::size_t k = 0; k < neg.size(); ++k) {
      out.push_back({i, neg[k], dot(batch.point(i), batch.point(neg[k])), s.negative_p[k],
                     t.negative_p[k]});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random batches for property checks.

struct BatchSpec {
  std::size_t min_size = 4;
  std::size_t max_size = 12;
  std::size_t min_dim = 2;
  std::size_t max_dim = 8;
  // Share of positive groups laid out orthogonally to their first member,
  // which produces hard positives.
  double hard_fraction = 0.25;
  // Share of the remaining groups drawn as a tight cluster (easy positives).
  double clustered_fraction = 0.5;

  void validate() const {
    if (min_size < 4 || max_size < min_size) throw InvalidShape("batch size range must start at >= 4");
    if (min_dim < 2 || max_dim < min_dim) throw InvalidShape("dimension range must start at >= 2");
  }

  std::string describe() const {
    return "M in [" + std::to_string(min_size) + "," + std::to_string(max_size) + "], d in [" +
           std::to_string(min_dim) + "," + std::to_string(max_dim) + "]";
  }
};

// Groups of size >= 2 (every anchor has a positive) and at least two groups
// (every anchor has a negative).
inline ContrastiveBatch random_batch(const BatchSpec& spec, Rng& rng) {
  spec.validate();
  const std::size_t m = spec.min_size + rng.index(spec.max_size - spec.min_size + 1);
  const std::size_t d = spec.min_dim + rng.index(spec.max_dim - spec.min_dim + 1);
  const std::size_t groups = 2 + rng.index(m / 2 - 1);
  std::vector<std::size_t> group_of(m);
  for (std::size_t i = 0; i < m; ++i) group_of[i] = i < 2 * groups ? i / 2 : rng.index(groups);
  rng.shuffle(group_of.begin(), group_of.end());

  std::vector<Embedding> z(m, l2_normalize(Vector{1.0}));
  for (std::size_t g = 0; g < groups; ++g) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < m; ++i) {
      if (group_of[i] == g) members.push_back(i);
    }
    const double regime = rng.uniform();
    const Embedding lead = rng.unit_vector(d);
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (k == 0) {
        z[members[k]] = lead;
      } else if (regime < spec.hard_fraction) {
        Vector w = rng.normal_vector(d);
        axpy(-dot(w, lead.span()), lead.span(), w);
        Vector jitter = rng.normal_vector(d, 0.02);
        axpy(1.0, jitter, w);
        z[members[k]] = l2_normalize(w);
      } else if (regime < spec.hard_fraction + (1.0 - spec.hard_fraction) * spec.clustered_fraction) {
        Vector w = rng.normal_vector(d, 0.3);
        axpy(1.0, lead.span(), w);
        z[members[k]] = l2_normalize(w);
      } else {
        z[members[k]] = rng.unit_vector(d);
      }
    }
  }
  return ContrastiveBatch(z, PositiveSets::from_groups(std::span<const std::size_t>(group_of)));
}

// ---------------------------------------------------------------------------
// Pair-level gradient checks.

struct Counterexample {
  std::string check;
  std::size_t batch = 0;
  std::size_t anchor = 0;
  std::size_t other = 0;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct PairCheckReport {
  std::string descriptor;
  std::size_t batches = 0;
  std::size_t pairs_checked = 0;
  std::size_t hard_pairs_checked = 0;
  // Pairs where |x - p_tcl + y| > |x - p_supcon| fails; outside the
  // hard-positive regime this is expected and does not gate the result.
  std::size_t magnitude_form_failures = 0;
  double min_margin = std::numeric_limits<double>::infinity();
  std::size_t violations = 0;
  std::vector<Counterexample> counterexamples;  // first kMaxStored violations

  static constexpr std::size_t kMaxStored = 64;

  bool passed() const { return violations == 0; }

  void record(Counterexample c) {
    ++violations;
    if (counterexamples.size() < kMaxStored) counterexamples.push_back(std::move(c));
  }
};

struct HardPositiveOptions {
  // Fault-injection hook: evaluates TCL's hard-positive term with -y.
  bool flip_y_sign = false;
};

// Checks (x - p_tcl + y) > (x - p_supcon) on every positive pair, and the
// magnitude form on hard pairs with x >= p_supcon.
inline void check_hard_positive_batch(const ContrastiveBatch& batch, const LossParams& params,
                                      PairCheckReport& report, std::size_t batch_index,
                                      HardPositiveOptions opts = {}) {
  for (const auto& pair : hard_positive_magnitudes(batch, params)) {
    const double tcl = opts.flip_y_sign ? pair.x - pair.tcl_p - pair.tcl_y : pair.tcl_signed();
    const double sup = pair.supcon_signed();
    ++report.pairs_checked;
    report.min_margin = std::min(report.min_margin, tcl - sup);
    if (!(tcl > sup)) {
      report.record({"hard_positive_signed", batch_index, pair.anchor, pair.positive, tcl, sup});
    }
    const bool magnitude_holds = std::abs(tcl) > std::abs(sup);
    if (!magnitude_holds) ++report.magnitude_form_failures;
    if (pair.hard() && pair.x >= pair.supcon_p) {
      ++report.hard_pairs_checked;
      if (!magnitude_holds) {
        report.record({"hard_positive_magnitude", batch_index, pair.anchor, pair.positive,
                       std::abs(tcl), std::abs(sup)});
      }
    }
  }
  ++report.batches;
}

inline PairCheckReport verify_hard_positive_gain(std::size_t n_batches, const BatchSpec& spec,
                                                 const LossParams& params, Rng& rng,
                                                 HardPositiveOptions opts = {}) {
  params.validate();
  if (!params.within_guarantee_range()) throw InvalidParams("the hard-positive guarantee requires k1 >= 1 and k2 >= 1");
  PairCheckReport report;
  report.descriptor = spec.describe() + ", tau=" + std::to_string(params.tau) +
                      ", k1=" + std::to_string(params.k1) + ", k2=" + std::to_string(params.k2);
  for (std::size_t b = 0; b < n_batches; ++b) {
    check_hard_positive_batch(random_batch(spec, rng), params, report, b, opts);
  }
  return report;
}

inline void validate_k2_grid(std::span<const double> grid) {
  if (grid.size() < 2) throw InvalidGrid("k2 grid needs at least two values");
  for (std::size_t g = 0; g < grid.size(); ++g) {
    if (!(grid[g] >= 0.0) || !std::isfinite(grid[g])) throw InvalidGrid("k2 values must be finite and >= 0");
    if (g > 0 && !(grid[g] > grid[g - 1])) throw InvalidGrid("k2 grid must be strictly increasing");
  }
}

// TCL negative coefficient along an increasing k2 grid, with tau and k1
// taken from `base`.
inline PairCheckReport verify_negative_monotone(const ContrastiveBatch& batch, const LossParams& base,
                                                std::span<const double> k2_grid,
                                                std::size_t batch_index = 0) {
  validate_k2_grid(k2_grid);
  PairCheckReport report;
  report.descriptor = "k1=" + std::to_string(base.k1) + ", tau=" + std::to_string(base.tau);
  // values[g][pair]
  std::vector<std::vector<NegativePairMagnitudes>> values;
  for (double k2 : k2_grid) {
    LossParams p = base;
    p.k2 = k2;
    values.push_back(hard_negative_magnitudes(batch, p));
  }
  for (std::size_t pair = 0; pair < values.front().size(); ++pair) {
    ++report.pairs_checked;
    for (std::size_t g = 1; g < values.size(); ++g) {
      const double lo = values[g - 1][pair].tcl_p;
      const double hi = values[g][pair].tcl_p;
      report.min_margin = std::min(report.min_margin, hi - lo);
      if (!(hi > lo)) {
        report.record({"negative_monotone_step", batch_index, values[g][pair].anchor,
                       values[g][pair].negative, hi, lo});
      }
    }
  }
  report.batches = 1;
  return report;
}

// ---------------------------------------------------------------------------
// Training curves.

struct CurvePoint {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  GradientMagnitudes magnitudes;
};

// Epoch-indexed means of the logged per-step magnitudes.
inline std::vector<CurvePoint> mean_gradient_curves(const TrainTrace& trace) {
  std::map<std::size_t, CurvePoint> by_epoch;
  for (const auto& s : trace.steps) {
    if (!s.has_gradients) continue;
    auto& pt = by_epoch[s.epoch];
    pt.epoch = s.epoch;
    ++pt.steps;
    pt.magnitudes.mean_pos_grad += s.magnitudes.mean_pos_grad;
    pt.magnitudes.mean_neg_grad += s.magnitudes.mean_neg_grad;
    pt.magnitudes.mean_pos_coeff += s.magnitudes.mean_pos_coeff;
    pt.magnitudes.mean_neg_coeff += s.magnitudes.mean_neg_coeff;
  }
  if (by_epoch.empty()) throw EmptyTrace("trace holds no gradient-logged steps");
  std::vector<CurvePoint> out;
  for (auto& [epoch, pt] : by_epoch) {
    const double n = static_cast<double>(pt.steps);
    pt.magnitudes.mean_pos_grad /= n;
    pt.magnitudes.mean_neg_grad /= n;
    pt.magnitudes.mean_pos_coeff /= n;
    pt.magnitudes.mean_neg_coeff /= n;
    out.push_back(pt);
  }
  return out;
}

}  // namespace tcl
