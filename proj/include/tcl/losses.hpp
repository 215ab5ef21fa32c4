#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tcl/batch.hpp"
#include "tcl/error.hpp"
#include "tcl/numerics.hpp"

namespace tcl {

enum class LossKind { supcon, tcl };

inline const char* to_string(LossKind kind) { return kind == LossKind::supcon ? "supcon" : "tcl"; }

// Temperature and the two tuning scalars of the TCL denominator. SupCon
// reads only tau.
struct LossParams {
  double tau = 0.1;
  double k1 = 1.0;
  double k2 = 1.0;

  void validate() const {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidParams("tau must be positive and finite");
    if (!(k1 >= 0.0) || !std::isfinite(k1)) throw InvalidParams("k1 must be finite and >= 0");
    if (!(k2 >= 0.0) || !std::isfinite(k2)) throw InvalidParams("k2 must be finite and >= 0");
  }

  // The hard-positive/hard-negative guarantees need k1, k2 >= 1; smaller
  // values are legal but only meaningful for reduction checks.
  bool within_guarantee_range() const { return k1 >= 1.0 && k2 >= 1.0; }

  friend bool operator==(const LossParams&, const LossParams&) = default;
};

struct LossResult {
  double total = 0.0;
  // L_i per anchor; zero for anchors excluded because they have no positive.
  std::vector<double> per_anchor;
  std::size_t included_anchors = 0;
};

// Softmax-style weights of one anchor, all taken from a single log-domain
// denominator. Vectors align with batch.positives(i) / batch.negatives(i).
struct AnchorCoefficients {
  std::size_t anchor = 0;
  double x = 0.0;                // 1 / number of positives
  double log_denominator = 0.0;  // log of the TCL or SupCon denominator
  double loss = 0.0;             // L_i
  std::vector<double> positive_p;
  std::vector<double> positive_y;  // identically zero for SupCon
  std::vector<double> negative_p;
};

namespace detail {

inline AnchorCoefficients anchor_coefficients(const ContrastiveBatch& batch, std::size_t i,
                                              LossKind kind, const LossParams& params) {
  if (i >= batch.size()) throw InvalidBatch("anchor index out of range");
  const auto& pos = batch.positives(i);
  const auto& neg = batch.negatives(i);
  if (pos.empty()) throw EmptyPositiveSet("anchor " + std::to_string(i) + " has no positives");

  const double tau = params.tau;
  const auto zi = batch.point(i);
  const bool use_k1 = kind == LossKind::tcl && params.k1 > 0.0;
  const bool use_neg = kind == LossKind::supcon || params.k2 > 0.0;
  const double log_k1 = use_k1 ? std::log(params.k1) : 0.0;
  const double log_k2 = kind == LossKind::tcl && params.k2 > 0.0 ? std::log(params.k2) : 0.0;

  std::vector<double> pos_dot(pos.size()), neg_dot(neg.size());
  for (std::size_t a = 0; a < pos.size(); ++a) pos_dot[a] = dot(zi, batch.point(pos[a]));
  for (std::size_t a = 0; a < neg.size(); ++a) neg_dot[a] = dot(zi, batch.point(neg[a]));

  // Exponents of the three sums; the k1 term carries no 1/tau.
  std::vector<double> exponents;
  exponents.reserve(2 * pos.size() + neg.size());
  for (double s : pos_dot) exponents.push_back(s / tau);
  if (use_k1) {
    for (double s : pos_dot) exponents.push_back(log_k1 - s);
  }
  if (use_neg) {
    for (double t : neg_dot) exponents.push_back(log_k2 + t / tau);
  }
  const double log_d = log_sum_exp(exponents);

  AnchorCoefficients c;
  c.anchor = i;
  c.x = 1.0 / static_cast<double>(pos.size());
  c.log_denominator = log_d;
  c.positive_p.resize(pos.size());
  c.positive_y.assign(pos.size(), 0.0);
  c.negative_p.assign(neg.size(), 0.0);
  double loss = 0.0;
  for (std::size_t a = 0; a < pos.size(); ++a) {
    const double logit = pos_dot[a] / tau;
    c.positive_p[a] = std::exp(logit - log_d);
    if (use_k1) c.positive_y[a] = tau * std::exp(log_k1 - pos_dot[a] - log_d);
    loss += log_d - logit;
  }
  c.loss = loss * c.x;
  if (use_neg) {
    for (std::size_t a = 0; a < neg.size(); ++a) {
      c.negative_p[a] = std::exp(log_k2 + neg_dot[a] / tau - log_d);
    }
  }
  return c;
}

// (1/tau) [ sum over positives of z_p (p - x - y) + sum over negatives of z_n p ]
inline Vector anchor_gradient(const ContrastiveBatch& batch, const AnchorCoefficients& c,
                              double tau) {
  Vector g(batch.dim(), 0.0);
  const auto& pos = batch.positives(c.anchor);
  const auto& neg = batch.negatives(c.anchor);
  for (std::size_t a = 0; a < pos.size(); ++a) {
    axpy((c.positive_p[a] - c.x - c.positive_y[a]) / tau, batch.point(pos[a]), g);
  }
  for (std::size_t a = 0; a < neg.size(); ++a) {
    axpy(c.negative_p[a] / tau, batch.point(neg[a]), g);
  }
  return g;
}

inline void check_kind_params(LossKind kind, const LossParams& params) {
  if (kind == LossKind::supcon) {
    LossParams{params.tau, 0.0, 1.0}.validate();
  } else {
    params.validate();
  }
}

}  // namespace detail

inline LossResult contrastive_loss(const ContrastiveBatch& batch, LossKind kind,
                                   const LossParams& params) {
  detail::check_kind_params(kind, params);
  LossResult r;
  r.per_anchor.assign(batch.size(), 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch.has_positives(i)) continue;
    r.per_anchor[i] = detail::anchor_coefficients(batch, i, kind, params).loss;
    r.total += r.per_anchor[i];
    ++r.included_anchors;
  }
  if (r.included_anchors == 0) throw EmptyPositiveSet("no anchor in the batch has a positive");
  return r;
}

inline LossResult supcon_loss(const ContrastiveBatch& batch, double tau) {
  return contrastive_loss(batch, LossKind::supcon, LossParams{tau, 0.0, 1.0});
}

inline LossResult tcl_loss(const ContrastiveBatch& batch, const LossParams& params) {
  return contrastive_loss(batch, LossKind::tcl, params);
}

// The TCL denominator as a plain number.
inline double tcl_denominator(const ContrastiveBatch& batch, std::size_t i,
                              const LossParams& params) {
  params.validate();
  return std::exp(detail::anchor_coefficients(batch, i, LossKind::tcl, params).log_denominator);
}

// dL_i / dz_i with every other embedding held fixed.
inline Vector anchor_grad(const ContrastiveBatch& batch, std::size_t i, LossKind kind,
                          const LossParams& params) {
  detail::check_kind_params(kind, params);
  const auto c = detail::anchor_coefficients(batch, i, kind, params);
  return detail::anchor_gradient(batch, c, params.tau);
}

inline Vector supcon_anchor_grad(const ContrastiveBatch& batch, std::size_t i, double tau) {
  return anchor_grad(batch, i, LossKind::supcon, LossParams{tau, 0.0, 1.0});
}

inline Vector tcl_anchor_grad(const ContrastiveBatch& batch, std::size_t i,
                              const LossParams& params) {
  return anchor_grad(batch, i, LossKind::tcl, params);
}

// Gradient of the total loss sum_i L_i with respect to every embedding.
// z_j enters its own term as the anchor and every other anchor's term as a
// positive or negative; both contributions are accumulated from the same
// per-pair coefficients dL_i/d(z_i . z_j).
inline std::vector<Vector> full_batch_grad(const ContrastiveBatch& batch, const LossParams& params,
                                           LossKind kind) {
  detail::check_kind_params(kind, params);
  const double tau = params.tau;
  std::vector<Vector> grad(batch.size(), Vector(batch.dim(), 0.0));
  std::size_t included = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch.has_positives(i)) continue;
    ++included;
    const auto c = detail::anchor_coefficients(batch, i, kind, params);
    const auto& pos = batch.positives(i);
    const auto& neg = batch.negatives(i);
    const auto zi = batch.point(i);
    for (std::size_t a = 0; a < pos.size(); ++a) {
      const double w = (c.positive_p[a] - c.x - c.positive_y[a]) / tau;
      axpy(w, batch.point(pos[a]), grad[i]);
      axpy(w, zi, grad[pos[a]]);
    }
    for (std::size_t a = 0; a < neg.size(); ++a) {
      const double w = c.negative_p[a] / tau;
      if (w == 0.0) continue;
      axpy(w, batch.point(neg[a]), grad[i]);
      axpy(w, zi, grad[neg[a]]);
    }
  }
  if (included == 0) throw EmptyPositiveSet("no anchor in the batch has a positive");
  return grad;
}

struct CrossEntropyResult {
  double loss = 0.0;
  Eigen::MatrixXd grad;  // same shape as the logits
};

// Mean softmax cross-entropy over the rows of `logits` (batch x classes).
inline CrossEntropyResult cross_entropy(const Eigen::MatrixXd& logits, std::span<const int> labels) {
  const auto n = logits.rows();
  const auto classes = logits.cols();
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw DimensionMismatch("cross_entropy: " + std::to_string(n) + " rows but " +
                            std::to_string(labels.size()) + " labels");
  }
  if (n == 0) throw EmptyInput("cross_entropy on an empty batch");
  CrossEntropyResult r;
  r.grad.resize(n, classes);
  std::vector<double> row(static_cast<std::size_t>(classes));
  for (Eigen::Index b = 0; b < n; ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    if (y < 0 || y >= classes) throw InvalidLabel("label " + std::to_string(y) + " out of range");
    for (Eigen::Index c = 0; c < classes; ++c) row[static_cast<std::size_t>(c)] = logits(b, c);
    const double lse = log_sum_exp(row);
    r.loss += lse - logits(b, y);
    for (Eigen::Index c = 0; c < classes; ++c) {
      r.grad(b, c) = std::exp(logits(b, c) - lse) - (c == y ? 1.0 : 0.0);
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  r.loss *= inv;
  r.grad *= inv;
  return r;
}

}  // namespace tcl
