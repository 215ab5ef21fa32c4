#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "tcl/batch.hpp"
#include "tcl/losses.hpp"
#include "tcl/numerics.hpp"

// Central finite-difference oracles. They only evaluate loss values, never
// the closed-form gradients they are compared against.
namespace tcl::fd {

inline constexpr double kStep = 1e-5;

// Gradients smaller than this in norm are compared in absolute terms.
inline constexpr double kRelativeFloor = 1e-3;

template <class F>
Vector central_difference(F&& f, Vector x, double h = kStep) {
  Vector g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double saved = x[k];
    x[k] = saved + h;
    const double up = f(x);
    x[k] = saved - h;
    const double down = f(x);
    x[k] = saved;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

// ||a - b|| / max(||a||, ||b||, floor)
inline double relative_error(std::span<const double> a, std::span<const double> b,
                             double floor = kRelativeFloor) {
  double diff = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) diff += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(diff) / std::max({norm(a), norm(b), floor});
}

// d L_i / d z_i with every other point fixed.
inline Vector anchor_grad(const ContrastiveBatch& batch, std::size_t i, LossKind kind,
                          const LossParams& params, double h = kStep) {
  auto points = batch.points();
  auto f = [&](const Vector& zi) {
    points[i] = zi;
    return detail::anchor_coefficients(batch.with_points(points), i, kind, params).loss;
  };
  return central_difference(f, batch.points()[i], h);
}

// d (sum_i L_i) / d z_j for every j, flattened row-major (j, coordinate).
inline Vector full_batch_grad(const ContrastiveBatch& batch, LossKind kind, const LossParams& params,
                              double h = kStep) {
  const std::size_t m = batch.size(), d = batch.dim();
  Vector flat;
  flat.reserve(m * d);
  for (const auto& p : batch.points()) flat.insert(flat.end(), p.begin(), p.end());
  auto f = [&](const Vector& x) {
    std::vector<Vector> pts(m, Vector(d));
    for (std::size_t j = 0; j < m; ++j) std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(j * d), d, pts[j].begin());
    return contrastive_loss(batch.with_points(std::move(pts)), kind, params).total;
  };
  return central_difference(f, flat, h);
}

inline Vector flatten(const std::vector<Vector>& rows) {
  Vector out;
  for (const auto& r : rows) out.insert(out.end(), r.begin(), r.end());
  return out;
}

}  // namespace tcl::fd
