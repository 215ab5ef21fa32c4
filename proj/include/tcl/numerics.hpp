#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "tcl/error.hpp"

namespace tcl {

// Raw real vector, e.g. a projector output before normalization.
using Vector = std::vector<double>;

inline constexpr double kZeroNormThreshold = 1e-12;

// Unit-norm vector. Only l2_normalize can produce one, so every Embedding
// in the program satisfies | ||z|| - 1 | <= 1e-9.
class Embedding {
 public:
  const Vector& components() const noexcept { return components_; }
  std::span<const double> span() const noexcept { return components_; }
  std::size_t size() const noexcept { return components_.size(); }
  double operator[](std::size_t k) const noexcept { return components_[k]; }

  friend bool operator==(const Embedding&, const Embedding&) = default;

 private:
  explicit Embedding(Vector v) : components_(std::move(v)) {}
  friend Embedding l2_normalize(std::span<const double> v);

  Vector components_;
};

inline double squared_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc;
}

inline double norm(std::span<const double> v) { return std::sqrt(squared_norm(v)); }

inline Embedding l2_normalize(std::span<const double> v) {
  const double n = norm(v);
  if (!(n > kZeroNormThreshold)) {
    throw ZeroVector("cannot normalize a vector with norm " + std::to_string(n));
  }
  Vector out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return Embedding(std::move(out));
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionMismatch("dot: sizes " + std::to_string(a.size()) + " and " +
                            std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

inline double dot(const Embedding& a, const Embedding& b) { return dot(a.span(), b.span()); }

// log(sum(exp(xs))) with a max shift. -inf entries are allowed and act as
// zero terms.
inline double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) throw EmptyInput("log_sum_exp of an empty sequence");
  const double top = *std::max_element(xs.begin(), xs.end());
  if (top == -std::numeric_limits<double>::infinity()) return top;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - top);
  return top + std::log(acc);
}

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t k = 0; k < x.size(); ++k) y[k] += alpha * x[k];
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Seeded PRNG passed explicitly to every stochastic operation. Independent
// streams for the same seed are obtained through the stream id.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : engine_(mix(seed, stream)) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }

  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <class It>
  void shuffle(It first, It last) {
    std::shuffle(first, last, engine_);
  }

  Vector normal_vector(std::size_t d, double stddev = 1.0) {
    Vector v(d);
    for (double& x : v) x = normal(0.0, stddev);
    return v;
  }

  Embedding unit_vector(std::size_t d) {
    for (;;) {
      Vector v = normal_vector(d);
      if (norm(v) > 1e-6) return l2_normalize(v);
    }
  }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
    return splitmix(seed ^ splitmix(stream + 0x632be59bd9b4e019ULL));
  }

  std::mt19937_64 engine_;
};

}  // namespace tcl
