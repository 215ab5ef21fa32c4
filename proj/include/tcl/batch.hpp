#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tcl/error.hpp"
#include "tcl/numerics.hpp"

namespace tcl {

// Positive-set structure of an augmented batch: the positives of every
// anchor, with the negatives (everything that is neither the anchor nor a
// positive) derived on construction.
class PositiveSets {
 public:
  PositiveSets() = default;

  explicit PositiveSets(std::vector<std::vector<std::size_t>> positives)
      : positives_(std::move(positives)) {
    const std::size_t m = positives_.size();
    std::vector<std::vector<char>> member(m, std::vector<char>(m, 0));
    for (std::size_t i = 0; i < m; ++i) {
      auto& set = positives_[i];
      std::sort(set.begin(), set.end());
      if (std::adjacent_find(set.begin(), set.end()) != set.end()) {
        throw InvalidBatch("duplicate entry in P(" + std::to_string(i) + ")");
      }
      for (std::size_t j : set) {
        if (j >= m) throw InvalidBatch("positive index " + std::to_string(j) + " out of range");
        if (j == i) throw InvalidBatch("anchor " + std::to_string(i) + " listed as its own positive");
        member[i][j] = 1;
      }
    }
    negatives_.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        if (i != j && member[i][j] != member[j][i]) {
          throw InvalidBatch("positivity not symmetric between " + std::to_string(i) + " and " +
                             std::to_string(j));
        }
        if (i != j && !member[i][j]) negatives_[i].push_back(j);
      }
    }
  }

  // Positives of i: every other index carrying the same group id (label or source sample).
  template <class Id>
  static PositiveSets from_groups(std::span<const Id> group_of) {
    std::vector<std::vector<std::size_t>> sets(group_of.size());
    for (std::size_t i = 0; i < group_of.size(); ++i) {
      for (std::size_t j = 0; j < group_of.size(); ++j) {
        if (i != j && group_of[i] == group_of[j]) sets[i].push_back(j);
      }
    }
    return PositiveSets(std::move(sets));
  }

  std::size_t size() const noexcept { return positives_.size(); }
  const std::vector<std::size_t>& positives(std::size_t i) const { return positives_.at(i); }
  const std::vector<std::size_t>& negatives(std::size_t i) const { return negatives_.at(i); }
  bool has_positives(std::size_t i) const { return !positives_.at(i).empty(); }

  // Relabel with index map new_index = perm[old_index].
  PositiveSets permuted(std::span<const std::size_t> perm) const {
    std::vector<std::vector<std::size_t>> sets(size());
    for (std::size_t i = 0; i < size(); ++i) {
      for (std::size_t j : positives_[i]) sets[perm[i]].push_back(perm[j]);
    }
    return PositiveSets(std::move(sets));
  }

  friend bool operator==(const PositiveSets& a, const PositiveSets& b) {
    return a.positives_ == b.positives_;
  }

 private:
  std::vector<std::vector<std::size_t>> positives_;
  std::vector<std::vector<std::size_t>> negatives_;
};

// Embeddings of an augmented batch I together with its positive sets.
//
// The loss formulas are defined on arbitrary points of R^d; the usual entry
// point takes unit-norm Embeddings, while from_points() admits off-sphere
// points (finite-difference probes perturb single coordinates).
class ContrastiveBatch {
 public:
  ContrastiveBatch(const std::vector<Embedding>& embeddings, PositiveSets structure)
      : structure_(std::move(structure)) {
    points_.reserve(embeddings.size());
    for (const auto& e : embeddings) points_.push_back(e.components());
    check();
  }

  static ContrastiveBatch from_points(std::vector<Vector> points, PositiveSets structure) {
    return ContrastiveBatch(std::move(points), std::move(structure));
  }

  std::size_t size() const noexcept { return points_.size(); }
  std::size_t dim() const noexcept { return points_.empty() ? 0 : points_.front().size(); }
  const std::vector<Vector>& points() const noexcept { return points_; }
  std::span<const double> point(std::size_t i) const { return points_.at(i); }
  const PositiveSets& structure() const noexcept { return structure_; }
  const std::vector<std::size_t>& positives(std::size_t i) const { return structure_.positives(i); }
  const std::vector<std::size_t>& negatives(std::size_t i) const { return structure_.negatives(i); }
  bool has_positives(std::size_t i) const { return structure_.has_positives(i); }

  ContrastiveBatch with_points(std::vector<Vector> points) const {
    return ContrastiveBatch(std::move(points), structure_);
  }

  // Reindex: element i moves to position perm[i].
  ContrastiveBatch permuted(std::span<const std::size_t> perm) const {
    std::vector<Vector> pts(size());
    for (std::size_t i = 0; i < size(); ++i) pts[perm[i]] = points_[i];
    return ContrastiveBatch(std::move(pts), structure_.permuted(perm));
  }

 private:
  ContrastiveBatch(std::vector<Vector> points, PositiveSets structure)
      : points_(std::move(points)), structure_(std::move(structure)) {
    check();
  }

  void check() const {
    if (points_.size() != structure_.size()) {
      throw InvalidBatch("batch has " + std::to_string(points_.size()) +
                         " embeddings but positive sets for " + std::to_string(structure_.size()));
    }
    for (const auto& p : points_) {
      if (p.size() != dim()) throw DimensionMismatch("embeddings of unequal dimension in batch");
    }
  }

  std::vector<Vector> points_;
  PositiveSets structure_;
};

}  // namespace tcl
