#pragma once

#include <cstddef>
#include <vector>

#include "tcl/batch.hpp"
#include "tcl/numerics.hpp"

namespace testing_helpers {

inline tcl::Embedding unit(std::size_t d, std::size_t axis) {
  tcl::Vector v(d, 0.0);
  v[axis] = 1.0;
  return tcl::l2_normalize(v);
}

// Anchor 0, its positive 1 and a negative 2, mutually orthogonal. Point 2 is
// alone in its group, so it is excluded as an anchor.
inline tcl::ContrastiveBatch trivial_batch() {
  const std::vector<int> groups{0, 0, 1};
  return tcl::ContrastiveBatch({unit(3, 0), unit(3, 1), unit(3, 2)},
                               tcl::PositiveSets::from_groups(std::span<const int>(groups)));
}

inline tcl::ContrastiveBatch random_grouped_batch(tcl::Rng& rng, std::size_t m, std::size_t d,
                                                  std::size_t groups) {
  std::vector<std::size_t> g(m);
  for (std::size_t i = 0; i < m; ++i) g[i] = i % groups;
  std::vector<tcl::Embedding> z;
  for (std::size_t i = 0; i < m; ++i) z.push_back(rng.unit_vector(d));
  return tcl::ContrastiveBatch(z, tcl::PositiveSets::from_groups(std::span<const std::size_t>(g)));
}

}  // namespace testing_helpers
