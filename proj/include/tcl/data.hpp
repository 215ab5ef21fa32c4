#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tcl/batch.hpp"
#include "tcl/error.hpp"
#include "tcl/numerics.hpp"

namespace tcl {

struct Dataset {
  Eigen::MatrixXd features;  // N x d_in, one sample per row
  std::optional<std::vector<int>> labels;
  std::size_t class_count = 0;
  std::uint64_t seed = 0;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
  bool has_labels() const { return labels.has_value(); }

  std::span<const int> label_span() const {
    if (!labels) throw NoLabels("dataset has no labels");
    return *labels;
  }

  void validate() const {
    if (size() < 1) throw InvalidShape("dataset is empty");
    if (!features.allFinite()) throw InvalidShape("dataset has non-finite features");
    if (labels) {
      if (labels->size() != size()) throw InvalidShape("label count does not match sample count");
      for (int y : *labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= class_count) {
          throw InvalidLabel("label " + std::to_string(y) + " outside [0, class_count)");
        }
      }
    }
  }

  Dataset subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    if (labels) out.labels.emplace();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out.features.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(rows[r]));
      if (labels) out.labels->push_back((*labels)[rows[r]]);
    }
    out.class_count = class_count;
    out.seed = seed;
    return out;
  }

  Vector sample(std::size_t r) const {
    Vector v(dim());
    for (std::size_t k = 0; k < dim(); ++k) v[k] = features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
    return v;
  }
};

// Class c is an isotropic Gaussian (std = spread) around a random point of
// the unit sphere. Samples are stored class-major.
inline Dataset make_gaussian_clusters(std::size_t classes, std::size_t per_class, std::size_t d_in,
                                      double spread, std::uint64_t seed) {
  if (classes < 2) throw InvalidShape("need at least two classes");
  if (per_class < 1) throw InvalidShape("need at least one sample per class");
  if (d_in < 1) throw InvalidShape("input dimension must be positive");
  if (!(spread > 0.0)) throw InvalidShape("spread must be positive");
  Rng rng(seed);
  std::vector<Embedding> centers;
  for (std::size_t c = 0; c < classes; ++c) centers.push_back(rng.unit_vector(d_in));

  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(classes * per_class), static_cast<Eigen::Index>(d_in));
  ds.labels.emplace();
  ds.class_count = classes;
  ds.seed = seed;
  Eigen::Index r = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t s = 0; s < per_class; ++s, ++r) {
      for (std::size_t k = 0; k < d_in; ++k) {
        ds.features(r, static_cast<Eigen::Index>(k)) = centers[c][k] + rng.normal(0.0, spread);
      }
      ds.labels->push_back(static_cast<int>(c));
    }
  }
  return ds;
}

struct ViewConfig {
  std::size_t views = 2;  // 2 = pairs, 3 = triplets
  double noise_std = 0.1;
  double mask_prob = 0.1;
  bool rotation = false;
  double max_rotation = std::numbers::pi / 6.0;

  void validate() const {
    if (views < 2) throw InvalidShape("need at least two views per sample");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw InvalidShape("noise_std must be >= 0");
    if (!(mask_prob >= 0.0 && mask_prob < 1.0)) throw InvalidShape("mask_prob must lie in [0, 1)");
    if (!(max_rotation >= 0.0)) throw InvalidShape("max_rotation must be >= 0");
  }
};

// Feature-space augmentation: additive Gaussian noise, independent coordinate
// dropout, then optionally a rotation in a random coordinate plane.
inline std::vector<Vector> augment_views(std::span<const double> sample, const ViewConfig& cfg,
                                         Rng& rng) {
  cfg.validate();
  std::vector<Vector> out;
  out.reserve(cfg.views);
  for (std::size_t v = 0; v < cfg.views; ++v) {
    Vector view(sample.begin(), sample.end());
    if (cfg.noise_std > 0.0) {
      for (double& x : view) x += rng.normal(0.0, cfg.noise_std);
    }
    if (cfg.mask_prob > 0.0) {
      for (double& x : view) {
        if (rng.bernoulli(cfg.mask_prob)) x = 0.0;
      }
    }
    if (cfg.rotation && view.size() >= 2) {
      const std::size_t a = rng.index(view.size());
      std::size_t b = rng.index(view.size() - 1);
      if (b >= a) ++b;
      const double theta = rng.uniform(-cfg.max_rotation, cfg.max_rotation);
      const double c = std::cos(theta), s = std::sin(theta);
      const double xa = view[a], xb = view[b];
      view[a] = c * xa - s * xb;
      view[b] = s * xa + c * xb;
    }
    out.push_back(std::move(view));
  }
  return out;
}

// Augmented batch before encoding. Row v * B + b holds view v of the b-th
// sampled source.
struct ViewBatch {
  Eigen::MatrixXd features;
  PositiveSets positives;
  std::vector<std::size_t> source;  // dataset row of each view
  std::size_t sources = 0;
  std::size_t views_per_source = 0;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
};

namespace detail {

inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
  idx.resize(k);
  return idx;
}

template <class GroupOf>
ViewBatch assemble_views(const Dataset& ds, std::span<const std::size_t> rows,
                         const ViewConfig& cfg, Rng& rng, GroupOf group_of) {
  cfg.validate();
  if (rows.empty()) throw InvalidShape("batch needs at least one source sample");
  const std::size_t b = rows.size();
  const std::size_t v = cfg.views;
  ViewBatch out;
  out.features.resize(static_cast<Eigen::Index>(b * v), static_cast<Eigen::Index>(ds.dim()));
  out.source.resize(b * v);
  out.sources = b;
  out.views_per_source = v;
  std::vector<long> groups(b * v);
  for (std::size_t s = 0; s < b; ++s) {
    if (rows[s] >= ds.size()) throw InvalidShape("source row out of range");
    const auto views = augment_views(ds.sample(rows[s]), cfg, rng);
    for (std::size_t k = 0; k < v; ++k) {
      const std::size_t r = k * b + s;
      for (std::size_t c = 0; c < ds.dim(); ++c) {
        out.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = views[k][c];
      }
      out.source[r] = rows[s];
      groups[r] = group_of(s);
    }
  }
  out.positives = PositiveSets::from_groups(std::span<const long>(groups));
  return out;
}

}  // namespace detail

// Positives of a view: every other view in the batch whose source carries its label.
inline ViewBatch build_supervised_batch(const Dataset& ds, std::span<const std::size_t> rows,
                                        const ViewConfig& cfg, Rng& rng) {
  const auto labels = ds.label_span();
  return detail::assemble_views(ds, rows, cfg, rng,
                                [&](std::size_t s) { return static_cast<long>(labels[rows[s]]); });
}

inline ViewBatch build_supervised_batch(const Dataset& ds, std::size_t batch_size,
                                        const ViewConfig& cfg, Rng& rng) {
  if (!ds.has_labels()) throw NoLabels("supervised batches need labels");
  if (batch_size > ds.size()) throw BatchTooLarge("batch size exceeds dataset size");
  const auto rows = detail::sample_without_replacement(ds.size(), batch_size, rng);
  return build_supervised_batch(ds, rows, cfg, rng);
}

// Labels are ignored; the positives of a view are the other views of its own source sample.
inline ViewBatch build_selfsup_batch(const Dataset& ds, std::span<const std::size_t> rows,
                                     const ViewConfig& cfg, Rng& rng) {
  return detail::assemble_views(ds, rows, cfg, rng, [](std::size_t s) { return static_cast<long>(s); });
}

inline ViewBatch build_selfsup_batch(const Dataset& ds, std::size_t batch_size,
                                     const ViewConfig& cfg, Rng& rng) {
  if (batch_size > ds.size()) throw BatchTooLarge("batch size exceeds dataset size");
  const auto rows = detail::sample_without_replacement(ds.size(), batch_size, rng);
  return build_selfsup_batch(ds, rows, cfg, rng);
}

// ---------------------------------------------------------------------------
// CSV: header "f0,...,f{d-1}[,label]", one sample per row.

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

inline Dataset load_csv_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("cannot open dataset " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing header row");
  const auto header = detail::split_commas(detail::trim(line));
  bool has_label = detail::trim(header.back()) == "label";
  const std::size_t d = header.size() - (has_label ? 1 : 0);
  if (d == 0) throw ParseError(1, "header declares no feature columns");
  for (std::size_t k = 0; k < d; ++k) {
    if (detail::trim(header[k]) != "f" + std::to_string(k)) {
      throw ParseError(1, "expected column name f" + std::to_string(k));
    }
  }

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    const auto cells = detail::split_commas(trimmed);
    if (cells.size() != header.size()) {
      throw ParseError(line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                                    std::to_string(cells.size()));
    }
    for (std::size_t k = 0; k < d; ++k) {
      const auto cell = detail::trim(cells[k]);
      double x = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), x);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(x)) {
        throw ParseError(line_no, "malformed number '" + std::string(cell) + "' in column f" +
                                      std::to_string(k));
      }
      values.push_back(x);
    }
    if (has_label) {
      const auto cell = detail::trim(cells[d]);
      int y = 0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), y);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || y < 0) {
        throw ParseError(line_no, "malformed label '" + std::string(cell) + "'");
      }
      labels.push_back(y);
    }
  }

  const std::size_t n = values.size() / d;
  if (n == 0) throw ParseError(line_no, "no data rows");
  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < d; ++k) {
      ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = values[r * d + k];
    }
  }
  if (has_label) {
    int top = 0;
    for (int y : labels) top = std::max(top, y);
    ds.class_count = static_cast<std::size_t>(top) + 1;
    ds.labels = std::move(labels);
  }
  return ds;
}

inline void save_csv_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t k = 0; k < ds.dim(); ++k) out << (k ? "," : "") << 'f' << k;
  if (ds.has_labels()) out << ",label";
  out << '\n';
  char buf[32];
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (std::size_t k = 0; k < ds.dim(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g",
                    ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)));
      out << (k ? "," : "") << buf;
    }
    if (ds.has_labels()) out << ',' << (*ds.labels)[r];
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace tcl
