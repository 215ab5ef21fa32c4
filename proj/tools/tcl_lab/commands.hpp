#pragma once

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "run_config.hpp"
#include "tcl/checkpoint.hpp"
#include "tcl/data.hpp"
#include "tcl/gradlab.hpp"
#include "tcl/sweep.hpp"
#include "tcl/trainer.hpp"
#include "tcl/verify.hpp"

namespace tcl::cli {

// Shortest text that reads back to the same double.
inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Comma-separated, LF-terminated, header always present.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add(std::vector<std::string> row) {
    if (row.size() != header_.size()) throw Error("CSV row width does not match header");
    rows_.push_back(std::move(row));
  }

  std::size_t rows() const { return rows_.size(); }

  std::string str() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t k = 0; k < cells.size(); ++k) {
        if (k) out += ',';
        out += cells[k];
      }
      out += '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, text.data(), text.size());
}

inline void prepare_output_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

inline Dataset load_dataset(const RunConfig& c) {
  if (c.data.path) return load_csv_dataset(*c.data.path);
  return make_gaussian_clusters(c.data.classes, c.data.per_class, c.data.d_in, c.data.spread,
                                c.data.seed.value_or(c.run_seed()));
}

// Aligns the encoder input with the dataset when layers were not pinned.
inline void fit_encoder_to(RunConfig& c, const Dataset& ds) {
  if (c.encoder_from_data) c.train.mlp.encoder.front() = ds.dim();
  if (c.train.mlp.input_dim() != ds.dim()) {
    throw ConfigError("encoder input width " + std::to_string(c.train.mlp.input_dim()) +
                      " does not match dataset width " + std::to_string(ds.dim()));
  }
}

inline nlohmann::json to_json(const GradientMagnitudes& m) {
  return {{"mean_pos_grad", m.mean_pos_grad},
          {"mean_neg_grad", m.mean_neg_grad},
          {"mean_pos_coeff", m.mean_pos_coeff},
          {"mean_neg_coeff", m.mean_neg_coeff}};
}

inline nlohmann::json to_json(const FailureDump& d) {
  return {{"check", d.check},
          {"loss", tcl::to_string(d.kind)},
          {"tau", d.params.tau},
          {"k1", d.params.k1},
          {"k2", d.params.k2},
          {"batch", d.batch},
          {"anchor", d.anchor},
          {"other", d.other},
          {"lhs", d.lhs},
          {"rhs", d.rhs},
          {"points", d.points},
          {"positives", d.positives}};
}

inline nlohmann::json to_json(const PropertyResult& r) {
  nlohmann::json j{{"name", r.name},     {"passed", r.passed},   {"checked", r.checked},
                   {"failures", r.failures}, {"worst", r.worst}, {"skipped", r.skipped},
                   {"detail", r.detail}, {"seconds", r.seconds}};
  if (r.counterexample) j["counterexample"] = to_json(*r.counterexample);
  return j;
}

// ---------------------------------------------------------------------------

inline int run_verify(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const VerifyReport report = run_verification(c.verify);
  out << std::left << std::setw(30) << "property" << std::setw(7) << "result"
      << "detail\n";
  for (const auto& p : report.properties) {
    out << std::setw(30) << p.name << std::setw(7) << (p.passed ? "PASS" : "FAIL") << p.detail << '\n';
    for (const auto& s : p.skipped) out << std::setw(37) << "" << "skipped: " << s << '\n';
  }
  nlohmann::json j{{"passed", report.passed()}, {"seed", c.verify.seed}, {"properties", nlohmann::json::array()}};
  for (const auto& p : report.properties) j["properties"].push_back(to_json(p));
  prepare_output_dir(c.output_dir);
  write_text(c.output_dir / "verify.json", j.dump(2) + "\n");
  if (report.passed()) {
    out << "all " << report.properties.size() << " properties passed\n";
    return 0;
  }
  for (const auto& p : report.properties) {
    if (p.passed) continue;
    err << "FAILED: " << p.name << '\n';
    if (p.counterexample) err << to_json(*p.counterexample).dump() << '\n';
  }
  return 1;
}

inline CsvTable metrics_table(const ExperimentResult& r, bool with_probe) {
  CsvTable t({"epoch", "phase", "loss", "lr", "mean_pos_grad", "mean_neg_grad", "top1"});
  std::vector<CurvePoint> curves;
  if (r.train.trace.gradients_logged && !r.train.trace.steps.empty()) curves = mean_gradient_curves(r.train.trace);
  for (std::size_t e = 0; e < r.train.trace.epochs.size(); ++e) {
    const auto& rec = r.train.trace.epochs[e];
    std::string pos, neg;
    if (e < curves.size()) {
      pos = format_number(curves[e].magnitudes.mean_pos_grad);
      neg = format_number(curves[e].magnitudes.mean_neg_grad);
    }
    t.add({std::to_string(rec.epoch), "contrastive", format_number(rec.loss), format_number(rec.lr), pos, neg, ""});
  }
  if (with_probe) {
    for (const auto& pe : r.probe.epochs) {
      t.add({std::to_string(pe.epoch), "probe", format_number(pe.loss), format_number(pe.lr), "", "",
             format_number(pe.top1)});
    }
  }
  return t;
}

inline nlohmann::json trace_json(const RunConfig& c, const ExperimentResult& r, bool with_probe) {
  const auto& tc = c.train;
  nlohmann::json j;
  j["config"] = {{"mode", tcl::to_string(tc.mode)}, {"loss", tcl::to_string(tc.loss)},
                 {"tau", tc.params.tau},           {"k1", tc.params.k1},
                 {"k2", tc.params.k2},             {"views", tc.views.views},
                 {"batch_size", tc.batch_size},    {"epochs", tc.optim.epochs},
                 {"lr", tc.optim.base_lr},         {"encoder", tc.mlp.encoder},
                 {"projector", tc.mlp.projector},  {"seed", c.run_seed()}};
  j["warnings"] = r.train.trace.warnings;
  j["gradients_logged"] = r.train.trace.gradients_logged;
  j["epochs"] = nlohmann::json::array();
  std::vector<CurvePoint> curves;
  if (r.train.trace.gradients_logged && !r.train.trace.steps.empty()) curves = mean_gradient_curves(r.train.trace);
  for (std::size_t e = 0; e < r.train.trace.epochs.size(); ++e) {
    const auto& rec = r.train.trace.epochs[e];
    nlohmann::json row{{"epoch", rec.epoch}, {"loss", rec.loss}, {"lr", rec.lr}, {"steps", rec.steps},
                       {"views_per_batch", rec.views_per_batch}, {"wall_seconds", rec.wall_seconds}};
    if (e < curves.size()) row["gradients"] = to_json(curves[e].magnitudes);
    j["epochs"].push_back(row);
  }
  j["steps"] = nlohmann::json::array();
  for (const auto& s : r.train.trace.steps) {
    nlohmann::json row{{"epoch", s.epoch}, {"step", s.step}, {"views", s.views}, {"loss", s.loss}, {"lr", s.lr}};
    if (s.has_gradients) row["gradients"] = to_json(s.magnitudes);
    j["steps"].push_back(row);
  }
  if (with_probe) {
    j["probe"]["top1"] = r.probe.top1;
    j["probe"]["train_size"] = r.probe.split.train.size();
    j["probe"]["test_size"] = r.probe.split.test.size();
  }
  return j;
}

inline int run_train(RunConfig c, std::ostream& out, std::ostream& err) {
  const Dataset ds = load_dataset(c);
  fit_encoder_to(c, ds);
  prepare_output_dir(c.output_dir);
  const bool with_probe = ds.has_labels() && c.probe.epochs > 0;
  ExperimentResult r;
  if (with_probe) {
    r = run_experiment(ds, c.train, c.probe);
  } else {
    if (!ds.has_labels()) err << "warning: dataset has no labels; skipping the linear probe\n";
    r.train = train_contrastive(ds, c.train);
  }
  for (const auto& w : r.train.trace.warnings) err << "warning: " << w << '\n';

  write_text(c.output_dir / "metrics.csv", metrics_table(r, with_probe).str());
  write_text(c.output_dir / "trace.json", trace_json(c, r, with_probe).dump(2) + "\n");
  save_checkpoint(r.train.model, c.output_dir / "model.ckpt");

  const auto& epochs = r.train.trace.epochs;
  out << tcl::to_string(c.train.mode) << ' ' << tcl::to_string(c.train.loss) << ": " << epochs.size()
      << " contrastive epochs";
  if (!epochs.empty()) out << ", loss " << epochs.front().loss << " -> " << epochs.back().loss;
  if (with_probe) out << ", probe top1 " << r.probe.top1 << '%';
  out << "\nwrote " << (c.output_dir / "metrics.csv").string() << ", trace.json, model.ckpt\n";
  return 0;
}

inline CsvTable sweep_table(const std::vector<SweepRow>& rows) {
  CsvTable t({"k1", "k2", "mean_pos_mag", "mean_neg_mag", "supcon_pos_mag", "supcon_neg_mag", "top1"});
  for (const auto& r : rows) {
    t.add({format_number(r.k1), format_number(r.k2), format_number(r.tcl.mean_pos_grad),
           format_number(r.tcl.mean_neg_grad), format_number(r.supcon.mean_pos_grad),
           format_number(r.supcon.mean_neg_grad), r.top1 ? format_number(*r.top1) : ""});
  }
  return t;
}

inline int run_gradscan(RunConfig c, std::ostream& out, std::ostream&) {
  const Dataset ds = load_dataset(c);
  fit_encoder_to(c, ds);
  SweepConfig s = sweep_config(c);
  if (c.checkpoint) {
    s.model = load_checkpoint(*c.checkpoint);
    if (s.model->spec.input_dim() != ds.dim()) throw ConfigError("checkpoint input width does not match dataset");
    s.mlp = s.model->spec;
  }
  prepare_output_dir(c.output_dir);
  const auto rows = k_sweep(ds, s);
  write_text(c.output_dir / "sweep.csv", sweep_table(rows).str());
  out << rows.size() << " grid points over " << s.n_batches << " frozen batches; wrote "
      << (c.output_dir / "sweep.csv").string() << '\n';
  return 0;
}

}  // namespace tcl::cli
