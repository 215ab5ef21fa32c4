#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tcl/error.hpp"
#include "tcl/sweep.hpp"
#include "tcl/trainer.hpp"
#include "tcl/verify.hpp"

namespace tcl::cli {

using nlohmann::json;

enum class Command { verify, train, gradscan };

inline Command parse_command(const std::string& s) {
  if (s == "verify") return Command::verify;
  if (s == "train") return Command::train;
  if (s == "gradscan") return Command::gradscan;
  throw ConfigError("unknown command '" + s + "'");
}

inline const char* to_string(Command c) {
  switch (c) {
    case Command::verify: return "verify";
    case Command::train: return "train";
    case Command::gradscan: return "gradscan";
  }
  return "?";
}

// Synthetic set parameters, or a CSV path that replaces them.
struct DataSpec {
  std::optional<std::filesystem::path> path;
  std::size_t classes = 10;
  std::size_t per_class = 100;
  std::size_t d_in = 32;
  double spread = 0.15;
  std::optional<std::uint64_t> seed;  // defaults to the run seed
};

struct RunConfig {
  Command command = Command::verify;
  std::optional<std::uint64_t> seed;
  std::filesystem::path output_dir = ".";
  DataSpec data;
  TrainConfig train;
  ProbeConfig probe;
  // gradscan
  std::vector<double> k1_grid{1.0, 1000.0, 5000.0, 50000.0};
  std::vector<double> k2_grid{1.0};
  std::size_t sweep_batches = 8;
  bool sweep_probe = false;
  std::optional<std::filesystem::path> checkpoint;
  // The encoder input width tracks the dataset unless layers were given.
  bool encoder_from_data = true;
  // verify
  VerifyConfig verify;

  std::uint64_t run_seed() const { return seed.value_or(0); }
};

// Keys accepted in the flat JSON config and as command-line overrides.
inline const std::set<std::string, std::less<>>& known_keys() {
  static const std::set<std::string, std::less<>> keys{
      "command", "seed", "output_dir",
      "data_path", "classes", "per_class", "d_in", "spread", "data_seed",
      "mode", "loss", "tau", "k1", "k2",
      "views", "noise_std", "mask_prob", "rotation", "max_rotation",
      "encoder", "projector",
      "lr", "momentum", "weight_decay", "epochs", "batch_size", "log_gradients",
      "probe_epochs", "probe_lr", "probe_batch_size", "train_fraction",
      "k1_grid", "k2_grid", "sweep_batches", "sweep_probe", "checkpoint",
      "oracle_batches", "identity_batches", "pair_batches", "property_batches",
      "verify_epochs", "inject_y_sign_flip"};
  return keys;
}

namespace detail {

template <class T>
T get(const json& j, std::string_view key) {
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0)) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!j.is_number()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!j.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!j.is_string()) throw ConfigError("");
    }
    return j.get<T>();
  } catch (const std::exception&) {
    throw ConfigError("bad value for '" + std::string(key) + "': " + j.dump());
  }
}

template <class T>
std::vector<T> get_list(const json& j, std::string_view key) {
  if (!j.is_array()) throw ConfigError("'" + std::string(key) + "' must be an array");
  std::vector<T> out;
  for (const auto& x : j) out.push_back(get<T>(x, key));
  return out;
}

inline Mode parse_mode(const std::string& s) {
  if (s == "supervised") return Mode::supervised;
  if (s == "selfsup") return Mode::selfsup;
  throw ConfigError("mode must be 'supervised' or 'selfsup', got '" + s + "'");
}

inline LossKind parse_loss(const std::string& s) {
  if (s == "supcon") return LossKind::supcon;
  if (s == "tcl") return LossKind::tcl;
  throw ConfigError("loss must be 'supcon' or 'tcl', got '" + s + "'");
}

}  // namespace detail

// Parses one override value: JSON when it parses, otherwise a bare string.
inline json parse_override_value(const std::string& text) {
  json v = json::parse(text, nullptr, false);
  return v.is_discarded() ? json(text) : v;
}

// Turns trailing command-line words into key/value pairs. Accepted forms:
// `key=value`, `--key=value` and `--key value`; dashes in keys map to
// underscores.
inline json parse_overrides(const std::vector<std::string>& words) {
  json out = json::object();
  for (std::size_t k = 0; k < words.size(); ++k) {
    std::string w = words[k];
    const bool flag = w.rfind("--", 0) == 0;
    if (flag) w = w.substr(2);
    std::string key, value;
    if (const auto eq = w.find('='); eq != std::string::npos) {
      key = w.substr(0, eq);
      value = w.substr(eq + 1);
    } else if (flag && k + 1 < words.size()) {
      key = w;
      value = words[++k];
    } else {
      throw ConfigError("cannot parse override '" + words[k] + "' (expected key=value)");
    }
    for (char& c : key) {
      if (c == '-') c = '_';
    }
    if (key.empty()) throw ConfigError("empty override key in '" + words[k] + "'");
    out[key] = parse_override_value(value);
  }
  return out;
}

inline json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    json j = json::parse(in);
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

inline SweepConfig sweep_config(const RunConfig& c) {
  SweepConfig s;
  s.mode = c.train.mode;
  s.views = c.train.views;
  s.mlp = c.train.mlp;
  s.batch_size = c.train.batch_size;
  s.n_batches = c.sweep_batches;
  s.tau = c.train.params.tau;
  s.k1_grid = c.k1_grid;
  s.k2_grid = c.k2_grid;
  s.seed = c.run_seed();
  s.with_probe = c.sweep_probe;
  s.train = c.train;
  s.probe = c.probe;
  return s;
}

// Builds a RunConfig from merged flat settings. Mode-dependent defaults
// (k1, k2, views) are applied before explicit values.
inline RunConfig build_config(const json& settings) {
  for (const auto& [key, value] : settings.items()) {
    if (!known_keys().contains(key)) throw ConfigError("unknown config key '" + key + "'");
    if (value.is_object()) throw ConfigError("config is flat; '" + key + "' must not be an object");
  }
  using detail::get;
  using detail::get_list;
  auto has = [&](const char* k) { return settings.contains(k); };
  auto at = [&](const char* k) -> const json& { return settings.at(k); };

  RunConfig c;
  if (!has("command")) throw ConfigError("missing 'command'");
  c.command = parse_command(get<std::string>(at("command"), "command"));
  if (has("seed")) c.seed = get<std::uint64_t>(at("seed"), "seed");
  if (has("output_dir")) c.output_dir = get<std::string>(at("output_dir"), "output_dir");

  if (has("data_path")) c.data.path = get<std::string>(at("data_path"), "data_path");
  if (has("classes")) c.data.classes = get<std::size_t>(at("classes"), "classes");
  if (has("per_class")) c.data.per_class = get<std::size_t>(at("per_class"), "per_class");
  if (has("d_in")) c.data.d_in = get<std::size_t>(at("d_in"), "d_in");
  if (has("spread")) c.data.spread = get<double>(at("spread"), "spread");
  if (has("data_seed")) c.data.seed = get<std::uint64_t>(at("data_seed"), "data_seed");

  TrainConfig& t = c.train;
  if (has("mode")) t.mode = detail::parse_mode(get<std::string>(at("mode"), "mode"));
  if (t.mode == Mode::selfsup) {
    t.params = {0.1, 1.0, 1.5};
    t.views.views = 3;
  } else {
    t.params = {0.1, 5000.0, 1.0};
    t.views.views = 2;
  }
  if (has("loss")) t.loss = detail::parse_loss(get<std::string>(at("loss"), "loss"));
  if (has("tau")) t.params.tau = get<double>(at("tau"), "tau");
  if (has("k1")) t.params.k1 = get<double>(at("k1"), "k1");
  if (has("k2")) t.params.k2 = get<double>(at("k2"), "k2");
  if (has("views")) t.views.views = get<std::size_t>(at("views"), "views");
  if (has("noise_std")) t.views.noise_std = get<double>(at("noise_std"), "noise_std");
  if (has("mask_prob")) t.views.mask_prob = get<double>(at("mask_prob"), "mask_prob");
  if (has("rotation")) t.views.rotation = get<bool>(at("rotation"), "rotation");
  if (has("max_rotation")) t.views.max_rotation = get<double>(at("max_rotation"), "max_rotation");
  if (has("encoder")) t.mlp.encoder = get_list<std::size_t>(at("encoder"), "encoder");
  if (has("projector")) t.mlp.projector = get_list<std::size_t>(at("projector"), "projector");
  if (has("lr")) t.optim.base_lr = get<double>(at("lr"), "lr");
  if (has("momentum")) t.optim.momentum = get<double>(at("momentum"), "momentum");
  if (has("weight_decay")) t.optim.weight_decay = get<double>(at("weight_decay"), "weight_decay");
  if (has("epochs")) t.optim.epochs = get<std::size_t>(at("epochs"), "epochs");
  if (has("batch_size")) t.batch_size = get<std::size_t>(at("batch_size"), "batch_size");
  if (has("log_gradients")) t.log_gradients = get<bool>(at("log_gradients"), "log_gradients");
  c.encoder_from_data = !has("encoder");
  if (c.encoder_from_data) t.mlp.encoder.front() = c.data.d_in;

  ProbeConfig& p = c.probe;
  if (has("probe_epochs")) p.epochs = get<std::size_t>(at("probe_epochs"), "probe_epochs");
  if (has("probe_lr")) p.lr = get<double>(at("probe_lr"), "probe_lr");
  if (has("probe_batch_size")) p.batch_size = get<std::size_t>(at("probe_batch_size"), "probe_batch_size");
  if (has("train_fraction")) p.train_fraction = get<double>(at("train_fraction"), "train_fraction");
  p.momentum = t.optim.momentum;
  p.weight_decay = t.optim.weight_decay;

  if (has("k1_grid")) c.k1_grid = get_list<double>(at("k1_grid"), "k1_grid");
  if (has("k2_grid")) c.k2_grid = get_list<double>(at("k2_grid"), "k2_grid");
  if (has("sweep_batches")) c.sweep_batches = get<std::size_t>(at("sweep_batches"), "sweep_batches");
  if (has("sweep_probe")) c.sweep_probe = get<bool>(at("sweep_probe"), "sweep_probe");
  if (has("checkpoint")) c.checkpoint = get<std::string>(at("checkpoint"), "checkpoint");

  VerifyConfig& v = c.verify;
  if (has("oracle_batches")) v.oracle_batches = get<std::size_t>(at("oracle_batches"), "oracle_batches");
  if (has("identity_batches")) v.identity_batches = get<std::size_t>(at("identity_batches"), "identity_batches");
  if (has("pair_batches")) v.pair_batches = get<std::size_t>(at("pair_batches"), "pair_batches");
  if (has("property_batches")) v.property_batches = get<std::size_t>(at("property_batches"), "property_batches");
  if (has("verify_epochs")) v.training_epochs = get<std::size_t>(at("verify_epochs"), "verify_epochs");
  if (has("inject_y_sign_flip")) v.inject_y_sign_flip = get<bool>(at("inject_y_sign_flip"), "inject_y_sign_flip");

  const std::uint64_t seed = c.run_seed();
  t.seed = seed;
  p.seed = seed;
  v.seed = seed;

  // Schema-level validation before any work starts.
  switch (c.command) {
    case Command::verify:
      v.validate();
      break;
    case Command::train:
      t.validate();
      if (p.epochs > 0) p.optim().validate();
      break;
    case Command::gradscan:
      t.validate();
      sweep_config(c).validate();
      break;
  }
  return c;
}

// Config file (if any) overlaid by command-line settings.
inline RunConfig load_run_config(Command command, const std::optional<std::filesystem::path>& file,
                                 std::optional<std::uint64_t> seed, const std::vector<std::string>& overrides) {
  json settings = file ? read_config_file(*file) : json::object();
  if (settings.contains("command") && settings["command"] != to_string(command)) {
    throw ConfigError("config is for '" + settings["command"].dump() + "' but command is '" +
                      to_string(command) + "'");
  }
  settings["command"] = to_string(command);
  settings.update(parse_overrides(overrides));
  if (seed) settings["seed"] = *seed;
  return build_config(settings);
}

}  // namespace tcl::cli
