// tcl-lab: gradient verification, contrastive training and k1/k2 sweeps.
//
// Exit codes: 0 success, 1 a verified property failed, 2 bad usage or
// configuration, 3 I/O or runtime failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "run_config.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct Invocation {
  std::string config;
  std::optional<std::uint64_t> seed;
};

// Errors that mean the request itself was inconsistent map to the usage
// code; everything else is a runtime failure.
int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const tcl::ConfigError*>(&e) || dynamic_cast<const tcl::InvalidParams*>(&e) ||
      dynamic_cast<const tcl::InvalidGrid*>(&e) || dynamic_cast<const tcl::InvalidShape*>(&e) ||
      dynamic_cast<const tcl::BatchTooLarge*>(&e) || dynamic_cast<const tcl::NoLabels*>(&e)) {
    return kExitUsage;
  }
  return kExitRuntime;
}

CLI::App* add_command(CLI::App& app, const char* name, const char* help, Invocation& inv) {
  auto* sub = app.add_subcommand(name, help);
  sub->add_option("--config", inv.config, "flat JSON config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", inv.seed, "seed for every random stream");
  // Anything else (key=value, --key value) is collected as an override.
  sub->allow_extras();
  sub->footer("Overrides: key=value or --key value for any config key, e.g. --loss supcon k1=0");
  return sub;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TCL / SupCon gradient lab"};
  app.require_subcommand(1);
  Invocation inv;
  auto* verify = add_command(app, "verify", "run the gradient and coefficient property suites", inv);
  auto* train = add_command(app, "train", "contrastive pre-training followed by a linear probe", inv);
  auto* gradscan = add_command(app, "gradscan", "gradient magnitudes over a k1/k2 grid", inv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  using namespace tcl::cli;
  const Command command = verify->parsed() ? Command::verify : train->parsed() ? Command::train : Command::gradscan;
  CLI::App* sub = verify->parsed() ? verify : train->parsed() ? train : gradscan;
  const std::vector<std::string> words = sub->remaining();

  RunConfig cfg;
  try {
    std::optional<std::filesystem::path> file;
    if (!inv.config.empty()) file = inv.config;
    cfg = load_run_config(command, file, inv.seed, words);
    if (command != Command::verify && !cfg.seed) {
      throw tcl::ConfigError(std::string(to_string(command)) + " requires --seed");
    }
  } catch (const tcl::Error& e) {
    std::cerr << "tcl-lab: config error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    switch (command) {
      case Command::verify: return run_verify(cfg, std::cout, std::cerr);
      case Command::train: return run_train(cfg, std::cout, std::cerr);
      case Command::gradscan: return run_gradscan(cfg, std::cout, std::cerr);
    }
  } catch (const std::exception& e) {
    const int code = exit_code_for(e);
    std::cerr << "tcl-lab: " << (code == kExitUsage ? "config error: " : "error: ") << e.what() << '\n';
    return code;
  }
  return kExitRuntime;
}
