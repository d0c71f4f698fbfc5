#pragma once

#include "fsinc/config.hpp"

#include <iosfwd>
#include <optional>

namespace fsinc {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitSolver = 3;

int exit_code(ErrorKind kind);

const char* code_version();

// In-memory result of one subcommand: files by fixed name, and the metric row
// a sweep aggregates (names + formatted values).
struct Artifacts {
  std::vector<std::pair<std::string, std::string>> files;
  std::vector<std::pair<std::string, std::string>> metrics;

  const std::string& file(const std::string& name) const;
};

// simulate | control | probe-carleman | probe-observability
Artifacts execute(const std::string& command, const RunConfig& cfg);

// Runs cfg.sweep_command once per sweep value of cfg.sweep_parameter on top of `ini`.
// probe-carleman sweeps emit s,lambda,ratio rows; the others value,<metrics>.
Artifacts execute_sweep(const IniFile& ini, const RunConfig& cfg);

// manifest.json: config hash, code version, seed, threads, resolved config, tolerances.
std::string manifest_json(const std::string& command, const RunConfig& cfg, int threads);

struct CliOptions {
  std::string command;
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

// Full run: read config, apply env overrides and --seed, validate, execute and
// write artifacts to <out>/<confighash>-<seed>/.  Returns the exit code.
int run(const CliOptions& opt, const std::vector<std::pair<std::string, std::string>>& env, std::ostream& out,
        std::ostream& err);

int cli_main(int argc, char** argv);

}  // namespace fsinc
