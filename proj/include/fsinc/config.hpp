#pragma once

#include "fsinc/carleman.hpp"
#include "fsinc/control.hpp"

#include <iosfwd>
#include <map>
#include <string>

namespace fsinc {

// Flat "section.key" -> raw value map read from INI-style text:
//   [section]
//   key = value   ; or # starts a comment
// Keys before the first section header are rejected.
class IniFile {
 public:
  static IniFile parse(std::istream& is, const std::string& origin = "config");
  static IniFile load(const std::string& path);

  void set(const std::string& path, const std::string& value) { entries_[path] = value; }
  bool has(const std::string& path) const { return entries_.count(path) > 0; }
  const std::string& get(const std::string& path) const { return entries_.at(path); }
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

inline constexpr const char* kEnvPrefix = "FSINC__";

// Applies FSINC__section__key=value overrides; '__' in the key part stands for '.', and '_' also matches '.'
// in a schema key (FSINC__geometry__outer_radius -> geometry.outer.radius).
// Unknown keys raise ConfigInvalid.
void apply_env_overrides(IniFile& ini, const std::vector<std::pair<std::string, std::string>>& env);
std::vector<std::pair<std::string, std::string>> process_environment();

struct RunConfig {
  // geometry
  std::string outer_shape = "disk";
  double outer_radius = 1.0;
  double outer_radius_b = 0.0;  // ellipse semi-axis along y; 0 = circle
  std::string body_shape = "disk";
  double body_radius = 0.2;
  double body_radius_b = 0.0;
  AnnularSector control;
  double eta_shrink = 0.5;
  int boundary_samples = 1024;

  // mesh
  std::string mesh_file;
  int n_theta = 48;
  int n_r = 12;

  PhysicalParams physics;

  // discretization
  double T = 1.0;
  int steps = 50;
  double theta = 1.0;

  // initial data
  double velocity_scale = 0.0;
  Vec2 h0 = Vec2::Zero();
  double theta0 = 0.0;
  int modes = 6;

  // carleman
  CarlemanParams carleman;
  EtaOptions eta;
  ProbeOptions probe;
  std::string probe_kind = "heat";
  double friction = 1.0;
  int weight_samples = 400;

  // control
  double epsilon = 1e-6;
  CgOptions cg;
  bool closed_loop = false;
  int max_outer = 5;

  NonlinearOptions nonlinear;
  bool simulate_nonlinear = false;

  ObservabilityOptions observability;

  // sweep
  std::string sweep_command = "control";
  std::string sweep_parameter;
  std::vector<std::string> sweep_values;

  // output
  int field_stride = 5;

  std::uint64_t seed = 1;

  // Resolved values of every schema key (defaults filled in), sorted by key path.
  std::map<std::string, std::string> resolved;

  Domain domain() const;
  Mesh mesh() const;
};

// Validates the raw entries against the schema: unknown keys, missing required
// keys, malformed values and range violations raise ConfigInvalid naming the key path.
RunConfig resolve_config(const IniFile& ini);

bool is_config_key(const std::string& path);
std::vector<std::string> config_keys();

// FNV-1a 64 of the resolved "key=value\n" lines, excluding run.seed; 16 hex digits.
// A non-empty command is hashed first so that different subcommands on one
// config get different output directories.
std::string config_hash(const RunConfig& cfg, const std::string& command = "");

}  // namespace fsinc
