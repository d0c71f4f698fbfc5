#include "fsinc/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>

extern char** environ;

namespace fsinc {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad(const std::string& path, const std::string& msg) {
  raise(ErrorKind::ConfigInvalid, path + ": " + msg);
}

double parse_double(const std::string& path, const std::string& s) {
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0' || errno == ERANGE || !std::isfinite(v)) bad(path, "expected a number, got '" + s + "'");
  return v;
}

long long parse_int(const std::string& path, const std::string& s) {
  errno = 0;
  char* end = nullptr;
  long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0' || errno == ERANGE) bad(path, "expected an integer, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& path, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  bad(path, "expected true or false, got '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

// Each setter parses the raw value into the config and returns its canonical text.
using Setter = std::function<std::string(RunConfig&, const std::string& path, const std::string& raw)>;

struct Key {
  std::string path;
  std::optional<std::string> fallback;  // nullopt = required
  Setter set;
};

Setter real(double RunConfig::*m) {
  return [m](RunConfig& c, const std::string& p, const std::string& r) {
    c.*m = parse_double(p, r);
    return format_double(c.*m);
  };
}

template <class F>
Setter real_at(F ref) {
  return [ref](RunConfig& c, const std::string& p, const std::string& r) {
    double& x = ref(c);
    x = parse_double(p, r);
    return format_double(x);
  };
}

template <class F>
Setter integer_at(F ref) {
  return [ref](RunConfig& c, const std::string& p, const std::string& r) {
    auto& x = ref(c);
    long long v = parse_int(p, r);
    using T = std::remove_reference_t<decltype(x)>;
    if (v < static_cast<long long>(std::numeric_limits<T>::min()) ||
        (v > 0 && static_cast<unsigned long long>(v) > static_cast<unsigned long long>(std::numeric_limits<T>::max())))
      bad(p, "integer out of range");
    x = static_cast<T>(v);
    return std::to_string(v);
  };
}

template <class F>
Setter boolean_at(F ref) {
  return [ref](RunConfig& c, const std::string& p, const std::string& r) {
    bool& x = ref(c);
    x = parse_bool(p, r);
    return std::string(x ? "true" : "false");
  };
}

template <class F>
Setter choice_at(F ref, std::vector<std::string> options) {
  return [ref, options](RunConfig& c, const std::string& p, const std::string& r) {
    if (std::find(options.begin(), options.end(), r) == options.end()) {
      std::string all;
      for (const auto& o : options) all += (all.empty() ? "" : ", ") + o;
      bad(p, "expected one of {" + all + "}, got '" + r + "'");
    }
    ref(c) = r;
    return r;
  };
}

Setter text(std::string RunConfig::*m) {
  return [m](RunConfig& c, const std::string&, const std::string& r) {
    c.*m = r;
    return r;
  };
}

const std::vector<Key>& schema() {
  static const std::vector<Key> keys = [] {
    std::vector<Key> k;
    auto add = [&](std::string p, std::optional<std::string> d, Setter s) { k.push_back({std::move(p), std::move(d), std::move(s)}); };
    const std::vector<std::string> shapes{"disk", "ellipse"};

    add("geometry.outer.shape", "disk", choice_at([](RunConfig& c) -> std::string& { return c.outer_shape; }, shapes));
    add("geometry.outer.radius", "1", real(&RunConfig::outer_radius));
    add("geometry.outer.radius_b", "0", real(&RunConfig::outer_radius_b));
    add("geometry.body.shape", "disk", choice_at([](RunConfig& c) -> std::string& { return c.body_shape; }, shapes));
    add("geometry.body.radius", "0.2", real(&RunConfig::body_radius));
    add("geometry.body.radius_b", "0", real(&RunConfig::body_radius_b));
    add("geometry.control.annulus_r0", "0.4", real_at([](RunConfig& c) -> double& { return c.control.r0; }));
    add("geometry.control.annulus_r1", "0.9", real_at([](RunConfig& c) -> double& { return c.control.r1; }));
    add("geometry.control.arc", format_double(2.0 * M_PI / 3.0), real_at([](RunConfig& c) -> double& { return c.control.arc; }));
    add("geometry.control.center", "0", real_at([](RunConfig& c) -> double& { return c.control.center; }));
    add("geometry.eta_core.shrink_factor", "0.5", real(&RunConfig::eta_shrink));
    add("geometry.boundary_samples", "1024", integer_at([](RunConfig& c) -> int& { return c.boundary_samples; }));

    add("mesh.file", "", text(&RunConfig::mesh_file));
    add("mesh.n_theta", "48", integer_at([](RunConfig& c) -> int& { return c.n_theta; }));
    add("mesh.n_r", "12", integer_at([](RunConfig& c) -> int& { return c.n_r; }));

    add("physics.nu", std::nullopt, real_at([](RunConfig& c) -> double& { return c.physics.nu; }));
    add("physics.m", std::nullopt, real_at([](RunConfig& c) -> double& { return c.physics.m; }));
    add("physics.J", std::nullopt, real_at([](RunConfig& c) -> double& { return c.physics.J; }));
    add("physics.beta_Omega", std::nullopt, real_at([](RunConfig& c) -> double& { return c.physics.beta_Omega; }));
    add("physics.beta_S", std::nullopt, real_at([](RunConfig& c) -> double& { return c.physics.beta_S; }));

    add("discretization.T", "1", real(&RunConfig::T));
    add("discretization.steps", "50", integer_at([](RunConfig& c) -> int& { return c.steps; }));
    add("discretization.theta", "1", real(&RunConfig::theta));

    add("initial.velocity_scale", "0", real(&RunConfig::velocity_scale));
    add("initial.h1", "0", real_at([](RunConfig& c) -> double& { return c.h0.x(); }));
    add("initial.h2", "0", real_at([](RunConfig& c) -> double& { return c.h0.y(); }));
    add("initial.theta", "0", real(&RunConfig::theta0));
    add("initial.modes", "6", integer_at([](RunConfig& c) -> int& { return c.modes; }));

    add("carleman.lambda", "1.5", real_at([](RunConfig& c) -> double& { return c.carleman.lambda; }));
    add("carleman.s", "1", real_at([](RunConfig& c) -> double& { return c.carleman.s; }));
    add("carleman.N", "4", integer_at([](RunConfig& c) -> int& { return c.carleman.N; }));
    add("carleman.eta_grad_floor", "0.001", real_at([](RunConfig& c) -> double& { return c.eta.grad_floor; }));
    add("carleman.eta_max_repairs", "10", integer_at([](RunConfig& c) -> int& { return c.eta.max_repairs; }));
    add("carleman.eta_tilt", "1", real_at([](RunConfig& c) -> double& { return c.eta.tilt; }));
    add("carleman.probe", "heat",
        choice_at([](RunConfig& c) -> std::string& { return c.probe_kind; }, {"heat", "stationary", "system"}));
    add("carleman.friction", "1", real(&RunConfig::friction));
    add("carleman.quad_order", "3", integer_at([](RunConfig& c) -> int& { return c.probe.quad_order; }));
    add("carleman.time_points", "8", integer_at([](RunConfig& c) -> int& { return c.probe.time_points; }));
    add("carleman.time_grading", "1.5", real_at([](RunConfig& c) -> double& { return c.probe.grading; }));
    add("carleman.weight_samples", "400", integer_at([](RunConfig& c) -> int& { return c.weight_samples; }));

    add("control.epsilon", "1e-06", real(&RunConfig::epsilon));
    add("control.cg_tol", "1e-10", real_at([](RunConfig& c) -> double& { return c.cg.tol; }));
    add("control.cg_max_iterations", "400", integer_at([](RunConfig& c) -> int& { return c.cg.max_iterations; }));
    add("control.cg_stall_window", "20", integer_at([](RunConfig& c) -> int& { return c.cg.stall_window; }));
    add("control.closed_loop", "false", boolean_at([](RunConfig& c) -> bool& { return c.closed_loop; }));
    add("control.max_outer", "5", integer_at([](RunConfig& c) -> int& { return c.max_outer; }));

    add("nonlinear.enabled", "false", boolean_at([](RunConfig& c) -> bool& { return c.simulate_nonlinear; }));
    add("nonlinear.tol", "1e-08", real_at([](RunConfig& c) -> double& { return c.nonlinear.tol; }));
    add("nonlinear.max_iterations", "25", integer_at([](RunConfig& c) -> int& { return c.nonlinear.max_iterations; }));
    add("nonlinear.flow_substeps", "4", integer_at([](RunConfig& c) -> int& { return c.nonlinear.flow_substeps; }));
    add("nonlinear.quad_order", "3", integer_at([](RunConfig& c) -> int& { return c.nonlinear.quad_order; }));
    add("nonlinear.christoffel", "standard", [](RunConfig& c, const std::string& p, const std::string& r) {
      if (r == "standard")
        c.nonlinear.mode = ChristoffelMode::Standard;
      else if (r == "as_written")
        c.nonlinear.mode = ChristoffelMode::AsWritten;
      else
        bad(p, "expected one of {standard, as_written}, got '" + r + "'");
      return r;
    });

    add("observability.samples", "100", integer_at([](RunConfig& c) -> int& { return c.observability.samples; }));
    add("observability.time_bins", "10", integer_at([](RunConfig& c) -> int& { return c.observability.time_bins; }));
    add("observability.late_fraction", "0",
        real_at([](RunConfig& c) -> double& { return c.observability.late_fraction; }));

    add("sweep.command", "control",
        choice_at([](RunConfig& c) -> std::string& { return c.sweep_command; },
                  {"simulate", "control", "probe-carleman", "probe-observability"}));
    add("sweep.parameter", "", text(&RunConfig::sweep_parameter));
    add("sweep.values", "", [](RunConfig& c, const std::string&, const std::string& r) {
      c.sweep_values = split_list(r);
      std::string out;
      for (const auto& v : c.sweep_values) out += (out.empty() ? "" : ",") + v;
      return out;
    });

    add("output.field_stride", "5", integer_at([](RunConfig& c) -> int& { return c.field_stride; }));
    add("run.seed", "1", integer_at([](RunConfig& c) -> std::uint64_t& { return c.seed; }));
    return k;
  }();
  return keys;
}

void require(bool ok, const std::string& path, const std::string& msg) {
  if (!ok) bad(path, msg);
}

void validate(const RunConfig& c) {
  require(c.outer_radius > 0, "geometry.outer.radius", "must be positive");
  require(c.outer_radius_b >= 0, "geometry.outer.radius_b", "must be non-negative");
  require(c.body_radius > 0, "geometry.body.radius", "must be positive");
  require(c.body_radius_b >= 0, "geometry.body.radius_b", "must be non-negative");
  require(c.control.r0 > 0 && c.control.r0 < c.control.r1, "geometry.control.annulus_r0", "must satisfy 0 < r0 < r1");
  require(c.control.arc > 0 && c.control.arc <= 2.0 * M_PI, "geometry.control.arc", "must lie in (0, 2 pi]");
  require(c.eta_shrink > 0 && c.eta_shrink < 1, "geometry.eta_core.shrink_factor", "must lie in (0, 1)");
  require(c.boundary_samples >= 16, "geometry.boundary_samples", "must be >= 16");
  require(c.n_theta >= 8, "mesh.n_theta", "must be >= 8");
  require(c.n_r >= 2, "mesh.n_r", "must be >= 2");

  require(c.physics.nu > 0, "physics.nu", "must be positive");
  require(c.physics.m > 0, "physics.m", "must be positive");
  require(c.physics.J > 0, "physics.J", "must be positive");
  require(c.physics.beta_Omega >= 0, "physics.beta_Omega", "must be non-negative");
  require(c.physics.beta_S > 0, "physics.beta_S", "must be positive (beta_S = 0 leaves the rigid velocities unobservable)");

  require(c.T > 0, "discretization.T", "must be positive");
  require(c.steps >= 1, "discretization.steps", "must be >= 1");
  require(c.theta >= 0.5 && c.theta <= 1.0, "discretization.theta", "must lie in [0.5, 1]");

  require(c.velocity_scale >= 0, "initial.velocity_scale", "must be non-negative");
  require(c.modes >= 1, "initial.modes", "must be >= 1");

  require(c.carleman.lambda > 1, "carleman.lambda", "must be > 1");
  require(c.carleman.s >= 1, "carleman.s", "must be >= 1");
  require(c.carleman.N >= 4, "carleman.N", "must be >= 4");
  require(c.eta.grad_floor > 0, "carleman.eta_grad_floor", "must be positive");
  require(c.eta.max_repairs >= 0, "carleman.eta_max_repairs", "must be >= 0");
  require(c.eta.tilt > 0, "carleman.eta_tilt", "must be positive");
  require(c.friction >= 0, "carleman.friction", "must be non-negative");
  require(c.probe.quad_order >= 1 && c.probe.quad_order <= 10, "carleman.quad_order", "must lie in [1, 10]");
  require(c.probe.time_points >= 1 && c.probe.time_points <= 32, "carleman.time_points", "must lie in [1, 32]");
  require(c.probe.grading >= 1, "carleman.time_grading", "must be >= 1");
  require(c.weight_samples >= 4, "carleman.weight_samples", "must be >= 4");

  require(c.epsilon > 0, "control.epsilon", "must be positive");
  require(c.cg.tol > 0, "control.cg_tol", "must be positive");
  require(c.cg.max_iterations >= 1, "control.cg_max_iterations", "must be >= 1");
  require(c.cg.stall_window >= 1, "control.cg_stall_window", "must be >= 1");
  require(c.max_outer >= 1 && c.max_outer <= 5, "control.max_outer", "must lie in [1, 5]");

  require(c.nonlinear.tol > 0, "nonlinear.tol", "must be positive");
  require(c.nonlinear.max_iterations >= 1, "nonlinear.max_iterations", "must be >= 1");
  require(c.nonlinear.flow_substeps >= 1, "nonlinear.flow_substeps", "must be >= 1");
  require(c.nonlinear.quad_order >= 1 && c.nonlinear.quad_order <= 10, "nonlinear.quad_order", "must lie in [1, 10]");

  require(c.observability.samples >= 1, "observability.samples", "must be >= 1");
  require(c.observability.time_bins >= 1, "observability.time_bins", "must be >= 1");
  require(c.observability.late_fraction >= 0 && c.observability.late_fraction < 1, "observability.late_fraction",
          "must lie in [0, 1)");

  require(c.sweep_parameter.empty() || is_config_key(c.sweep_parameter), "sweep.parameter",
          "unknown key '" + c.sweep_parameter + "'");
  require(c.sweep_parameter.rfind("sweep.", 0) != 0, "sweep.parameter", "cannot sweep a sweep key");
  require(c.field_stride >= 1, "output.field_stride", "must be >= 1");
}

}  // namespace

IniFile IniFile::parse(std::istream& is, const std::string& origin) {
  IniFile f;
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    size_t cpos = line.find_first_of("#;");
    if (cpos != std::string::npos) line = line.substr(0, cpos);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') raise(ErrorKind::ConfigInvalid, where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) raise(ErrorKind::ConfigInvalid, where + ": empty section name");
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos) raise(ErrorKind::ConfigInvalid, where + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) raise(ErrorKind::ConfigInvalid, where + ": empty key");
    if (section.empty()) raise(ErrorKind::ConfigInvalid, where + ": key '" + key + "' outside any [section]");
    std::string path = section + "." + key;
    if (f.has(path)) raise(ErrorKind::ConfigInvalid, where + ": duplicate key '" + path + "'");
    f.set(path, trim(line.substr(eq + 1)));
  }
  return f;
}

IniFile IniFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::ConfigInvalid, "cannot read config file '" + path + "'");
  return parse(in, path);
}

bool is_config_key(const std::string& path) {
  const auto& s = schema();
  return std::any_of(s.begin(), s.end(), [&](const Key& k) { return k.path == path; });
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : schema()) out.push_back(k.path);
  return out;
}

void apply_env_overrides(IniFile& ini, const std::vector<std::pair<std::string, std::string>>& env) {
  const std::string prefix = kEnvPrefix;
  for (const auto& [name, value] : env) {
    if (name.rfind(prefix, 0) != 0) continue;
    std::string rest = name.substr(prefix.size());
    size_t sep = rest.find("__");
    if (sep == std::string::npos || sep == 0 || sep + 2 >= rest.size())
      raise(ErrorKind::ConfigInvalid, name + ": expected FSINC__section__key");
    std::string section = rest.substr(0, sep), key = rest.substr(sep + 2);
    for (size_t at = key.find("__"); at != std::string::npos; at = key.find("__", at + 1)) key.replace(at, 2, ".");
    std::string path = section + "." + key;
    if (!is_config_key(path)) {
      std::string found;
      for (const auto& k : schema()) {
        if (k.path.rfind(section + ".", 0) != 0) continue;
        std::string tail = k.path.substr(section.size() + 1);
        std::replace(tail.begin(), tail.end(), '.', '_');
        if (tail == key) found = k.path;
      }
      if (found.empty()) raise(ErrorKind::ConfigInvalid, name + ": unknown key '" + path + "'");
      path = found;
    }
    ini.set(path, trim(value));
  }
}

std::vector<std::pair<std::string, std::string>> process_environment() {
  std::vector<std::pair<std::string, std::string>> out;
  for (char** e = environ; e && *e; ++e) {
    std::string s = *e;
    size_t eq = s.find('=');
    if (eq == std::string::npos) continue;
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  std::sort(out.begin(), out.end());
  return out;
}

RunConfig resolve_config(const IniFile& ini) {
  for (const auto& [path, value] : ini.entries())
    if (!is_config_key(path)) raise(ErrorKind::ConfigInvalid, path + ": unknown key");
  RunConfig c;
  for (const auto& k : schema()) {
    std::string raw;
    if (ini.has(k.path))
      raw = ini.get(k.path);
    else if (k.fallback)
      raw = *k.fallback;
    else
      bad(k.path, "missing required key");
    c.resolved[k.path] = k.set(c, k.path, raw);
  }
  c.carleman.T = c.T;
  validate(c);
  return c;
}

std::string config_hash(const RunConfig& cfg, const std::string& command) {
  std::uint64_t h = 1469598103934665603ull;
  auto feed = [&h](const std::string& s) {
    for (char ch : s) {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ull;
    }
  };
  if (!command.empty()) feed("command=" + command + "\n");
  for (const auto& [k, v] : cfg.resolved)
    if (k != "run.seed") feed(k + "=" + v + "\n");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Domain RunConfig::domain() const {
  auto shape = [](const std::string& kind, double a, double b) {
    if (kind == "disk") return Shape::disk(a);
    return Shape::ellipse(a, b > 0 ? b : a);
  };
  try {
    return make_domain(shape(outer_shape, outer_radius, outer_radius_b),
                       shape(body_shape, body_radius, body_radius_b), control, eta_shrink, boundary_samples);
  } catch (const Error& e) {
    raise(ErrorKind::ConfigInvalid, "geometry: " + e.message());
  }
}

Mesh RunConfig::mesh() const {
  if (!mesh_file.empty()) {
    try {
      return read_mesh_file(mesh_file);
    } catch (const Error& e) {
      raise(ErrorKind::ConfigInvalid, "mesh.file: " + e.message());
    }
  }
  if (outer_shape != "disk" || body_shape != "disk")
    raise(ErrorKind::ConfigInvalid, "mesh.file: required when the outer boundary or the body is not a disk");
  return annulus_mesh(body_radius, outer_radius, n_theta, n_r);
}

}  // namespace fsinc
