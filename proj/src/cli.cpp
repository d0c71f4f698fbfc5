#include "fsinc/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#ifndef FSINC_VERSION
#define FSINC_VERSION "dev"
#endif

namespace fsinc {

namespace {

using nlohmann::ordered_json;

std::string fmt(double v) { return format_double(v); }

struct Setup {
  Domain domain;
  Mesh mesh;
};

Setup setup(const RunConfig& cfg) { return {cfg.domain(), cfg.mesh()}; }

FsiField initial_field(const DiscreteOperator& op, const RunConfig& cfg) {
  FsiField w0 = zero_field(op);
  if (cfg.velocity_scale > 0.0) {
    Rng rng(cfg.seed);
    Vec z = smooth_random_state(op, rng, cfg.modes);
    double n = h_norm(op, z);
    if (n == 0.0) raise(ErrorKind::NonFiniteState, "random initial state has zero norm");
    w0.z = z * (cfg.velocity_scale / n);
  }
  return w0;
}

std::string trajectory_csv(const Trajectory& tr) {
  std::ostringstream os;
  os << "t,h1,h2,theta,l1,l2,omega\n";
  for (size_t n = 0; n < tr.t.size(); ++n) {
    const RigidState& r = tr.rigid[n];
    os << fmt(tr.t[n]) << ',' << fmt(r.h.x()) << ',' << fmt(r.h.y()) << ',' << fmt(r.theta) << ',' << fmt(r.l.x())
       << ',' << fmt(r.l.y()) << ',' << fmt(r.omega) << '\n';
  }
  return os.str();
}

std::vector<size_t> dump_nodes(size_t count, int stride) {
  std::vector<size_t> out;
  for (size_t n = 0; n < count; n += stride) out.push_back(n);
  if (!out.empty() && out.back() != count - 1) out.push_back(count - 1);
  return out;
}

std::string field_csv(const FeSpace& S, const Trajectory& tr, int stride) {
  std::ostringstream os;
  os << "t,x,y,u1,u2,p\n";
  for (size_t n : dump_nodes(tr.t.size(), stride)) {
    const FsiField& w = tr.w[n];
    for (int v = 0; v < S.nv; ++v) {
      const Vec2& x = S.mesh.vertices[v];
      double p = w.p.size() == S.np ? w.p(v) : 0.0;
      os << fmt(tr.t[n]) << ',' << fmt(x.x()) << ',' << fmt(x.y()) << ',' << fmt(w.z(S.vdof(v, 0))) << ','
         << fmt(w.z(S.vdof(v, 1))) << ',' << fmt(p) << '\n';
    }
  }
  return os.str();
}

std::string control_csv(const FeSpace& S, const AnnularSector& region, const Trajectory& tr,
                        const std::vector<Vec>& v) {
  std::ostringstream os;
  os << "t,x,y,v1,v2\n";
  std::vector<int> inside;
  for (int i = 0; i < S.nv; ++i)
    if (region.contains_closed(S.mesh.vertices[i])) inside.push_back(i);
  for (size_t n = 0; n < v.size(); ++n)
    for (int i : inside) {
      const Vec2& x = S.mesh.vertices[i];
      os << fmt(tr.t[n]) << ',' << fmt(x.x()) << ',' << fmt(x.y()) << ',' << fmt(v[n](S.vdof(i, 0))) << ','
         << fmt(v[n](S.vdof(i, 1))) << '\n';
    }
  return os.str();
}

double terminal_position_error(const Trajectory& tr) {
  const RigidState& r = tr.rigid.back();
  return std::sqrt(r.h.squaredNorm() + r.theta * r.theta);
}

Artifacts run_simulate(const RunConfig& cfg) {
  Setup su = setup(cfg);
  DiscreteOperator op = assemble(su.mesh, cfg.physics);
  FsiField w0 = initial_field(op, cfg);
  Trajectory tr;
  if (cfg.simulate_nonlinear) {
    NonlinearProblem pb;
    pb.op = &op;
    pb.domain = &su.domain;
    pb.w0 = w0;
    pb.h0 = cfg.h0;
    pb.theta0 = cfg.theta0;
    pb.T = cfg.T;
    pb.steps = cfg.steps;
    NonlinearOptions o = cfg.nonlinear;
    o.theta = cfg.theta;
    tr = solve_nonlinear(pb, o).traj;
  } else {
    tr = simulate_loads(op, w0, cfg.h0, cfg.theta0, {}, cfg.T, cfg.steps, cfg.theta, Kinematics::Linear);
  }
  Artifacts a;
  a.files.emplace_back("trajectory.csv", trajectory_csv(tr));
  a.files.emplace_back("field.csv", field_csv(op.space, tr, cfg.field_stride));
  a.metrics = {{"terminal_state_norm", fmt(h_norm(op, tr.w.back().z))},
               {"terminal_position_error", fmt(terminal_position_error(tr))},
               {"terminal_metric", fmt(terminal_metric(op, tr))}};
  return a;
}

Artifacts run_control(const RunConfig& cfg) {
  if (cfg.theta != 1.0)
    raise(ErrorKind::ConfigInvalid, "discretization.theta: the control solver requires theta = 1 (implicit Euler)");
  Setup su = setup(cfg);
  DiscreteOperator op = assemble(su.mesh, cfg.physics);
  ControlProblem pb;
  pb.w0 = initial_field(op, cfg);
  pb.h0 = cfg.h0;
  pb.theta0 = cfg.theta0;
  pb.T = cfg.T;
  pb.steps = cfg.steps;
  pb.epsilon = cfg.epsilon;
  pb.carleman = cfg.carleman;
  pb.cg = cfg.cg;

  Artifacts a;
  ControlCertificate cert;
  Trajectory tr;
  std::vector<Vec> v;
  ordered_json extra = ordered_json::object();
  if (cfg.closed_loop) {
    ClosedLoopOptions o;
    o.max_outer = cfg.max_outer;
    o.nonlinear = cfg.nonlinear;
    ClosedLoopReport r = closed_loop_experiment(pb, op, su.domain, o);
    cert = r.certificate;
    tr = r.controlled;
    v = r.v;
    cert.terminal_state_norm = h_norm(op, tr.w.back().z);
    cert.terminal_position_error = terminal_position_error(tr);
    std::ostringstream os;
    os << "outer,terminal,min_margin\n";
    for (size_t i = 0; i < r.terminal.size(); ++i)
      os << i + 1 << ',' << fmt(r.terminal[i]) << ',' << fmt(r.min_margin[i]) << '\n';
    a.files.emplace_back("closed_loop.csv", os.str());
    a.files.emplace_back("uncontrolled_trajectory.csv", trajectory_csv(r.uncontrolled));
    extra["uncontrolled_terminal_metric"] = r.uncontrolled_terminal;
    extra["outer_iterations"] = r.outer_iterations;
  } else {
    ControlResult r = compute_control(pb, op, su.domain);
    cert = r.certificate;
    tr = r.traj;
    v = r.v;
  }
  const double metric = terminal_metric(op, tr);

  ordered_json j;
  j["terminal_state_norm"] = cert.terminal_state_norm;
  j["terminal_position_error"] = cert.terminal_position_error;
  j["cg_iterations"] = cert.cg_iterations;
  j["epsilon"] = cert.epsilon;
  j["control_energy_weighted"] = cert.control_energy_weighted;
  j["max_duality_residual"] = cert.max_duality_residual;
  j["terminal_metric"] = metric;
  j["closed_loop"] = cfg.closed_loop;
  for (auto& [k, val] : extra.items()) j[k] = val;

  std::ostringstream log;
  log << "iteration,residual,functional\n";
  for (const auto& e : cert.log) log << e.iteration << ',' << fmt(e.residual) << ',' << fmt(e.functional) << '\n';

  a.files.emplace_back("certificate.json", j.dump(2) + "\n");
  a.files.emplace_back("cg_log.csv", log.str());
  a.files.emplace_back("control.csv", control_csv(op.space, su.domain.control, tr, v));
  a.files.emplace_back("trajectory.csv", trajectory_csv(tr));
  a.metrics = {{"terminal_state_norm", fmt(cert.terminal_state_norm)},
               {"terminal_position_error", fmt(cert.terminal_position_error)},
               {"cg_iterations", std::to_string(cert.cg_iterations)},
               {"control_energy_weighted", fmt(cert.control_energy_weighted)},
               {"terminal_metric", fmt(metric)}};
  return a;
}

ProbeReport probe(const RunConfig& cfg) {
  Setup su = setup(cfg);
  if (cfg.probe_kind == "stationary") {
    EtaField eta = build_eta(su.domain, su.mesh, cfg.eta);
    return probe_stationary_carleman(su.domain, su.mesh, eta, cfg.carleman, cfg.friction, manufactured_stationary(),
                                     cfg.probe);
  }
  WeightSet w(cfg.carleman);
  if (cfg.probe_kind == "heat") {
    EtaField eta = build_eta(su.domain, su.mesh, cfg.eta);
    return probe_heat_carleman(su.domain, su.mesh, eta, w, cfg.physics.nu, manufactured_heat(cfg.physics.nu),
                               cfg.probe);
  }
  DiscreteOperator op = assemble(su.mesh, cfg.physics);
  Rng rng(cfg.seed);
  DualData dual;
  dual.phi = smooth_random_state(op, rng, cfg.modes);
  for (int i = 0; i < 3; ++i) dual.gamma2(i) = rng.normal();
  Trajectory adj = solve_adjoint(op, dual, cfg.T, cfg.steps);
  const Eigen::Vector3d g = dual.gamma2;
  SystemSources src;
  src.F1 = [](double, const Vec2&) { return Vec2::Zero().eval(); };
  src.F2 = [g](double) { return Vec2(g(0), g(1)); };
  src.F3 = [g](double) { return g(2); };
  return probe_system_carleman(su.domain, op, w, adj, src, cfg.probe.quad_order);
}

Artifacts run_probe_carleman(const RunConfig& cfg) {
  ProbeReport r = probe(cfg);
  Artifacts a;
  const std::string s = fmt(cfg.carleman.s), lambda = fmt(cfg.carleman.lambda), ratio = fmt(r.ratio),
                    rm1 = fmt(r.ratio_minus_one);
  ordered_json j;
  j["probe"] = cfg.probe_kind;
  j["s"] = cfg.carleman.s;
  j["lambda"] = cfg.carleman.lambda;
  j["N"] = cfg.carleman.N;
  j["ratio"] = r.ratio;
  j["ratio_minus_one"] = r.ratio_minus_one;
  j["holds"] = r.holds();
  j["log_lhs"] = r.log_lhs;
  j["log_rhs"] = r.log_rhs;
  a.files.emplace_back("probe.csv", r.csv());
  a.files.emplace_back("ratio.csv", "s,lambda,ratio,ratio_minus_one\n" + s + ',' + lambda + ',' + ratio + ',' + rm1 + '\n');
  a.files.emplace_back("probe_summary.json", j.dump(2) + "\n");
  a.metrics = {{"s", s}, {"lambda", lambda}, {"ratio", ratio}, {"ratio_minus_one", rm1}};
  return a;
}

Artifacts run_probe_observability(const RunConfig& cfg) {
  Setup su = setup(cfg);
  DiscreteOperator op = assemble(su.mesh, cfg.physics);
  WeightSet w(cfg.carleman);
  ObservabilityOptions o = cfg.observability;
  o.seed = cfg.seed;
  ObservabilityStats st = observability_ratio(op, su.domain, w, cfg.T, cfg.steps, o);
  std::ostringstream os;
  os << "sample,ratio\n";
  for (size_t i = 0; i < st.ratios.size(); ++i) os << i << ',' << fmt(st.ratios[i]) << '\n';
  ordered_json j;
  j["samples"] = o.samples;
  j["max_ratio"] = st.max_ratio;
  j["mean_ratio"] = st.mean_ratio;
  j["skipped"] = st.skipped;
  Artifacts a;
  a.files.emplace_back("observability.csv", os.str());
  a.files.emplace_back("observability_summary.json", j.dump(2) + "\n");
  a.metrics = {{"max_ratio", fmt(st.max_ratio)}, {"mean_ratio", fmt(st.mean_ratio)},
               {"skipped", std::to_string(st.skipped)}};
  return a;
}

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary);
  if (!f) raise(ErrorKind::IoError, "cannot write '" + p.string() + "'");
  f << content;
  if (!f) raise(ErrorKind::IoError, "write failed for '" + p.string() + "'");
}

}  // namespace

int exit_code(ErrorKind kind) { return kind == ErrorKind::ConfigInvalid ? kExitValidation : kExitSolver; }

const char* code_version() { return FSINC_VERSION; }

const std::string& Artifacts::file(const std::string& name) const {
  for (const auto& [n, c] : files)
    if (n == name) return c;
  raise(ErrorKind::IoError, "no artifact named '" + name + "'");
}

Artifacts execute(const std::string& command, const RunConfig& cfg) {
  if (command == "simulate") return run_simulate(cfg);
  if (command == "control") return run_control(cfg);
  if (command == "probe-carleman") return run_probe_carleman(cfg);
  if (command == "probe-observability") return run_probe_observability(cfg);
  raise(ErrorKind::ConfigInvalid, "unknown subcommand '" + command + "'");
}

Artifacts execute_sweep(const IniFile& ini, const RunConfig& cfg) {
  if (cfg.sweep_parameter.empty()) raise(ErrorKind::ConfigInvalid, "sweep.parameter: required for a sweep");
  if (cfg.sweep_values.empty()) raise(ErrorKind::ConfigInvalid, "sweep.values: empty value list");
  // validate every value before the first solve
  std::vector<RunConfig> runs;
  for (const auto& value : cfg.sweep_values) {
    IniFile v = ini;
    v.set(cfg.sweep_parameter, value);
    v.set("run.seed", std::to_string(cfg.seed));
    runs.push_back(resolve_config(v));
  }
  const bool probe = cfg.sweep_command == "probe-carleman";
  std::ostringstream os;
  for (size_t i = 0; i < runs.size(); ++i) {
    Artifacts a = execute(cfg.sweep_command, runs[i]);
    if (i == 0) {
      os << (probe ? "" : "value");
      for (size_t k = 0; k < a.metrics.size(); ++k) os << (probe && k == 0 ? "" : ",") << a.metrics[k].first;
      os << '\n';
    }
    if (!probe) os << runs[i].resolved.at(cfg.sweep_parameter);
    for (size_t k = 0; k < a.metrics.size(); ++k) os << (probe && k == 0 ? "" : ",") << a.metrics[k].second;
    os << '\n';
  }
  Artifacts out;
  out.files.emplace_back("sweep.csv", os.str());
  return out;
}

std::string manifest_json(const std::string& command, const RunConfig& cfg, int threads) {
  ordered_json j;
  j["command"] = command;
  j["config_hash"] = config_hash(cfg);
  j["output_hash"] = config_hash(cfg, command);
  j["code_version"] = code_version();
  j["seed"] = cfg.seed;
  j["threads"] = threads;
  ordered_json tol;
  tol["control.cg_tol"] = cfg.cg.tol;
  tol["control.cg_max_iterations"] = cfg.cg.max_iterations;
  tol["control.cg_stall_window"] = cfg.cg.stall_window;
  tol["control.epsilon"] = cfg.epsilon;
  tol["nonlinear.tol"] = cfg.nonlinear.tol;
  tol["nonlinear.max_iterations"] = cfg.nonlinear.max_iterations;
  tol["carleman.eta_grad_floor"] = cfg.eta.grad_floor;
  j["tolerances"] = tol;
  ordered_json c = ordered_json::object();
  for (const auto& [k, v] : cfg.resolved) c[k] = v;
  j["config"] = c;
  return j.dump(2) + "\n";
}

int run(const CliOptions& opt, const std::vector<std::pair<std::string, std::string>>& env, std::ostream& out,
        std::ostream& err) {
  try {
    if (opt.threads < 1) raise(ErrorKind::ConfigInvalid, "--threads: must be >= 1");
    IniFile ini = IniFile::load(opt.config_path);
    apply_env_overrides(ini, env);
    if (opt.seed) ini.set("run.seed", std::to_string(*opt.seed));
    RunConfig cfg = resolve_config(ini);
    Artifacts a = opt.command == "sweep" ? execute_sweep(ini, cfg) : execute(opt.command, cfg);

    namespace fs = std::filesystem;
    fs::path dir = fs::path(opt.out_dir) / (config_hash(cfg, opt.command) + "-" + std::to_string(cfg.seed));
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) raise(ErrorKind::IoError, "cannot create '" + dir.string() + "': " + ec.message());
    for (const auto& [name, content] : a.files) write_file(dir / name, content);
    write_file(dir / "manifest.json", manifest_json(opt.command, cfg, opt.threads));
    out << dir.string() << '\n';
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitSolver;
  }
}

int cli_main(int argc, char** argv) {
  CLI::App app{"Fluid-rigid body null-control toolkit"};
  CliOptions opt;
  long long seed = -1;
  app.add_option("command", opt.command, "simulate | control | probe-carleman | probe-observability | sweep")
      ->required()
      ->check(CLI::IsMember({"simulate", "control", "probe-carleman", "probe-observability", "sweep"}));
  app.add_option("--config", opt.config_path, "INI config file")->required();
  app.add_option("--out", opt.out_dir, "output root directory")->capture_default_str();
  app.add_option("--seed", seed, "experiment seed (overrides run.seed)")->check(CLI::NonNegativeNumber);
  app.add_option("--threads", opt.threads, "worker count")->capture_default_str();
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }
  if (seed >= 0) opt.seed = static_cast<std::uint64_t>(seed);
  return run(opt, process_environment(), std::cout, std::cerr);
}

}  // namespace fsinc
