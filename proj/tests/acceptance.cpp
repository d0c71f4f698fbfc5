// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
// Usage: fsinc_acceptance [criterion numbers...]

#include "bench.hpp"
#include "fsinc/cli.hpp"
#include "fsinc/manufactured.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>

using namespace fsinc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Bench {
  Domain domain = benchmark::benchmark_domain();
  Mesh mesh = benchmark::benchmark_mesh();
  DiscreteOperator op = assemble(mesh, PhysicalParams{});
};

Bench& bench() {
  static Bench b;
  return b;
}

Outcome operator_structure() {
  const DiscreteOperator& op = bench().op;
  double asym = stiffness_asymmetry(op);
  RitzReport r = ritz_extremes(op);
  bool ok = asym <= 1e-12 && r.min_value >= -1e-10 * r.scale;
  return {ok, "asymmetry " + num(asym) + ", min Ritz " + num(r.min_value) + " (scale " + num(r.scale) + ")"};
}

Outcome energy_decay() {
  const DiscreteOperator& op = bench().op;
  const Vec zero = Vec::Zero(op.space.nZ);
  Rng rng(2024);
  double worst = -INFINITY;
  for (int k = 0; k < 20; ++k) {
    FsiField w = zero_field(op);
    w.z = random_state(op, rng);
    double prev = h_norm(op, w.z);
    for (int n = 0; n < 50; ++n) {
      w = step_linear_load(op, w, zero, zero, 0.02);
      double e = h_norm(op, w.z);
      worst = std::max(worst, (e - prev) / prev);
      prev = e;
    }
  }
  return {worst <= 1e-12, "20 states x 50 steps, max relative increase " + num(worst)};
}

Outcome manufactured_convergence() {
  PhysicalParams p;
  ManufacturedSolution lin(p, 0.2, 1.0, ManufacturedSolution::Profile::Linear);
  std::vector<double> err;
  for (int k = 0; k < 4; ++k) {
    DiscreteOperator op = assemble(annulus_mesh(0.2, 1.0, 24 << k, 6 << k), p);
    err.push_back(run_manufactured(op, lin, 1.0, 20).l2_time_error);
  }
  bool ok = true;
  std::string orders;
  for (int k = 0; k < 3; ++k) {
    double s = std::log2(err[k] / err[k + 1]);
    ok = ok && s >= 1.6 && s <= 2.4;
    orders += (k ? ", " : "") + num(s);
  }
  ManufacturedSolution osc(p, 0.2, 1.0, ManufacturedSolution::Profile::Oscillatory);
  TemporalOrder to = temporal_order(bench().op, osc, 1.0, 50);
  ok = ok && to.order >= 0.8 && to.order <= 1.2;
  return {ok, "spatial orders " + orders + " (24x6 to 192x48); temporal order " + num(to.order) +
                  " (dt differences " + num(to.difference[0]) + ", " + num(to.difference[1]) + ")"};
}

std::vector<Vec2> quadrature_points(const Mesh& m) {
  std::vector<Vec2> pts;
  const TriQuadrature& rule = tri_quadrature(3);
  for (int t = 0; t < m.nt(); ++t) {
    ElementGeom g = element_geom(m, t);
    for (const auto& b : rule.bary) pts.push_back(g.point(b));
  }
  return pts;
}

Outcome transform_identities() {
  const Domain& d = bench().domain;
  auto pts = quadrature_points(bench().mesh);
  // benchmark trajectories: a prescribed wobble and the rigid path of a controlled-scale run
  std::vector<RigidPath> paths;
  {
    std::vector<double> ts;
    std::vector<RigidState> st;
    for (int n = 0; n <= 50; ++n) {
      RigidState s;
      double t = n / 50.0;
      s.h = Vec2(0.06 * std::sin(2 * t), 0.03 * t * t);
      s.theta = 0.1 * std::sin(3 * t) + 0.02;
      ts.push_back(t);
      st.push_back(s);
    }
    paths.push_back(RigidPath::from_states(ts, st));
    FsiField w = zero_field(bench().op);
    w.z = benchmark::scaled_smooth_state(bench().op, 11, 0.05);
    Trajectory tr = simulate_loads(bench().op, w, Vec2::Zero(), 0.0, {}, 1.0, 50, 1.0, Kinematics::Rigid);
    paths.push_back(RigidPath::from_states(tr.t, tr.rigid));
  }
  double det = 0.0;
  for (const auto& p : paths) {
    TransformMaps maps = build_extension_flow(p, d, pts, 4);
    for (const auto& node : maps.samples)
      for (const auto& s : node) det = std::max(det, std::abs(s.det() - 1.0));
  }

  // identity map
  Grid2D g;
  g.nx = g.ny = 21;
  g.x0 = g.y0 = -0.5;
  g.hx = g.hy = 0.05;
  TransformMaps idm = build_extension_flow(RigidPath::at_rest(1.0, 4), d, g.points(), 4);
  MetricData md = metric_tensors(idm.samples[2], g);
  GridVector u{g, Vec(g.size()), Vec(g.size())};
  GridScalar pr{g, Vec(g.size())};
  auto gp = g.points();
  for (int q = 0; q < g.size(); ++q) {
    u.u1(q) = std::sin(2 * gp[q].x()) * std::cos(gp[q].y());
    u.u2(q) = gp[q].x() * gp[q].y() * gp[q].y();
    pr.v(q) = std::exp(gp[q].x() - gp[q].y());
  }
  GridVector L = apply_L(u, md), M = apply_M(u, idm.samples[2], md), Nn = apply_N(u, md), G = apply_G(pr, md);
  double id_err = 0.0;
  for (int i = 0; i < 2; ++i) {
    Vec conv = u.u1.cwiseProduct(grid_derivative(g, u.comp(i), 0)) + u.u2.cwiseProduct(grid_derivative(g, u.comp(i), 1));
    id_err = std::max({id_err, (L.comp(i) - grid_laplacian(g, u.comp(i))).cwiseAbs().maxCoeff(),
                       M.comp(i).cwiseAbs().maxCoeff(), (Nn.comp(i) - conv).cwiseAbs().maxCoeff(),
                       (G.comp(i) - grid_derivative(g, pr.v, i)).cwiseAbs().maxCoeff()});
  }

  // Piola: divergence of the pulled-back field against the grid's own truncation level
  Grid2D pg;
  pg.nx = pg.ny = 81;
  pg.x0 = pg.y0 = -0.5;
  pg.hx = pg.hy = 1.0 / 80;
  auto U = [](const Vec2& x) {
    return Vec2(-2.0 * std::sin(3 * x.x() + 0.2) * std::sin(2 * x.y()), -3.0 * std::cos(3 * x.x() + 0.2) * std::cos(2 * x.y()));
  };
  auto pp = pg.points();
  Vec U1(pg.size()), U2(pg.size());
  for (int q = 0; q < pg.size(); ++q) {
    U1(q) = U(pp[q]).x();
    U2(q) = U(pp[q]).y();
  }
  double tol = (grid_derivative(pg, U1, 0) + grid_derivative(pg, U2, 1)).cwiseAbs().maxCoeff();
  double piola = 0.0;
  std::string per_path;
  for (const auto& path : paths) {
    TransformMaps pm = build_extension_flow(path, d, pp, 4);
    double worst = 0.0;
    for (int n = 0; n <= 50; n += 10) {
      auto v = piola_transform(U, pm.samples[n]);
      Vec v1(pg.size()), v2(pg.size());
      for (int q = 0; q < pg.size(); ++q) {
        v1(q) = v[q].x();
        v2(q) = v[q].y();
      }
      worst = std::max(worst, (grid_derivative(pg, v1, 0) + grid_derivative(pg, v2, 1)).cwiseAbs().maxCoeff());
    }
    per_path += (per_path.empty() ? "" : ", ") + num(worst);
    piola = std::max(piola, worst);
  }
  bool ok = det <= 1e-8 && id_err <= 1e-12 && piola <= 10.0 * tol;
  return {ok, "max |det-1| " + num(det) + " over " + std::to_string(pts.size()) + " points x 2 paths; identity error " +
                  num(id_err) + "; Piola divergence " + per_path + " (per path) vs 10x mesh tolerance " + num(10 * tol)};
}

Outcome weight_suite() {
  int passed = 0;
  std::string fails;
  for (auto [l, s, N, T] : std::vector<std::tuple<double, double, int, double>>{
           {1.5, 1, 4, 1}, {2, 10, 4, 1}, {1.2, 100, 5, 2}, {3, 1, 6, 0.5}, {1.5, 1e3, 4, 1}}) {
    WeightSet w(CarlemanParams{l, s, N, T});
    WeightCheck c = check_weights(w, 400, fit_envelope_constant(w, 400));
    if (c.all())
      ++passed;
    else
      fails += " (" + num(l) + "," + num(s) + "," + std::to_string(N) + "," + num(T) + ")";
  }
  return {passed == 5, std::to_string(passed) + "/5 parameter sets pass all weight invariants" + fails};
}

// Calibrated s per lambda on the 48x12 benchmark mesh, frozen from the first run.
constexpr double kFrozenHeatS[2] = {1.0, 1.0};

Outcome carleman_probes() {
  const Bench& b = bench();
  EtaField eta = build_eta(b.domain, b.mesh);
  const double lambdas[2] = {1.5, 3.0};
  bool ok = true;
  std::ostringstream os;
  for (int i = 0; i < 2; ++i) {
    const double lam = lambdas[i];
    auto heat = [&](double s) {
      return probe_heat_carleman(b.domain, b.mesh, eta, WeightSet(CarlemanParams{lam, s, 4, 1.0}), 0.1,
                                 manufactured_heat(0.1))
          .ratio_minus_one;
    };
    auto stat = [&](double s) {
      return probe_stationary_carleman(b.domain, b.mesh, eta, CarlemanParams{lam, s, 4, 1.0}, 1.0,
                                       manufactured_stationary())
          .ratio_minus_one;
    };
    for (auto [name, fn] : std::vector<std::pair<const char*, std::function<double(double)>>>{{"heat", heat},
                                                                                              {"stationary", stat}}) {
      Calibration c = calibrate_s(fn, 1.0, 1e-3, 10);
      os << name << " lambda " << num(lam) << ": ";
      if (std::isnan(c.s)) {
        ok = false;
        os << "no s <= " << num(std::ldexp(1.0, 10)) << " with ratio <= 1 (ratio-1 " << num(c.ratio_minus_one)
           << "); ";
        continue;
      }
      double r1 = fn(c.s), r2 = fn(2 * c.s), r4 = fn(4 * c.s);
      bool mono = r2 <= r1 && r4 <= r2;
      bool frozen = std::string(name) != "heat" || std::abs(c.s - kFrozenHeatS[i]) <= 1e-3 * kFrozenHeatS[i];
      ok = ok && r1 <= 0 && mono && frozen;
      os << "s_cal " << num(c.s) << (frozen ? "" : " (frozen value differs)") << ", ratio-1 at s,2s,4s " << num(r1)
         << ", " << num(r2) << ", " << num(r4) << (mono ? "" : " (increasing)") << "; ";
    }
  }
  return {ok, os.str()};
}

Outcome adjoint_duality() {
  const DiscreteOperator& op = bench().op;
  const int steps = 50;
  Rng rng(77);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    Vec z0 = random_state(op, rng);
    std::vector<Vec> loads(steps + 1);
    for (auto& v : loads) v = Vec::NullaryExpr(op.space.nZ, [&] { return rng.normal(); });
    DualData d;
    d.phi = random_state(op, rng);
    d.gamma2 = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
    d.gamma1.resize(steps + 1);
    for (auto& v : d.gamma1) v = Vec::NullaryExpr(op.space.nZ, [&] { return rng.normal(); });
    worst = std::max(worst, duality_residual(op, z0, loads, d, 1.0, steps));
  }
  return {worst <= 1e-8, "20 random data sets, max relative residual " + num(worst)};
}

Outcome observability_sampling() {
  WeightSet w(CarlemanParams{1.5, 1.0, 4, 1.0});
  ObservabilityOptions o;
  o.samples = 100;
  ObservabilityStats coarse = observability_ratio(bench().op, bench().domain, w, 1.0, 50, o);
  DiscreteOperator fine_op = assemble(benchmark::benchmark_mesh(2), PhysicalParams{});
  ObservabilityStats fine = observability_ratio(fine_op, bench().domain, w, 1.0, 50, o);
  double change = fine.max_ratio / coarse.max_ratio - 1.0;
  bool ok = std::isfinite(coarse.max_ratio) && std::isfinite(fine.max_ratio) && coarse.skipped == 0 &&
            fine.skipped == 0 && std::abs(change) <= 0.2;
  return {ok, "max ratio " + num(coarse.max_ratio) + " (48x12) vs " + num(fine.max_ratio) + " (96x24), change " +
                  num(100 * change) + "%"};
}

Outcome null_control() {
  const Bench& b = bench();
  ControlProblem pb;
  pb.w0 = zero_field(b.op);
  pb.w0.z = benchmark::scaled_smooth_state(b.op, 11, 0.05);
  ClosedLoopOptions o;
  o.nonlinear.tol = 1e-6;
  o.nonlinear.max_iterations = 60;
  std::vector<double> best;
  double uncontrolled = 0.0;
  std::ostringstream os;
  for (double eps : {1e-7, 1e-8}) {
    pb.epsilon = eps;
    ClosedLoopReport r = closed_loop_experiment(pb, b.op, b.domain, o);
    uncontrolled = r.uncontrolled_terminal;
    best.push_back(*std::min_element(r.terminal.begin(), r.terminal.end()));
    os << "eps " << num(eps) << ": terminal " << num(best.back()) << " (" << r.outer_iterations << " outer, CG "
       << r.certificate.cg_iterations << "); ";
  }
  double rel = best[1] / uncontrolled, decrease = best[0] / best[1];
  bool ok = best[0] <= 1e-2 * uncontrolled && best[1] <= 1e-2 * uncontrolled && decrease >= 3.0;
  os << "uncontrolled " << num(uncontrolled) << ", ratio " << num(rel) << ", decrease per 10x eps " << num(decrease);
  return {ok, os.str()};
}

Outcome fixed_point() {
  const Bench& b = bench();
  auto solve = [&](double scale) {
    NonlinearProblem pb;
    pb.op = &b.op;
    pb.domain = &b.domain;
    pb.w0 = zero_field(b.op);
    pb.w0.z = benchmark::scaled_smooth_state(b.op, 11, scale);
    return std::make_pair(pb, solve_nonlinear(pb));
  };
  auto [pb_tiny, tiny] = solve(1e-6);
  // terminal residual: distance of the nonlinear terminal state from the linear one
  auto residual = [&](double scale) {
    auto [pb, res] = solve(scale);
    Trajectory lin = simulate_loads(b.op, pb.w0, Vec2::Zero(), 0.0, {}, 1.0, 50, 1.0, Kinematics::Linear);
    const RigidState &a = res.traj.rigid.back(), &c = lin.rigid.back();
    return h_norm(b.op, res.traj.w.back().z - lin.w.back().z) + (a.h - c.h).norm() + std::abs(a.theta - c.theta);
  };
  double r1 = residual(1e-3), r2 = residual(2e-3);
  double ratio = r2 / r1;
  bool ok = tiny.converged && tiny.contraction < 0.5 && ratio >= 3.0 && ratio <= 5.0;
  return {ok, "contraction " + num(tiny.contraction) + " at scale 1e-6 (" + std::to_string(tiny.iterations) +
                  " iterations); terminal residual " + num(r1) + " -> " + num(r2) + " when doubling, ratio " +
                  num(ratio)};
}

Outcome determinism() {
  std::string base =
      "[physics]\nnu = 0.1\nm = 1\nJ = 0.02\nbeta_Omega = 1\nbeta_S = 1\n"
      "[initial]\nvelocity_scale = 0.05\n[control]\nepsilon = 1e-5\n[observability]\nsamples = 10\n"
      "[nonlinear]\nenabled = true\ntol = 1e-6\nmax_iterations = 60\n[run]\nseed = 11\n";
  std::istringstream is(base);
  RunConfig cfg = resolve_config(IniFile::parse(is));
  int files = 0, same = 0;
  for (const char* cmd : {"simulate", "control", "probe-observability"}) {
    Artifacts a = execute(cmd, cfg), b = execute(cmd, cfg);
    for (size_t i = 0; i < a.files.size(); ++i) {
      ++files;
      same += a.files[i].second == b.files[i].second;
    }
  }
  return {files > 0 && same == files, std::to_string(same) + "/" + std::to_string(files) +
                                          " artifacts byte-identical across repeated runs (simulate, control, "
                                          "probe-observability)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"operator structure", operator_structure},
      {"energy decay", energy_decay},
      {"manufactured-solution convergence", manufactured_convergence},
      {"transform identities", transform_identities},
      {"weight suite", weight_suite},
      {"Carleman probes", carleman_probes},
      {"adjoint duality", adjoint_duality},
      {"observability sampling", observability_sampling},
      {"null-control efficacy", null_control},
      {"fixed-point behavior", fixed_point},
      {"determinism", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("[%s] %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str(), sec);
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failed);
  return failed ? 1 : 0;
}
