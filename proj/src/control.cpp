#include "fsinc/control.hpp"

#include <algorithm>
#include <numeric>

namespace fsinc {

namespace {

using Vec3 = Eigen::Vector3d;

Vec rigid_load(const FeSpace& S, const Vec3& g) {
  Vec b = Vec::Zero(S.nZ);
  b(S.ldof(0)) = g(0);
  b(S.ldof(1)) = g(1);
  b(S.kdof()) = g(2);
  return b;
}

Vec3 rigid_part(const FeSpace& S, const Vec& z) { return Vec3(z(S.ldof(0)), z(S.ldof(1)), z(S.kdof())); }

Vec fluid_part(const FeSpace& S, const Vec& z) {
  Vec out = z;
  out(S.ldof(0)) = out(S.ldof(1)) = out(S.kdof()) = 0.0;
  return out;
}

// Terminal state of the linear model: velocity and (h, theta).
struct StateVec {
  Vec z;
  Vec3 a = Vec3::Zero();
};

double inner(const DiscreteOperator& op, const StateVec& x, const StateVec& y) {
  return h_inner(op, x.z, y.z) + x.a.dot(y.a);
}

// Implicit Euler forward run of the linear model from (z0, a0); loads[n] and pos[n]
// are used on the step ending at t_n (either may be empty).
StateVec forward(const DiscreteOperator& op, const Vec& z0, const Vec3& a0, double dt, int steps,
                 const std::vector<Vec>& loads, const std::vector<Vec3>& pos) {
  const FeSpace& S = op.space;
  StateVec y{z0, a0};
  for (int n = 1; n <= steps; ++n) {
    Vec rhs = op.M * y.z;
    if (!loads.empty()) rhs += dt * loads[n];
    y.z = op.solve_kkt(1.0, dt, rhs).z;
    y.a += dt * rigid_part(S, y.z);
    if (!pos.empty()) y.a += dt * pos[n];
  }
  return y;
}

std::vector<Vec> backward(const DiscreteOperator& op, const DualData& d, double dt, int steps) {
  const FeSpace& S = op.space;
  const Vec g2 = rigid_load(S, d.gamma2);
  std::vector<Vec> P(steps + 1);
  Vec next = d.phi.size() ? Vec(op.M * d.phi) : Vec::Zero(S.nZ);
  for (int n = steps; n >= 0; --n) {
    Vec rhs = next + dt * g2;
    if (!d.gamma1.empty()) rhs += dt * d.gamma1[n];
    P[n] = op.solve_kkt(1.0, dt, rhs).z;
    next = op.M * P[n];
  }
  return P;
}

}  // namespace

Trajectory solve_adjoint(const DiscreteOperator& op, const DualData& dual, double T, int steps) {
  if (steps < 1) raise(ErrorKind::ConfigInvalid, "need at least one time step");
  if (!dual.gamma1.empty() && static_cast<int>(dual.gamma1.size()) != steps + 1)
    raise(ErrorKind::GridMismatch, "gamma1 must provide one load per time node");
  const FeSpace& S = op.space;
  const double dt = T / steps;
  std::vector<Vec> P = backward(op, dual, dt, steps);
  Trajectory tr;
  for (int n = 0; n <= steps; ++n) {
    FsiField f;
    f.z = std::move(P[n]);
    RigidState rs;
    rs.l = f.l(S);
    rs.omega = f.k(S);
    tr.t.push_back(n * dt);
    tr.rigid.push_back(rs);
    tr.w.push_back(std::move(f));
  }
  return tr;
}

double duality_residual(const DiscreteOperator& op, const Vec& z0, const std::vector<Vec>& loads,
                        const DualData& dual, double T, int steps) {
  const FeSpace& S = op.space;
  const double dt = T / steps;
  std::vector<Vec> P = backward(op, dual, dt, steps);
  const Vec g2 = rigid_load(S, dual.gamma2);
  KahanSum lhs, rhs;
  Vec z = z0;
  for (int n = 1; n <= steps; ++n) {
    Vec r = op.M * z;
    if (!loads.empty()) r += dt * loads[n];
    z = op.solve_kkt(1.0, dt, r).z;
    Vec g = g2;
    if (!dual.gamma1.empty()) g += dual.gamma1[n];
    lhs.add(dt * g.dot(z));
    if (!loads.empty()) rhs.add(dt * P[n].dot(loads[n]));
  }
  if (dual.phi.size()) lhs.add(dual.phi.dot(op.M * z));
  rhs.add(P[1].dot(op.M * z0));
  const double scale = std::max({std::abs(lhs.value()), std::abs(rhs.value()), 1e-300});
  return std::abs(lhs.value() - rhs.value()) / scale;
}

SpMat control_mass(const FeSpace& S, const AnnularSector& control, int quad_order) {
  const TriQuadrature& Q = tri_quadrature(quad_order);
  std::vector<Eigen::Triplet<double>> trip;
  double phi[4];
  Vec2 dphi[4];
  for (int t = 0; t < S.nt; ++t) {
    ElementGeom g = element_geom(S.mesh, t);
    const auto dofs = S.element_dofs(t);
    for (size_t q = 0; q < Q.weight.size(); ++q) {
      if (!control.contains(g.point(Q.bary[q]))) continue;
      mini_basis(g, Q.bary[q], phi, dphi);
      const double w = 2.0 * g.area * Q.weight[q];
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
          for (int c = 0; c < 2; ++c) trip.emplace_back(dofs[2 * a + c], dofs[2 * b + c], w * phi[a] * phi[b]);
    }
  }
  SpMat M(S.nZ, S.nZ);
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

double terminal_metric(const DiscreteOperator& op, const Trajectory& traj) {
  const FeSpace& S = op.space;
  const FsiField& w = traj.w.back();
  const RigidState& r = traj.rigid.back();
  return h_norm(op, w.z) + w.l(S).norm() + std::abs(w.k(S)) + r.h.norm() + std::abs(r.theta);
}

ControlResult compute_control(const ControlProblem& pb, const DiscreteOperator& op, const Domain& domain) {
  op.params.validate();
  if (!(op.params.beta_S > 0.0))
    raise(ErrorKind::ConfigInvalid, "beta_S = 0 leaves the rigid velocities unobservable");
  if (!(pb.epsilon > 0.0)) raise(ErrorKind::ConfigInvalid, "control.epsilon must be positive");
  if (pb.steps < 1) raise(ErrorKind::ConfigInvalid, "need at least one time step");
  const int N = pb.steps;
  if (!pb.loads.empty() && static_cast<int>(pb.loads.size()) != N + 1)
    raise(ErrorKind::GridMismatch, "loads must provide one vector per time node");
  if (!pb.position_sources.empty() && static_cast<int>(pb.position_sources.size()) != N + 1)
    raise(ErrorKind::GridMismatch, "position sources must provide one entry per time node");
  const FeSpace& S = op.space;
  const double dt = pb.T / N;
  CarlemanParams cp = pb.carleman;
  cp.T = pb.T;
  WeightSet weights(cp);
  std::vector<double> rho2(N + 1);
  for (int n = 0; n <= N; ++n) {
    double r = weights.rho_tilde(3, n * dt);
    rho2[n] = r * r;
  }
  const SpMat MO = control_mass(S, domain.control);

  ControlResult res;
  ControlCertificate& cert = res.certificate;
  cert.epsilon = pb.epsilon;

  // q -> (Lambda q, P(q)); also checks the duality pairing <q, Lambda q>
  auto apply = [&](const StateVec& q, std::vector<Vec>* Pout) {
    DualData d;
    d.phi = q.z;
    d.gamma2 = q.a;
    std::vector<Vec> P = backward(op, d, dt, N);
    std::vector<Vec> loads(N + 1, Vec::Zero(S.nZ));
    KahanSum pair;
    for (int n = 1; n <= N; ++n) {
      if (rho2[n] == 0.0) continue;
      loads[n] = rho2[n] * (MO * fluid_part(S, P[n]));
      pair.add(dt * P[n].dot(loads[n]));
    }
    StateVec y = forward(op, Vec::Zero(S.nZ), Vec3::Zero(), dt, N, loads, {});
    const double direct = inner(op, q, y);
    const double scale = std::max({std::abs(direct), std::abs(pair.value()), 1e-300});
    cert.max_duality_residual = std::max(cert.max_duality_residual, std::abs(direct - pair.value()) / scale);
    if (Pout) *Pout = std::move(P);
    return y;
  };

  StateVec yfree = forward(op, pb.w0.z, Vec3(pb.h0.x(), pb.h0.y(), pb.theta0), dt, N, pb.loads, pb.position_sources);
  StateVec b{-yfree.z, -yfree.a};
  const double bnorm = std::sqrt(inner(op, b, b));
  StateVec x{Vec::Zero(S.nZ), Vec3::Zero()};
  if (bnorm > 0.0) {
    StateVec r = b, p = b;
    double rr = inner(op, r, r);
    double best = std::sqrt(rr);
    int since_best = 0;
    for (int it = 1; it <= pb.cg.max_iterations; ++it) {
      StateVec Ap = apply(p, nullptr);
      Ap.z += pb.epsilon * p.z;
      Ap.a += pb.epsilon * p.a;
      const double pAp = inner(op, p, Ap);
      if (!(pAp > 0.0) || !std::isfinite(pAp))
        raise(ErrorKind::PenaltyTooSmall, "loss of positive curvature in CG at iteration " + std::to_string(it));
      const double alpha = rr / pAp;
      x.z += alpha * p.z;
      x.a += alpha * p.a;
      r.z -= alpha * Ap.z;
      r.a -= alpha * Ap.a;
      const double rr_new = inner(op, r, r);
      const double rn = std::sqrt(rr_new);
      CgLogEntry e;
      e.iteration = it;
      e.residual = rn / bnorm;
      e.functional = -0.5 * (h_inner(op, x.z, b.z + r.z) + x.a.dot(b.a + r.a));
      cert.log.push_back(e);
      cert.cg_iterations = it;
      if (rn > 1e6 * best)
        raise(ErrorKind::PenaltyTooSmall, "CG residual oscillates; increase epsilon");
      if (rn < best) {
        best = rn;
        since_best = 0;
      } else if (++since_best >= pb.cg.stall_window) {
        raise(ErrorKind::CGStalled, "no residual decrease over " + std::to_string(pb.cg.stall_window) + " iterations");
      }
      if (rn <= pb.cg.tol * bnorm) break;
      const double beta = rr_new / rr;
      rr = rr_new;
      p.z = r.z + beta * p.z;
      p.a = r.a + beta * p.a;
    }
  }

  std::vector<Vec> P;
  if (bnorm > 0.0) {
    DualData d;
    d.phi = x.z;
    d.gamma2 = x.a;
    P = backward(op, d, dt, N);
  } else {
    P.assign(N + 1, Vec::Zero(S.nZ));
  }
  res.v.assign(N + 1, Vec::Zero(S.nZ));
  res.loads.assign(N + 1, Vec::Zero(S.nZ));
  KahanSum energy;
  for (int n = 1; n <= N; ++n) {
    if (rho2[n] == 0.0) continue;
    Vec pf = fluid_part(S, P[n]);
    res.v[n] = rho2[n] * pf;
    res.loads[n] = MO * res.v[n];
    energy.add(dt * rho2[n] * pf.dot(MO * pf));
  }
  cert.control_energy_weighted = energy.value();

  // controlled linear run with the known sources
  std::vector<Vec> total(N + 1);
  for (int n = 0; n <= N; ++n) total[n] = pb.loads.empty() ? res.loads[n] : Vec(res.loads[n] + pb.loads[n]);
  Trajectory& tr = res.traj;
  RigidState rs;
  rs.h = pb.h0;
  rs.theta = pb.theta0;
  rs.l = pb.w0.l(S);
  rs.omega = pb.w0.k(S);
  tr.t.push_back(0.0);
  tr.w.push_back(pb.w0);
  tr.rigid.push_back(rs);
  for (int n = 1; n <= N; ++n) {
    FsiField w = step_linear_load(op, tr.w.back(), total[n - 1], total[n], dt, 1.0);
    rs.l = w.l(S);
    rs.omega = w.k(S);
    rs.h += dt * rs.l;
    rs.theta += dt * rs.omega;
    if (!pb.position_sources.empty()) {
      rs.h += dt * pb.position_sources[n].head<2>();
      rs.theta += dt * pb.position_sources[n](2);
    }
    tr.t.push_back(n * dt);
    tr.w.push_back(std::move(w));
    tr.rigid.push_back(rs);
  }
  cert.terminal_state_norm = h_norm(op, tr.w.back().z);
  cert.terminal_position_error = std::hypot(tr.rigid.back().h.norm(), tr.rigid.back().theta);
  return res;
}

Vec smooth_random_state(const DiscreteOperator& op, Rng& rng, int modes) {
  struct Mode {
    double kx, ky, ph, c;
  };
  std::vector<Mode> ms(modes);
  for (auto& m : ms) {
    m.kx = rng.uniform(-3.0, 3.0);
    m.ky = rng.uniform(-3.0, 3.0);
    m.ph = rng.uniform(0.0, 2.0 * M_PI);
    m.c = rng.normal();
  }
  Vec2 l(rng.normal(), rng.normal());
  double k = rng.normal();
  VelocityFn u = [&ms](const Vec2& y) -> Vec2 {
    Vec2 out = Vec2::Zero();
    for (const auto& m : ms) {
      double c = m.c * std::cos(m.kx * y.x() + m.ky * y.y() + m.ph);
      out += Vec2(-m.ky * c, m.kx * c);  // curl of sin(k.y + ph)
    }
    return out;
  };
  return project_to_constraints(op, interpolate(op.space, u, l, k));
}

ObservabilityStats observability_ratio(const DiscreteOperator& op, const Domain& domain, const WeightSet& w,
                                       double T, int steps, const ObservabilityOptions& opt) {
  const FeSpace& S = op.space;
  const double dt = T / steps;
  const SpMat MO = control_mass(S, domain.control);
  std::vector<double> r1(steps + 1), r2(steps + 1), r3(steps + 1);
  for (int n = 0; n <= steps; ++n) {
    r1[n] = std::pow(w.rho_tilde(1, n * dt), 2);
    r2[n] = std::pow(w.rho_tilde(2, n * dt), 2);
    r3[n] = std::pow(w.rho_tilde(3, n * dt), 2);
  }
  ObservabilityStats st;
  for (int k = 0; k < opt.samples; ++k) {
    Rng rng(opt.seed * 1000003ULL + static_cast<std::uint64_t>(k));
    DualData d;
    if (opt.late_fraction <= 0.0) d.gamma2 = Vec3(rng.normal(), rng.normal(), rng.normal());
    std::vector<Vec> bins(opt.time_bins);
    for (auto& b : bins) b = smooth_random_state(op, rng);
    std::vector<Vec> src(steps + 1, Vec::Zero(S.nZ));
    d.gamma1.assign(steps + 1, Vec::Zero(S.nZ));
    for (int n = 0; n <= steps; ++n) {
      double t = n * dt;
      if (opt.late_fraction > 0.0 && t < opt.late_fraction * T) continue;
      int b = std::min(opt.time_bins - 1, static_cast<int>(t / T * opt.time_bins));
      src[n] = bins[b];
      d.gamma1[n] = op.M * bins[b];
    }
    // C* gamma2 as an element of H: rigid slots divided by the rigid mass
    Vec c = Vec::Zero(S.nZ);
    c(S.ldof(0)) = d.gamma2(0) / op.params.m;
    c(S.ldof(1)) = d.gamma2(1) / op.params.m;
    c(S.kdof()) = d.gamma2(2) / op.params.J;
    std::vector<Vec> P = backward(op, d, dt, steps);
    KahanSum lhs, rhs;
    lhs.add(d.gamma2.squaredNorm());
    lhs.add(h_inner(op, P[0], P[0]));
    for (int n = 1; n <= steps; ++n) {
      lhs.add(dt * r1[n] * h_inner(op, P[n], P[n]));
      Vec g = src[n] + c;
      rhs.add(dt * r2[n] * h_inner(op, g, g));
      if (r3[n] > 0.0) {
        Vec pf = fluid_part(S, P[n]);
        rhs.add(dt * r3[n] * pf.dot(MO * pf));
      }
    }
    if (lhs.value() == 0.0 && rhs.value() == 0.0) {
      ++st.skipped;
      continue;
    }
    st.ratios.push_back(lhs.value() / rhs.value());
  }
  if (!st.ratios.empty()) {
    st.max_ratio = *std::max_element(st.ratios.begin(), st.ratios.end());
    st.mean_ratio = std::accumulate(st.ratios.begin(), st.ratios.end(), 0.0) / st.ratios.size();
  }
  return st;
}

ClosedLoopReport closed_loop_experiment(const ControlProblem& pb, const DiscreteOperator& op, const Domain& domain,
                                        const ClosedLoopOptions& opt) {
  const FeSpace& S = op.space;
  const int N = pb.steps;
  ClosedLoopReport rep;

  NonlinearProblem np;
  np.op = &op;
  np.domain = &domain;
  np.w0 = pb.w0;
  np.h0 = pb.h0;
  np.theta0 = pb.theta0;
  np.T = pb.T;
  np.steps = N;
  NonlinearResult free = solve_nonlinear(np, opt.nonlinear);
  rep.uncontrolled = free.traj;
  rep.uncontrolled_terminal = terminal_metric(op, free.traj);
  if (rep.uncontrolled_terminal == 0.0) {
    rep.controlled = free.traj;
    rep.v.assign(N + 1, Vec::Zero(S.nZ));
    rep.terminal.push_back(0.0);
    rep.min_margin.push_back(free.min_margin);
    return rep;
  }

  ControlProblem lin = pb;
  std::vector<Vec> warm = free.remainder;
  double best = INFINITY, prev = INFINITY;
  for (int k = 0; k < opt.max_outer; ++k) {
    ControlResult cr = compute_control(lin, op, domain);
    np.control = cr.loads;
    np.initial_remainder = warm;
    NonlinearResult nr = solve_nonlinear(np, opt.nonlinear);
    const double term = terminal_metric(op, nr.traj);
    rep.terminal.push_back(term);
    rep.min_margin.push_back(nr.min_margin);
    rep.outer_iterations = k + 1;
    if (term < best) {
      best = term;
      rep.controlled = nr.traj;
      rep.v = cr.v;
      rep.certificate = cr.certificate;
    }
    if (term > 0.1 * prev) break;
    prev = term;
    // the remainder and the rigid kinematics defect become known sources of the linear model
    warm = nr.remainder;
    lin.loads = nr.remainder;
    lin.position_sources.assign(N + 1, Vec3::Zero());
    for (int n = 0; n <= N; ++n) {
      const RigidState& r = nr.traj.rigid[n];
      Vec2 d = (rotation_matrix(r.theta) - Mat2::Identity()) * r.l;
      lin.position_sources[n] = Vec3(d.x(), d.y(), 0.0);
    }
  }
  return rep;
}

}  // namespace fsinc
