#include "fsinc/nonlinear.hpp"

#include <algorithm>
#include <sstream>

namespace fsinc {

namespace {

RigidPath path_of(const Trajectory& tr) { return RigidPath::from_states(tr.t, tr.rigid); }

struct QuadPoint {
  int tri;
  std::array<double, 3> bary;
  double weight;  // includes the element Jacobian
};

}  // namespace

double load_norm(const std::vector<Vec>& F, double dt) {
  KahanSum s;
  for (const auto& f : F) s.add(dt * f.squaredNorm());
  return std::sqrt(s.value());
}

std::vector<Vec> remainder_loads(const DiscreteOperator& op, const Domain& domain, const Trajectory& traj,
                                 const NonlinearOptions& opt, double* max_det_drift) {
  const FeSpace& S = op.space;
  const Mesh& mesh = S.mesh;
  const double nu = op.params.nu;
  const int N = static_cast<int>(traj.t.size()) - 1;

  RigidPath path = path_of(traj);
  double hmax = 0.0;
  for (int n = 0; n <= N; ++n) {
    MarginReport mr = collision_margin(domain, path.h[n], path.theta[n]);
    if (!mr.flag)
      raise(ErrorKind::MarginViolated, "margin " + format_double(mr.margin) + " at time node " + std::to_string(n));
    hmax = std::max(hmax, path.h[n].norm());
  }
  CutoffParams cut = CutoffParams::from_domain(domain);
  const double reach = hmax + cut.r_out;

  const TriQuadrature& rule = tri_quadrature(opt.quad_order);
  std::vector<QuadPoint> qp;
  std::vector<Vec2> pts;
  std::vector<unsigned char> moving;
  for (int t = 0; t < S.nt; ++t) {
    ElementGeom g = element_geom(mesh, t);
    for (size_t q = 0; q < rule.weight.size(); ++q) {
      Vec2 y = g.point(rule.bary[q]);
      qp.push_back({t, rule.bary[q], 2.0 * g.area * rule.weight[q]});
      pts.push_back(y);
      moving.push_back(y.norm() < reach);
    }
  }
  const bool any_motion = hmax > 0.0 || std::any_of(path.theta.begin(), path.theta.end(),
                                                     [](double a) { return a != 0.0; });
  std::optional<FlowIntegrator> flow;
  if (any_motion && N > 0) flow.emplace(path, cut, pts, opt.flow_substeps);

  std::vector<Vec> F(N + 1, Vec::Zero(S.nZ));
  for (int n = 0; n <= N; ++n) {
    if (flow && n > 0) flow->advance();
    const FsiField& w = traj.w[n];
    Vec& b = F[n];
    int last_tri = -1;
    Vec2 gp = Vec2::Zero();
    ElementGeom geom;
    for (size_t q = 0; q < qp.size(); ++q) {
      const QuadPoint& Q = qp[q];
      if (Q.tri != last_tri) {
        geom = element_geom(mesh, Q.tri);
        gp = w.p.size() ? grad_pressure(S, w.p, Q.tri) : Vec2::Zero();
        last_tri = Q.tri;
      }
      PointValue pv = eval_velocity(S, w.z, Q.tri, Q.bary);
      const Vec2& u = pv.u;
      const Mat2& du = pv.grad;  // du(i,j) = d u_i / d y_j

      Vec2 a = Vec2::Zero();    // coefficient of v_i
      Mat2 B = Mat2::Zero();    // coefficient of d v_i / d y_k, B(i,k)
      // convection (u . grad) u, present with or without motion
      a -= du * u;
      if (flow && moving[q]) {
        MapSample ms = flow->sample(q);
        PointCoefficients pc = point_coefficients(ms, opt.mode);
        const Mat2& gu = pc.g_up;
        const Christoffel& G = pc.gamma;  // G[k](i,j) = Gamma^k_ij
        Mat2 gd = gu - Mat2::Identity();
        for (int i = 0; i < 2; ++i) {
          double lap = 0.0, m_term = 0.0, n_term = 0.0, p_term = 0.0;
          for (int j = 0; j < 2; ++j) {
            for (int k = 0; k < 2; ++k) {
              for (int l = 0; l < 2; ++l) {
                lap += 2.0 * gu(k, l) * G[i](j, k) * du(j, l);
                lap -= gu(k, l) * G[i](j, l) * du(j, k);
                for (int mm = 0; mm < 2; ++mm) lap += gu(k, l) * G[mm](j, l) * G[i](k, mm) * u(j);
              }
              m_term += (G[i](j, k) * pc.Yt(k)) * u(j);
              n_term += G[i](j, k) * u(j) * u(k);
            }
            m_term += pc.Yt(j) * du(i, j) + pc.A(i, j) * u(j);
            p_term -= gd(i, j) * gp(j);
          }
          a(i) += nu * lap - m_term - n_term + p_term;
          for (int k = 0; k < 2; ++k) {
            double bik = 0.0;
            for (int j = 0; j < 2; ++j) {
              bik -= gd(k, j) * du(i, j);
              for (int l = 0; l < 2; ++l) bik -= gu(k, l) * G[i](j, l) * u(j);
            }
            B(i, k) = nu * bik;
          }
        }
      }
      double phi[4];
      Vec2 dphi[4];
      mini_basis(geom, Q.bary, phi, dphi);
      const auto dofs = S.element_dofs(Q.tri);
      for (int s = 0; s < 4; ++s) {
        for (int c = 0; c < 2; ++c) {
          b(dofs[2 * s + c]) += Q.weight * (a(c) * phi[s] + B.row(c).dot(dphi[s]));
        }
      }
    }
    Vec2 l = w.l(S);
    double k = w.k(S);
    Vec2 f2 = -op.params.m * k * perp(l);
    b(S.ldof(0)) += f2.x();
    b(S.ldof(1)) += f2.y();
  }
  if (max_det_drift) *max_det_drift = flow ? flow->max_det_drift() : 0.0;
  return F;
}

NonlinearResult solve_nonlinear(const NonlinearProblem& pb, const NonlinearOptions& opt) {
  if (!pb.op || !pb.domain) raise(ErrorKind::ConfigInvalid, "nonlinear problem lacks operator or domain");
  const DiscreteOperator& op = *pb.op;
  const int N = pb.steps;
  const double dt = pb.T / N;
  const int nZ = op.space.nZ;
  if (!pb.control.empty() && static_cast<int>(pb.control.size()) != N + 1)
    raise(ErrorKind::GridMismatch, "control must provide one load per time node");

  if (!pb.initial_remainder.empty() && static_cast<int>(pb.initial_remainder.size()) != N + 1)
    raise(ErrorKind::GridMismatch, "initial remainder must provide one load per time node");
  NonlinearResult res;
  std::vector<Vec> F = pb.initial_remainder.empty() ? std::vector<Vec>(N + 1, Vec::Zero(nZ)) : pb.initial_remainder;
  double prev_diff = 0.0;
  int growth = 0;
  for (int it = 1; it <= opt.max_iterations; ++it) {
    std::vector<Vec> loads(N + 1);
    for (int n = 0; n <= N; ++n) loads[n] = pb.control.empty() ? F[n] : Vec(F[n] + pb.control[n]);
    res.traj = simulate_loads(op, pb.w0, pb.h0, pb.theta0, loads, pb.T, N, opt.theta, Kinematics::Rigid);
    double drift = 0.0;
    std::vector<Vec> Fn = remainder_loads(op, *pb.domain, res.traj, opt, &drift);
    res.max_det_drift = std::max(res.max_det_drift, drift);
    double diff = 0.0;
    {
      KahanSum s;
      for (int n = 0; n <= N; ++n) s.add(dt * (Fn[n] - F[n]).squaredNorm());
      diff = std::sqrt(s.value());
    }
    double nrm = load_norm(Fn, dt);
    if (!std::isfinite(diff) || !std::isfinite(nrm))
      raise(ErrorKind::FixedPointDiverged, "non-finite remainder at iteration " + std::to_string(it));
    res.differences.push_back(diff);
    res.norms.push_back(nrm);
    if (it >= 2 && prev_diff > 0.0) res.contraction = std::max(res.contraction, diff / prev_diff);
    growth = (it >= 2 && diff > prev_diff) ? growth + 1 : 0;
    prev_diff = diff;
    F = std::move(Fn);
    res.iterations = it;
    if (diff <= opt.tol * nrm || nrm == 0.0) {
      res.converged = true;
      break;
    }
    if (growth >= 3) break;
  }
  res.remainder = F;
  if (!res.converged) {
    std::ostringstream os;
    os << "Picard iteration did not converge; differences:";
    for (double d : res.differences) os << ' ' << format_double(d);
    raise(ErrorKind::FixedPointDiverged, os.str());
  }
  res.min_margin = 1e300;
  for (const auto& rs : res.traj.rigid)
    res.min_margin = std::min(res.min_margin, collision_margin(*pb.domain, rs.h, rs.theta).margin);
  return res;
}

}  // namespace fsinc
