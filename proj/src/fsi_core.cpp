#include "fsinc/fsi_core.hpp"

#include <Eigen/SparseLU>

#include <algorithm>

namespace fsinc {

using Trip = Eigen::Triplet<double>;

struct DiscreteOperator::Factor {
  SpMat A;
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
};

namespace {

constexpr int kVolumeOrder = 4;
constexpr int kEdgePoints = 4;

struct EdgeRule {
  std::vector<double> x, w;
  EdgeRule() { gauss_legendre01(kEdgePoints, x, w); }
};
const EdgeRule& edge_rule() {
  static const EdgeRule r;
  return r;
}

}  // namespace

DiscreteOperator assemble(const Mesh& mesh, const PhysicalParams& params) {
  params.validate();
  DiscreteOperator op;
  op.space = FeSpace(mesh);
  op.params = params;
  const FeSpace& S = op.space;
  const Mesh& m = S.mesh;
  if (m.nt() == 0) raise(ErrorKind::MeshTooCoarse, "empty mesh");
  op.h_max = m.max_edge();

  std::vector<Trip> tm, tk, tb;
  op.mean = Vec::Zero(S.np);
  const TriQuadrature& Q = tri_quadrature(kVolumeOrder);
  const double nu = params.nu;
  double phi[4];
  Vec2 dphi[4];
  for (int t = 0; t < S.nt; ++t) {
    ElementGeom g = element_geom(m, t);
    if (!(g.area > 0)) raise(ErrorKind::AssemblyFailed, "degenerate triangle " + std::to_string(t));
    auto dofs = S.element_dofs(t);
    const auto& T = m.triangles[t];
    Eigen::Matrix<double, 8, 8> Me = Eigen::Matrix<double, 8, 8>::Zero();
    Eigen::Matrix<double, 8, 8> Ke = Eigen::Matrix<double, 8, 8>::Zero();
    Eigen::Matrix<double, 3, 8> Be = Eigen::Matrix<double, 3, 8>::Zero();
    for (size_t q = 0; q < Q.weight.size(); ++q) {
      mini_basis(g, Q.bary[q], phi, dphi);
      const double w = 2.0 * g.area * Q.weight[q];
      for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
          double mm = w * phi[a] * phi[b];
          double gg = dphi[a].dot(dphi[b]);
          for (int c = 0; c < 2; ++c) {
            Me(2 * a + c, 2 * b + c) += mm;
            for (int c2 = 0; c2 < 2; ++c2)
              Ke(2 * a + c, 2 * b + c2) += w * nu * ((c == c2 ? gg : 0.0) + dphi[a](c2) * dphi[b](c));
          }
        }
        for (int qv = 0; qv < 3; ++qv)
          for (int c = 0; c < 2; ++c) Be(qv, 2 * a + c) -= w * Q.bary[q][qv] * dphi[a](c);
      }
      for (int qv = 0; qv < 3; ++qv) op.mean(T[qv]) += w * Q.bary[q][qv];
    }
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) {
        if (Me(i, j) != 0.0) tm.emplace_back(dofs[i], dofs[j], Me(i, j));
        if (Ke(i, j) != 0.0) tk.emplace_back(dofs[i], dofs[j], Ke(i, j));
      }
    for (int qv = 0; qv < 3; ++qv)
      for (int j = 0; j < 8; ++j)
        if (Be(qv, j) != 0.0) tb.emplace_back(T[qv], dofs[j], Be(qv, j));
  }
  tm.emplace_back(S.ldof(0), S.ldof(0), params.m);
  tm.emplace_back(S.ldof(1), S.ldof(1), params.m);
  tm.emplace_back(S.kdof(), S.kdof(), params.J);

  // tangential friction on both boundaries
  const EdgeRule& er = edge_rule();
  bool has_outer = false, has_body = false;
  for (const auto& e : m.boundary_edges) {
    const bool body = e.marker == kBody;
    (body ? has_body : has_outer) = true;
    const double beta = body ? params.beta_S : params.beta_Omega;
    const Vec2 xa = m.vertices[e.a], xb = m.vertices[e.b];
    const double len = (xb - xa).norm();
    if (!(len > 0)) raise(ErrorKind::MeshTooCoarse, "zero-length boundary edge");
    if (beta == 0.0) continue;
    std::vector<int> dofs = {S.vdof(e.a, 0), S.vdof(e.a, 1), S.vdof(e.b, 0), S.vdof(e.b, 1)};
    if (body) dofs.insert(dofs.end(), {S.ldof(0), S.ldof(1), S.kdof()});
    const int nd = static_cast<int>(dofs.size());
    Eigen::MatrixXd Fe = Eigen::MatrixXd::Zero(nd, nd);
    for (int q = 0; q < kEdgePoints; ++q) {
      const double s = er.x[q];
      Vec2 n = (1.0 - s) * m.vertex_normals[e.a] + s * m.vertex_normals[e.b];
      n.normalize();
      Mat2 P = Mat2::Identity() - n * n.transpose();
      Eigen::Matrix<double, 2, Eigen::Dynamic> Cq(2, nd);
      Cq.setZero();
      Cq(0, 0) = Cq(1, 1) = 1.0 - s;
      Cq(0, 2) = Cq(1, 3) = s;
      if (body) {
        Cq(0, 4) = Cq(1, 5) = -1.0;
        Cq.col(6) = -perp((1.0 - s) * xa + s * xb);
      }
      Fe += beta * len * er.w[q] * Cq.transpose() * P * Cq;
    }
    if (!(Fe.diagonal().minCoeff() >= 0.0)) raise(ErrorKind::MeshTooCoarse, "boundary friction lost positivity");
    for (int i = 0; i < nd; ++i)
      for (int j = 0; j < nd; ++j)
        if (Fe(i, j) != 0.0) tk.emplace_back(dofs[i], dofs[j], Fe(i, j));
  }
  if (!has_outer || !has_body) raise(ErrorKind::MeshTooCoarse, "mesh must carry both outer and body boundaries");

  std::vector<Trip> tc;
  int row = 0;
  for (int v : m.boundary_vertices) {
    const Vec2 n = m.vertex_normals[v];
    tc.emplace_back(row, S.vdof(v, 0), n.x());
    tc.emplace_back(row, S.vdof(v, 1), n.y());
    if (m.vertex_marker[v] == kBody) {
      tc.emplace_back(row, S.ldof(0), -n.x());
      tc.emplace_back(row, S.ldof(1), -n.y());
      tc.emplace_back(row, S.kdof(), -n.dot(perp(m.vertices[v])));
    }
    op.constrained_vertices.push_back(v);
    ++row;
  }

  op.M.resize(S.nZ, S.nZ);
  op.M.setFromTriplets(tm.begin(), tm.end());
  op.K.resize(S.nZ, S.nZ);
  op.K.setFromTriplets(tk.begin(), tk.end());
  op.B.resize(S.np, S.nZ);
  op.B.setFromTriplets(tb.begin(), tb.end());
  op.C.resize(row, S.nZ);
  op.C.setFromTriplets(tc.begin(), tc.end());
  return op;
}

std::shared_ptr<DiscreteOperator::Factor> DiscreteOperator::factor(double aM, double aK) const {
  std::lock_guard<std::mutex> lock(cache_->mtx);
  auto key = std::make_pair(aM, aK);
  auto it = cache_->f.find(key);
  if (it != cache_->f.end()) return it->second;

  const int nZ = space.nZ, np = space.np, nc = static_cast<int>(C.rows());
  const int n = nZ + np + nc + 1;
  std::vector<Trip> t;
  SpMat A = aM * M + aK * K;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it2(A, k); it2; ++it2) t.emplace_back(it2.row(), it2.col(), it2.value());
  for (int k = 0; k < B.outerSize(); ++k)
    for (SpMat::InnerIterator it2(B, k); it2; ++it2) {
      t.emplace_back(nZ + it2.row(), it2.col(), it2.value());
      t.emplace_back(it2.col(), nZ + it2.row(), it2.value());
    }
  for (int k = 0; k < C.outerSize(); ++k)
    for (SpMat::InnerIterator it2(C, k); it2; ++it2) {
      t.emplace_back(nZ + np + it2.row(), it2.col(), it2.value());
      t.emplace_back(it2.col(), nZ + np + it2.row(), it2.value());
    }
  for (int q = 0; q < np; ++q) {
    t.emplace_back(nZ + q, n - 1, mean(q));
    t.emplace_back(n - 1, nZ + q, mean(q));
  }
  auto f = std::make_shared<Factor>();
  f->A.resize(n, n);
  f->A.setFromTriplets(t.begin(), t.end());
  f->A.makeCompressed();
  f->lu.analyzePattern(f->A);
  f->lu.factorize(f->A);
  if (f->lu.info() != Eigen::Success) raise(ErrorKind::LinearSolveFailed, "saddle-point factorization failed");
  cache_->f[key] = f;
  return f;
}

KktSolution DiscreteOperator::solve_kkt(double aM, double aK, const Vec& rz) const {
  auto f = factor(aM, aK);
  const int nZ = space.nZ, np = space.np, nc = static_cast<int>(C.rows());
  Vec rhs = Vec::Zero(f->A.rows());
  rhs.head(nZ) = rz;
  Vec x = f->lu.solve(rhs);
  Vec r = rhs - f->A * x;
  const double scale = std::max(rhs.norm(), 1e-300);
  if (r.norm() > 1e-13 * scale) {
    x += f->lu.solve(r);
    r = rhs - f->A * x;
  }
  if (!x.allFinite()) raise(ErrorKind::NonFiniteState, "saddle-point solve produced non-finite values");
  if (r.norm() > 1e-10 * scale && rhs.norm() > 0)
    raise(ErrorKind::LinearSolveFailed, "relative residual " + format_double(r.norm() / scale));
  KktSolution s;
  s.z = x.head(nZ);
  s.p = x.segment(nZ, np);
  s.mu = x.segment(nZ + np, nc);
  s.sigma = x(nZ + np + nc);
  return s;
}

FsiField zero_field(const DiscreteOperator& op) {
  return {Vec::Zero(op.space.nZ), Vec::Zero(op.space.np), Vec::Zero(op.C.rows())};
}

SourceTerms make_source(const DiscreteOperator& op, std::function<Vec2(double, const Vec2&)> F1,
                        std::function<Vec2(double)> F2, std::function<double(double)> F3) {
  const FeSpace* S = &op.space;
  SourceTerms src;
  src.load = [S, F1, F2, F3](double t) {
    Vec b = F1 ? fluid_load(*S, [&](const Vec2& x) { return F1(t, x); }) : Vec::Zero(S->nZ);
    if (F2) {
      Vec2 f = F2(t);
      b(S->ldof(0)) += f.x();
      b(S->ldof(1)) += f.y();
    }
    if (F3) b(S->kdof()) += F3(t);
    return b;
  };
  return src;
}

double h_inner(const DiscreteOperator& op, const Vec& a, const Vec& b) { return a.dot(op.M * b); }
double h_norm(const DiscreteOperator& op, const Vec& z) { return std::sqrt(std::max(0.0, h_inner(op, z, z))); }
double energy_form(const DiscreteOperator& op, const Vec& z) { return z.dot(op.K * z); }

ConstraintResidual constraint_residual(const DiscreteOperator& op, const Vec& z) {
  ConstraintResidual r;
  Vec bz = op.B * z;
  // the constant pressure mode is handled by the mean multiplier
  double s = bz.dot(op.mean) / op.mean.squaredNorm();
  r.divergence = (bz - s * op.mean).cwiseAbs().maxCoeff();
  Vec cz = op.C * z;
  r.normal_trace = cz.size() ? cz.cwiseAbs().maxCoeff() : 0.0;
  return r;
}

Vec project_to_constraints(const DiscreteOperator& op, const Vec& z) {
  return op.solve_kkt(1.0, 0.0, op.M * z).z;
}

Vec random_state(const DiscreteOperator& op, Rng& rng) {
  Vec z(op.space.nZ);
  for (int i = 0; i < z.size(); ++i) z(i) = rng.normal();
  return project_to_constraints(op, z);
}

FsiField step_linear_load(const DiscreteOperator& op, const FsiField& state, const Vec& load_old,
                          const Vec& load_new, double dt, double theta) {
  if (!(dt > 0)) raise(ErrorKind::ConfigInvalid, "dt must be positive");
  if (!(theta >= 0.5 && theta <= 1.0)) raise(ErrorKind::ConfigInvalid, "scheme theta must lie in [0.5, 1]");
  Vec rhs = op.M * state.z + dt * (theta * load_new + (1.0 - theta) * load_old);
  if (theta < 1.0) rhs -= (1.0 - theta) * dt * (op.K * state.z);
  KktSolution s = op.solve_kkt(1.0, theta * dt, rhs);
  FsiField out;
  out.z = std::move(s.z);
  out.p = s.p / dt;
  out.mu = s.mu / dt;
  if (!out.z.allFinite()) raise(ErrorKind::NonFiniteState, "non-finite state after step");
  return out;
}

FsiField step_linear(const DiscreteOperator& op, const FsiField& state, const SourceTerms& src, double t, double dt,
                     double theta) {
  const int nZ = op.space.nZ;
  Vec b1 = src.at(t + dt, nZ);
  Vec b0 = theta < 1.0 ? src.at(t, nZ) : Vec::Zero(nZ);
  return step_linear_load(op, state, b0, b1, dt, theta);
}

Trajectory simulate_linear(const DiscreteOperator& op, const FsiField& w0, const Vec2& h0, double theta0,
                           const SourceTerms& src, double T, int steps, double theta) {
  if (steps < 1) raise(ErrorKind::ConfigInvalid, "need at least one time step");
  const FeSpace& S = op.space;
  Trajectory tr;
  const double dt = T / steps;
  RigidState rs;
  rs.h = h0;
  rs.theta = theta0;
  rs.l = w0.l(S);
  rs.omega = w0.k(S);
  tr.t.push_back(0.0);
  tr.w.push_back(w0);
  tr.rigid.push_back(rs);
  Vec b_old = theta < 1.0 ? src.at(0.0, S.nZ) : Vec::Zero(S.nZ);
  for (int n = 0; n < steps; ++n) {
    double t1 = (n + 1) * dt;
    Vec b_new = src.at(t1, S.nZ);
    FsiField w = step_linear_load(op, tr.w.back(), b_old, b_new, dt, theta);
    b_old = std::move(b_new);
    rs.l = w.l(S);
    rs.omega = w.k(S);
    rs.h += dt * rs.l;
    rs.theta += dt * rs.omega;
    tr.t.push_back(t1);
    tr.w.push_back(std::move(w));
    tr.rigid.push_back(rs);
  }
  return tr;
}

Trajectory simulate_loads(const DiscreteOperator& op, const FsiField& w0, const Vec2& h0, double theta0,
                          const std::vector<Vec>& loads, double T, int steps, double theta, Kinematics kin) {
  if (steps < 1) raise(ErrorKind::ConfigInvalid, "need at least one time step");
  if (!loads.empty() && static_cast<int>(loads.size()) != steps + 1)
    raise(ErrorKind::GridMismatch, "one load vector per time node expected");
  const FeSpace& S = op.space;
  const Vec zero = Vec::Zero(S.nZ);
  auto load = [&](int n) -> const Vec& { return loads.empty() ? zero : loads[n]; };
  Trajectory tr;
  const double dt = T / steps;
  RigidState rs;
  rs.h = h0;
  rs.theta = theta0;
  rs.l = w0.l(S);
  rs.omega = w0.k(S);
  tr.t.push_back(0.0);
  tr.w.push_back(w0);
  tr.rigid.push_back(rs);
  for (int n = 0; n < steps; ++n) {
    FsiField w = step_linear_load(op, tr.w.back(), load(n), load(n + 1), dt, theta);
    rs.l = w.l(S);
    rs.omega = w.k(S);
    rs.theta += dt * rs.omega;
    rs.h += dt * (kin == Kinematics::Rigid ? Vec2(rotation_matrix(rs.theta) * rs.l) : rs.l);
    tr.t.push_back((n + 1) * dt);
    tr.w.push_back(std::move(w));
    tr.rigid.push_back(rs);
  }
  return tr;
}

InitialDataReport validate_initial_data(const Domain& domain, const std::function<FieldWithGradient(const Vec2&)>& u0,
                                        const Vec2& l0, double omega0, const Vec2& h0, double theta0, double tol,
                                        int samples) {
  InitialDataReport rep;
  PlacedBody pb = place_body(domain, h0, theta0);
  const Vec2 hdot = rotation_matrix(theta0) * l0;
  Polyline outer = sample_shape(domain.outer, samples);
  for (size_t i = 0; i < outer.points.size(); ++i)
    rep.outer_normal = std::max(rep.outer_normal, std::abs(u0(outer.points[i]).u.dot(outer.normals[i])));
  for (size_t i = 0; i < pb.boundary.points.size(); i += std::max<size_t>(1, pb.boundary.points.size() / samples)) {
    const Vec2& x = pb.boundary.points[i];
    Vec2 us = hdot + omega0 * perp(x - h0);
    rep.body_normal = std::max(rep.body_normal, std::abs((u0(x).u - us).dot(pb.boundary.normals[i])));
  }
  const int nr = std::max(4, samples / 20), na = std::max(8, samples / 4);
  for (int i = 1; i < nr; ++i) {
    for (int j = 0; j < na; ++j) {
      Vec2 x = (static_cast<double>(i) / nr) * domain.outer.point(2.0 * M_PI * (j + 0.5) / na);
      if (pb.contains(x, domain.body)) continue;
      rep.divergence = std::max(rep.divergence, std::abs(u0(x).grad.trace()));
    }
  }
  rep.pass = rep.divergence <= tol && rep.outer_normal <= tol && rep.body_normal <= tol;
  return rep;
}

double stiffness_asymmetry(const DiscreteOperator& op) {
  SpMat d = op.K - SpMat(op.K.transpose());
  double num = 0.0, den = 0.0;
  for (int k = 0; k < d.outerSize(); ++k)
    for (SpMat::InnerIterator it(d, k); it; ++it) num = std::max(num, std::abs(it.value()));
  for (int k = 0; k < op.K.outerSize(); ++k)
    for (SpMat::InnerIterator it(op.K, k); it; ++it) den = std::max(den, std::abs(it.value()));
  return den > 0 ? num / den : 0.0;
}

RitzReport ritz_extremes(const DiscreteOperator& op, int iterations, std::uint64_t seed) {
  // shift-invert: S = (K + sigma M)^{-1} M on the constraint kernel, self-adjoint in <.,.>_M
  const double sigma = 1.0;
  Rng rng(seed);
  Vec q = random_state(op, rng);
  q /= h_norm(op, q);
  std::vector<Vec> Qs;
  std::vector<double> alpha, beta;
  Vec qprev = Vec::Zero(q.size());
  double bprev = 0.0;
  for (int j = 0; j < iterations; ++j) {
    Qs.push_back(q);
    Vec w = op.solve_kkt(sigma, 1.0, op.M * q).z;
    double a = h_inner(op, q, w);
    w -= a * q + bprev * qprev;
    for (const auto& v : Qs) w -= h_inner(op, v, w) * v;  // full reorthogonalization
    alpha.push_back(a);
    double b = h_norm(op, w);
    if (b < 1e-14 || j == iterations - 1) break;
    beta.push_back(b);
    qprev = q;
    q = w / b;
    bprev = b;
  }
  const int k = static_cast<int>(alpha.size());
  Eigen::MatrixXd Tm = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    Tm(i, i) = alpha[i];
    if (i + 1 < k) Tm(i, i + 1) = Tm(i + 1, i) = beta[i];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Tm);
  const Vec& mu = es.eigenvalues();
  RitzReport r;
  r.iterations = k;
  r.min_value = 1.0 / mu(k - 1) - sigma;
  r.max_value = 1.0 / std::max(mu(0), 1e-300) - sigma;
  double kd = 0.0, md = 1e300;
  for (int i = 0; i < op.space.nfluid(); ++i) {
    kd = std::max(kd, op.K.coeff(i, i));
    md = std::min(md, op.M.coeff(i, i));
  }
  r.scale = kd / md;
  return r;
}

BodyForce hydro_force(const DiscreteOperator& op, const FsiField& w) {
  const FeSpace& S = op.space;
  Vec r = op.K * w.z;
  if (w.mu.size() == op.C.rows()) r += op.C.transpose() * w.mu;
  BodyForce f;
  f.force = -Vec2(r(S.ldof(0)), r(S.ldof(1)));
  f.torque = -r(S.kdof());
  return f;
}

}  // namespace fsinc
