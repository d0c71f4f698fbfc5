#include "fsinc/manufactured.hpp"

namespace fsinc {

double Poly::operator()(double r) const {
  double v = 0.0;
  for (size_t i = c.size(); i-- > 0;) v = v * r + c[i];
  return v;
}

Jet3 Poly::operator()(const Jet3& r) const {
  Jet3 v = Jet3::constant(0.0);
  for (size_t i = c.size(); i-- > 0;) v = v * r + c[i];
  return v;
}

Poly Poly::deriv() const {
  Poly d;
  for (size_t i = 1; i < c.size(); ++i) d.c.push_back(i * c[i]);
  if (d.c.empty()) d.c.push_back(0.0);
  return d;
}

Poly Poly::integral() const {
  Poly p;
  p.c.push_back(0.0);
  for (size_t i = 0; i < c.size(); ++i) p.c.push_back(c[i] / (i + 1));
  return p;
}

namespace {

// rows: value / first / second derivative of the monomial basis r^i at r
Eigen::RowVectorXd mono(int deg, double r, int order) {
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(deg + 1);
  for (int i = order; i <= deg; ++i) {
    double f = 1.0;
    for (int j = 0; j < order; ++j) f *= (i - j);
    row(i) = f * std::pow(r, i - order);
  }
  return row;
}

Poly from_coeffs(const Vec& v) {
  Poly p;
  p.c.assign(v.data(), v.data() + v.size());
  return p;
}

}  // namespace

ManufacturedSolution::ManufacturedSolution(const PhysicalParams& params, double r0, double R, Profile profile)
    : p_(params), r0_(r0), R_(R), profile_(profile) {
  const double nu = p_.nu, bO = p_.beta_Omega, bS = p_.beta_S;

  // rotation profile: f(r0) = r0 / 2, Navier conditions at both walls
  {
    Eigen::Matrix3d A;
    Eigen::Vector3d rhs;
    A.row(0) = mono(2, r0, 0);
    rhs(0) = 0.5 * r0;
    // -nu (f' - f/r0) + bS (f - r0) = 0
    A.row(1) = -nu * (mono(2, r0, 1) - mono(2, r0, 0) / r0) + bS * mono(2, r0, 0);
    rhs(1) = bS * r0;
    // nu (f' - f/R) + bO f = 0
    A.row(2) = nu * (mono(2, R, 1) - mono(2, R, 0) / R) + bO * mono(2, R, 0);
    rhs(2) = 0.0;
    f_ = from_coeffs(A.fullPivLu().solve(rhs));
    psi_ = f_.integral();
  }
  // translation profile g
  {
    Eigen::Matrix4d A;
    Eigen::Vector4d rhs = Eigen::Vector4d::Zero();
    A.row(0) = mono(3, r0, 0);
    rhs(0) = r0;
    A.row(1) = mono(3, R, 0);
    A.row(2) = nu * (mono(3, R, 2) - mono(3, R, 1) / R + mono(3, R, 0) / (R * R)) + bO * mono(3, R, 1);
    A.row(3) = nu * (mono(3, r0, 2) - mono(3, r0, 1) / r0 + mono(3, r0, 0) / (r0 * r0)) - bS * mono(3, r0, 1);
    rhs(3) = -bS;
    g_ = from_coeffs(A.fullPivLu().solve(rhs));
  }
  // interior profile q = (r - r0)(R - r) s(r), s quadratic, homogeneous Navier conditions
  {
    // coefficients of (r - r0)(R - r) r^j, j = 0..2, in the monomial basis up to degree 4
    Eigen::Matrix<double, 5, 3> P = Eigen::Matrix<double, 5, 3>::Zero();
    const double w0 = -r0 * R, w1 = r0 + R, w2 = -1.0;
    for (int j = 0; j < 3; ++j) {
      P(j, j) += w0;
      P(j + 1, j) += w1;
      P(j + 2, j) += w2;
    }
    Eigen::Matrix<double, 2, 5> Cn;
    Cn.row(0) = nu * (mono(4, R, 2) - mono(4, R, 1) / R) + bO * mono(4, R, 1);
    Cn.row(1) = -nu * (mono(4, r0, 2) - mono(4, r0, 1) / r0) + bS * mono(4, r0, 1);
    Eigen::Matrix<double, 2, 3> S = Cn * P;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(S);
    Vec a = lu.kernel().col(0);
    Vec coeffs = P * a;
    Poly q = from_coeffs(coeffs);
    q_ = from_coeffs(coeffs / q(0.5 * (r0 + R)));
  }
  for (int j = 0; j < 5; ++j) trac_[j] = mode_traction(j, 512);
}

ManufacturedSolution::Amp ManufacturedSolution::amp(int which, double t) const {
  static const double lin[5][2] = {{0.4, 0.6}, {-0.3, 0.5}, {0.5, -0.8}, {0.3, 0.4}, {0.2, 0.3}};
  static const double osc[5][3] = {{0.5, 2.0, 0.0}, {0.4, 2.0, 1.1}, {0.6, 2.0, 0.3}, {0.5, 1.0, 0.7}, {0.3, 2.0, 0.5}};
  if (profile_ == Profile::Linear) return {lin[which][0] + lin[which][1] * t, lin[which][1]};
  const double a = osc[which][0], w = osc[which][1] * M_PI, ph = osc[which][2];
  return {a * std::sin(w * t + ph), a * w * std::cos(w * t + ph)};
}

Vec2 ManufacturedSolution::l(double t) const { return Vec2(amp(0, t).v, amp(1, t).v); }
Vec2 ManufacturedSolution::l_dot(double t) const { return Vec2(amp(0, t).d, amp(1, t).d); }
double ManufacturedSolution::k(double t) const { return amp(2, t).v; }
double ManufacturedSolution::k_dot(double t) const { return amp(2, t).d; }

Jet3 ManufacturedSolution::mode_stream(int mode, const Vec2& x) const {
  Jet3 X = Jet3::var_x(x.x()), Y = Jet3::var_y(x.y());
  Jet3 r = sqrt(X * X + Y * Y);
  Jet3 ir = inverse(r);
  switch (mode) {
    case 0:
      return -1.0 * (g_(r) * Y * ir);
    case 1:
      return g_(r) * X * ir;
    case 2:
      return psi_(r);
    default:
      return q_(r) * (X * X - Y * Y) * (ir * ir);
  }
}

Jet3 ManufacturedSolution::stream(double t, const Vec2& x, bool dt) const {
  Jet3 psi = Jet3::constant(0.0);
  for (int j = 0; j < 4; ++j) psi += (dt ? amp(j, t).d : amp(j, t).v) * mode_stream(j, x);
  return psi;
}

FieldWithGradient ManufacturedSolution::velocity(double t, const Vec2& x) const {
  Jet3 s = stream(t, x, false);
  FieldWithGradient v;
  v.u = Vec2(-s.dy(), s.dx());
  v.grad << -s.dxy(), -s.dyy(), s.dxx(), s.dxy();
  return v;
}

double ManufacturedSolution::pressure(double t, const Vec2& x) const { return amp(4, t).v * x.x() * x.y(); }

Vec2 ManufacturedSolution::F1(double t, const Vec2& x) const {
  Jet3 s = stream(t, x, false);
  Jet3 sd = stream(t, x, true);
  Vec2 ut(-sd.dy(), sd.dx());
  Vec2 lap(-(s.dxxy() + s.dyyy()), s.dxxx() + s.dxyy());
  const double c = amp(4, t).v;
  return ut - p_.nu * lap + c * Vec2(x.y(), x.x());
}

BodyForce ManufacturedSolution::mode_traction(int mode, int samples) const {
  BodyForce f;
  KahanSum fx, fy, tq;
  const double ds = 2.0 * M_PI * r0_ / samples;
  for (int i = 0; i < samples; ++i) {
    double a = 2.0 * M_PI * i / samples;
    Vec2 x(r0_ * std::cos(a), r0_ * std::sin(a));
    Vec2 n = -x / r0_;
    Mat2 T;
    if (mode < 4) {
      Jet3 s = mode_stream(mode, x);
      Mat2 G;
      G << -s.dxy(), -s.dyy(), s.dxx(), s.dxy();
      T = p_.nu * (G + G.transpose());
    } else {
      T = -x.x() * x.y() * Mat2::Identity();
    }
    Vec2 tr = T * n;
    fx.add(tr.x() * ds);
    fy.add(tr.y() * ds);
    tq.add(perp(x).dot(tr) * ds);
  }
  f.force = Vec2(fx.value(), fy.value());
  f.torque = tq.value();
  return f;
}

BodyForce ManufacturedSolution::traction(double t, int samples) const {
  BodyForce f;
  for (int j = 0; j < 5; ++j) {
    BodyForce m = samples == 512 ? trac_[j] : mode_traction(j, samples);
    f.force += amp(j, t).v * m.force;
    f.torque += amp(j, t).v * m.torque;
  }
  return f;
}

Vec2 ManufacturedSolution::F2(double t) const { return p_.m * l_dot(t) + traction(t).force; }
double ManufacturedSolution::F3(double t) const { return p_.J * k_dot(t) + traction(t).torque; }

SourceTerms ManufacturedSolution::source(const DiscreteOperator& op) const {
  auto tables = std::make_shared<MmsDiscrete>(op, *this);
  SourceTerms s;
  s.load = [tables](double t) { return tables->load(t); };
  return s;
}

Vec ManufacturedSolution::exact_state(const DiscreteOperator& op, double t) const {
  return interpolate(op.space, [&](const Vec2& x) -> Vec2 { return velocity(t, x).u; }, l(t), k(t));
}

MmsDiscrete::MmsDiscrete(const DiscreteOperator& op, const ManufacturedSolution& mms) : op_(op), mms_(mms) {
  const FeSpace& S = op.space;
  for (int j = 0; j < 4; ++j) {
    Lu_[j] = fluid_load(S, [&](const Vec2& x) -> Vec2 {
      Jet3 s = mms.mode_stream(j, x);
      return Vec2(-s.dy(), s.dx());
    });
    Llap_[j] = fluid_load(S, [&](const Vec2& x) -> Vec2 {
      Jet3 s = mms.mode_stream(j, x);
      return Vec2(-(s.dxxy() + s.dyyy()), s.dxxx() + s.dxyy());
    });
  }
  Lp_ = fluid_load(S, [](const Vec2& x) -> Vec2 { return Vec2(x.y(), x.x()); });
  const TriQuadrature& Q = tri_quadrature(4);
  for (int t = 0; t < S.nt; ++t) {
    ElementGeom g = element_geom(S.mesh, t);
    for (size_t q = 0; q < Q.weight.size(); ++q) {
      tri_.push_back(t);
      bary_.push_back(Q.bary[q]);
      w_.push_back(2.0 * g.area * Q.weight[q]);
      Vec2 x = g.point(Q.bary[q]);
      for (int j = 0; j < 4; ++j) {
        Jet3 s = mms.mode_stream(j, x);
        uq_[j].emplace_back(-s.dy(), s.dx());
      }
    }
  }
}

Vec MmsDiscrete::load(double t) const {
  const FeSpace& S = op_.space;
  const double nu = op_.params.nu;
  Vec b = mms_.amplitude(4, t) * Lp_;
  for (int j = 0; j < 4; ++j) b += mms_.amplitude_rate(j, t) * Lu_[j] - nu * mms_.amplitude(j, t) * Llap_[j];
  Vec2 f2 = mms_.F2(t);
  b(S.ldof(0)) += f2.x();
  b(S.ldof(1)) += f2.y();
  b(S.kdof()) += mms_.F3(t);
  return b;
}

SourceTerms MmsDiscrete::source() const {
  SourceTerms s;
  s.load = [this](double t) { return load(t); };
  return s;
}

std::vector<Vec2> MmsDiscrete::sample(const Vec& z) const {
  std::vector<Vec2> out(w_.size());
  for (size_t i = 0; i < w_.size(); ++i) out[i] = eval_velocity(op_.space, z, tri_[i], bary_[i]).u;
  return out;
}

double MmsDiscrete::h_error(const Vec& z, double t) const {
  const FeSpace& S = op_.space;
  std::vector<Vec2> uh = sample(z);
  double a[4];
  for (int j = 0; j < 4; ++j) a[j] = mms_.amplitude(j, t);
  KahanSum e;
  for (size_t i = 0; i < w_.size(); ++i) {
    Vec2 ex = a[0] * uq_[0][i] + a[1] * uq_[1][i] + a[2] * uq_[2][i] + a[3] * uq_[3][i];
    e.add(w_[i] * (uh[i] - ex).squaredNorm());
  }
  Vec2 dl = Vec2(z(S.ldof(0)), z(S.ldof(1))) - mms_.l(t);
  double dk = z(S.kdof()) - mms_.k(t);
  e.add(op_.params.m * dl.squaredNorm() + op_.params.J * dk * dk);
  return std::sqrt(e.value());
}

double MmsDiscrete::l2_distance(const Vec& a, const Vec& b) const { return h_norm(op_, a - b); }

MmsRun run_manufactured(const DiscreteOperator& op, const ManufacturedSolution& mms, double T, int steps,
                        double theta) {
  const double dt = T / steps;
  MmsDiscrete tab(op, mms);
  FsiField w = zero_field(op);
  w.z = project_to_constraints(op, mms.exact_state(op, 0.0));
  MmsRun run;
  run.states.push_back(w.z);
  KahanSum acc;
  Vec b_old = theta < 1.0 ? tab.load(0.0) : Vec::Zero(op.space.nZ);
  for (int n = 0; n < steps; ++n) {
    const double t1 = (n + 1) * dt;
    Vec b_new = tab.load(t1);
    w = step_linear_load(op, w, b_old, b_new, dt, theta);
    b_old = std::move(b_new);
    run.states.push_back(w.z);
    double e = tab.h_error(w.z, t1);
    acc.add(dt * e * e);
    if (n == steps - 1) run.final_error = e;
    BodyForce exact = mms.traction(t1);
    BodyForce disc = hydro_force(op, w);
    run.max_force_error = std::max(run.max_force_error, (disc.force + exact.force).norm());
    run.force_scale = std::max(run.force_scale, exact.force.norm());
  }
  run.l2_time_error = std::sqrt(acc.value());
  return run;
}

TemporalOrder temporal_order(const DiscreteOperator& op, const ManufacturedSolution& mms, double T, int steps,
                             double theta) {
  TemporalOrder out;
  std::vector<MmsRun> runs;
  for (int k = 0; k < 3; ++k) {
    out.steps.push_back(steps << k);
    runs.push_back(run_manufactured(op, mms, T, steps << k, theta));
    out.exact_error.push_back(runs.back().l2_time_error);
  }
  for (int k = 0; k < 2; ++k) {
    const int n = out.steps[k];
    const double dt = T / n;
    KahanSum acc;
    for (int i = 1; i <= n; ++i) {
      double d = h_norm(op, runs[k].states[i] - runs[k + 1].states[2 * i]);
      acc.add(dt * d * d);
    }
    out.difference.push_back(std::sqrt(acc.value()));
  }
  out.order = std::log2(out.difference[0] / out.difference[1]);
  return out;
}

}  // namespace fsinc
