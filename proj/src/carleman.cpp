#include "fsinc/carleman.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <complex>
#include <sstream>

namespace fsinc {

void CarlemanParams::validate() const {
  if (!(lambda > 1.0)) raise(ErrorKind::ConfigInvalid, "carleman.lambda must exceed 1");
  if (!(s >= 1.0)) raise(ErrorKind::ConfigInvalid, "carleman.s must be at least 1");
  if (N < 4) raise(ErrorKind::ConfigInvalid, "carleman.N must be at least 4");
  if (!(T > 0.0)) raise(ErrorKind::ConfigInvalid, "carleman.T must be positive");
}

// ---------------------------------------------------------------- eta

namespace {

double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a < 0) a += 2.0 * M_PI;
  return a - M_PI;
}

// Periodic angular profile: Theta' = 1 - c (1 - (psi/w)^2)^3 on |psi| < w, 1 elsewhere,
// with c chosen so that Theta is 2 pi periodic.
struct AngularTilt {
  double center, w, c;
  AngularTilt(double center_, double w_) : center(center_), w(w_), c(2.0 * M_PI / (w_ * 32.0 / 35.0)) {}
  double operator()(double phi) const {
    double psi = wrap_angle(phi - center);
    double x = std::clamp(psi / w, -1.0, 1.0);
    double P = x - x * x * x + 0.6 * std::pow(x, 5) - std::pow(x, 7) / 7.0;
    return psi - c * w * P;
  }
};

void p1_gradients(const Mesh& mesh, const Vec& v, std::vector<Vec2>& grad) {
  grad.assign(mesh.nt(), Vec2::Zero());
  for (int t = 0; t < mesh.nt(); ++t) {
    ElementGeom g = element_geom(mesh, t);
    for (int a = 0; a < 3; ++a) grad[t] += v(mesh.triangles[t][a]) * g.grad[a];
  }
}

Vec poisson_unit_load(const Mesh& mesh) {
  const int nv = mesh.nv();
  std::vector<int> id(nv, -1);
  int n = 0;
  for (int v = 0; v < nv; ++v)
    if (mesh.vertex_marker[v] == kInterior) id[v] = n++;
  std::vector<Eigen::Triplet<double>> trip;
  Vec b = Vec::Zero(n);
  for (int t = 0; t < mesh.nt(); ++t) {
    ElementGeom g = element_geom(mesh, t);
    for (int a = 0; a < 3; ++a) {
      int ia = id[mesh.triangles[t][a]];
      if (ia < 0) continue;
      b(ia) += g.area / 3.0;
      for (int c = 0; c < 3; ++c) {
        int ic = id[mesh.triangles[t][c]];
        if (ic >= 0) trip.emplace_back(ia, ic, g.area * g.grad[a].dot(g.grad[c]));
      }
    }
  }
  Eigen::SparseMatrix<double> K(n, n);
  K.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(K);
  if (ldlt.info() != Eigen::Success) raise(ErrorKind::EtaConstructionFailed, "Poisson factorization failed");
  Vec x = ldlt.solve(b);
  Vec out = Vec::Zero(nv);
  for (int v = 0; v < nv; ++v)
    if (id[v] >= 0) out(v) = x(id[v]);
  return out;
}

Vec2 outward_edge_normal(const Mesh& mesh, const BoundaryEdge& e) {
  Vec2 d = mesh.vertices[e.b] - mesh.vertices[e.a];
  return Vec2(d.y(), -d.x()).normalized();
}

}  // namespace

double EtaField::value(const Mesh& mesh, int t, const std::array<double, 3>& b) const {
  const auto& tri = mesh.triangles[t];
  return b[0] * values(tri[0]) + b[1] * values(tri[1]) + b[2] * values(tri[2]);
}

EtaField build_eta(const Domain& domain, const Mesh& mesh, const EtaOptions& opt) {
  const AnnularSector core = domain.eta_core();
  const double r_c = 0.5 * (core.r0 + core.r1);
  AngularTilt tilt(core.center, 0.8 * 0.5 * core.arc);
  Vec base = poisson_unit_load(mesh);
  if (!(base.maxCoeff() > 0.0)) raise(ErrorKind::EtaConstructionFailed, "Poisson solution is not positive");
  std::vector<Vec2> gbase;
  p1_gradients(mesh, base, gbase);

  // radial log-derivative of the Poisson solution at the core's mid radius
  double shift = 0.0;
  {
    KahanSum num, den;
    const double band = 0.15 * (core.r1 - core.r0);
    for (int t = 0; t < mesh.nt(); ++t) {
      Vec2 c = mesh.centroid(t);
      double r = c.norm();
      if (std::abs(r - r_c) > band || std::abs(wrap_angle(std::atan2(c.y(), c.x()) - core.center)) > 0.5 * core.arc)
        continue;
      const auto& tri = mesh.triangles[t];
      double val = (base(tri[0]) + base(tri[1]) + base(tri[2])) / 3.0;
      if (val <= 0) continue;
      num.add(gbase[t].dot(c / r) / val);
      den.add(1.0);
    }
    if (den.value() > 0) shift = -num.value() / den.value();
  }

  const TriQuadrature& rule = tri_quadrature(2);
  EtaField eta;
  double a = opt.tilt;
  for (int round = 0; round <= opt.max_repairs; ++round) {
    Vec v(mesh.nv());
    for (int i = 0; i < mesh.nv(); ++i) {
      const Vec2& x = mesh.vertices[i];
      v(i) = base(i) * std::exp(a * tilt(std::atan2(x.y(), x.x())) + shift * (x.norm() - r_c));
    }
    int imax = 0;
    double vmax = v.maxCoeff(&imax);
    v /= vmax;
    eta.values = v;
    eta.argmax = mesh.vertices[imax];
    p1_gradients(mesh, v, eta.grad);
    eta.tilt = a;
    eta.radial_shift = shift;
    eta.repairs = round;
    double floor = INFINITY;
    for (int t = 0; t < mesh.nt(); ++t) {
      ElementGeom g = element_geom(mesh, t);
      for (const auto& b : rule.bary) {
        if (core.contains(g.point(b))) continue;
        floor = std::min(floor, eta.grad[t].norm());
      }
    }
    eta.gradient_floor = floor;
    if (floor >= opt.grad_floor) break;
    a *= 1.5;
  }
  eta.boundary_max = 0.0;
  for (int v : mesh.boundary_vertices) eta.boundary_max = std::max(eta.boundary_max, std::abs(eta.values(v)));
  eta.max_normal_derivative = -INFINITY;
  for (const auto& e : mesh.boundary_edges)
    eta.max_normal_derivative = std::max(eta.max_normal_derivative, eta.grad[e.tri].dot(outward_edge_normal(mesh, e)));
  if (eta.gradient_floor < opt.grad_floor)
    raise(ErrorKind::EtaConstructionFailed, "gradient floor " + format_double(eta.gradient_floor) +
                                                " below " + format_double(opt.grad_floor) + " after repairs");
  if (!(eta.max_normal_derivative < 0.0))
    raise(ErrorKind::EtaConstructionFailed, "normal derivative is not negative on the boundary");
  return eta;
}

// ---------------------------------------------------------------- weights

WeightSet::WeightSet(const CarlemanParams& p, double eta_sup) : p_(p), eta_sup_(eta_sup) {
  p_.validate();
  const double top = p_.lambda * (2 * p_.N + 2) * eta_sup_;
  if (top > 700.0) raise(ErrorKind::OverflowGuard, "exp(lambda (2N+2) |eta|) overflows; rescale lambda");
  e_top_ = std::exp(top);
  e_low_ = std::exp(p_.lambda * 2 * p_.N * eta_sup_);
  e_mid_ = std::exp(p_.lambda * (2 * p_.N + 1) * eta_sup_);
}

double WeightSet::denom(double t) const { return std::pow(t * (p_.T - t), p_.N); }

double WeightSet::inv_denom_excess(double t) const {
  const double q0 = 0.25 * p_.T * p_.T, tau = t - 0.5 * p_.T;
  return std::pow(q0, -p_.N) * std::expm1(-p_.N * std::log1p(-tau * tau / q0));
}

double WeightSet::beta_excess(double t, double eta) const {
  const double e = std::exp(p_.lambda * (2 * p_.N * eta_sup_ + eta));
  return (e_top_ - e) * inv_denom_excess(t) + e * std::expm1(p_.lambda * (eta_sup_ - eta)) / denom(0.5 * p_.T);
}
double WeightSet::beta_hat_excess(double t) const {
  return (e_top_ - e_low_) * inv_denom_excess(t) + (e_mid_ - e_low_) / denom(0.5 * p_.T);
}
double WeightSet::beta_star_excess(double t) const { return (e_top_ - e_mid_) * inv_denom_excess(t); }

double WeightSet::beta(double t, double eta) const {
  return (e_top_ - std::exp(p_.lambda * (2 * p_.N * eta_sup_ + eta))) / denom(t);
}
double WeightSet::beta_hat(double t) const { return (e_top_ - e_low_) / denom(t); }
double WeightSet::beta_star(double t) const { return (e_top_ - e_mid_) / denom(t); }
double WeightSet::beta_hat_dot(double t) const {
  const double q = t * (p_.T - t);
  return -(e_top_ - e_low_) * p_.N * std::pow(q, -p_.N - 1) * (p_.T - 2.0 * t);
}
double WeightSet::xi(double t, double eta) const {
  return std::exp(p_.lambda * (2 * p_.N * eta_sup_ + eta)) / denom(t);
}
double WeightSet::xi_star(double t) const { return e_low_ / denom(t); }
double WeightSet::xi_hat(double t) const { return e_mid_ / denom(t); }

double WeightSet::log_rho(double t) const {
  if (t <= 0.0 || t >= p_.T) return -INFINITY;
  return -1.5 * p_.s * beta_hat(t);
}

double WeightSet::log_rho_i(int i, double t) const {
  const double T = p_.T;
  if (t >= T) return -INFINITY;
  const double tt = t < 0.5 * T ? 0.5 * T : t;
  const double s = p_.s, l = p_.lambda;
  const double ldenom = p_.N * std::log(tt * (T - tt));
  const double bh = beta_hat(tt);
  switch (i) {
    case 1: {
      double lxs = l * 2 * p_.N * eta_sup_ - ldenom;
      return 1.5 * std::log(s * l) - 2.5 * s * bh + 1.5 * lxs;
    }
    case 2:
      return -1.5 * s * bh;
    case 3: {
      double lxh = l * (2 * p_.N + 1) * eta_sup_ - ldenom;
      return 2.5 * std::log(s) + 3.0 * std::log(l) - s * beta_star(tt) - 1.5 * s * bh + 2.5 * lxh;
    }
    case 4:
      return -11.0 / 8.0 * s * bh;
    default:
      raise(ErrorKind::ConfigInvalid, "time weight index must be 1..4");
  }
}

double WeightSet::log_rho_i_star(int i, double t) const {
  return log_rho_i(i, t < 0.5 * p_.T ? p_.T - t : t);
}

double WeightSet::log_rho_tilde(int i, double t) const {
  const double T = p_.T;
  if (t >= T) return -INFINITY;
  if (t <= 0.5 * T) return 0.0;
  const double s = p_.s, q0 = 0.25 * T * T, tau = t - 0.5 * T;
  const double lq = std::log1p(-tau * tau / q0);  // log(q/q0)
  const double dbh = (e_top_ - e_low_) * inv_denom_excess(t);
  switch (i) {
    case 1:
      return -2.5 * s * dbh - 1.5 * p_.N * lq;
    case 2:
      return -1.5 * s * dbh;
    case 3:
      return -s * beta_star_excess(t) - 1.5 * s * dbh - 2.5 * p_.N * lq;
    case 4:
      return -11.0 / 8.0 * s * dbh;
    default:
      raise(ErrorKind::ConfigInvalid, "time weight index must be 1..4");
  }
}

double WeightSet::rho_tilde(int i, double t) const { return std::exp(log_rho_tilde(i, t)); }

double WeightSet::rho_tilde_star(int i, double t) const {
  return std::exp(log_rho_tilde(i, t < 0.5 * p_.T ? p_.T - t : t));
}

double WeightSet::log_rho4_quotient(double t) const {
  if (t <= 0.5 * p_.T || t >= p_.T) return -INFINITY;
  double d = std::abs(beta_hat_dot(t));
  if (d == 0.0) return -INFINITY;
  return std::log(11.0 / 8.0 * p_.s * d) - p_.s * beta_hat(t) / 8.0;
}

double fit_envelope_constant(const WeightSet& w, int samples) {
  const double T = w.params().T;
  double best = -INFINITY;
  for (int k = 1; k < samples; ++k) {
    double t = T * k / samples;
    double q = w.log_rho4_quotient(t);
    if (q == -INFINITY) continue;
    best = std::max(best, q + w.params().s * w.beta_hat(t) / 8.0);
  }
  return best;
}

WeightCheck check_weights(const WeightSet& w, int samples, double log_C) {
  const CarlemanParams& p = w.params();
  const double T = p.T;
  WeightCheck c;
  c.ordering = true;
  for (int k = 1; k < samples; ++k) {
    double t = T * k / samples;
    for (int j = 0; j <= 8; ++j) {
      double eta = j / 8.0;
      double b = w.beta(t, eta), bh = w.beta_hat(t), bs = w.beta_star(t);
      double x = w.xi(t, eta), xs = w.xi_star(t), xh = w.xi_hat(t);
      double tol = 1e-13;
      if (b > bh * (1 + tol) || b < bs * (1 - tol) || x > xh * (1 + tol) || x < xs * (1 - tol)) c.ordering = false;
    }
  }
  c.vanish_at_T = true;
  c.continuity = true;
  c.constant_first_half = true;
  for (int i = 1; i <= 4; ++i) {
    if (w.rho_i(i, T) != 0.0 || std::exp(w.log_rho_i_star(i, 0.0)) != 0.0) c.vanish_at_T = false;
    double mid = w.log_rho_i(i, 0.5 * T);
    double right = w.log_rho_i(i, 0.5 * T * (1 + 1e-7));
    if (!(std::abs(right - mid) <= 1e-8 * std::max(1.0, std::abs(mid)))) c.continuity = false;
    for (int k = 1; 2 * k < samples; ++k)
      if (w.log_rho_i(i, T * k / samples) != mid) c.constant_first_half = false;
  }
  c.ratio_bounded = true;
  c.log_ratio13_max = -INFINITY;
  double last = INFINITY;
  for (int k = 1; k < samples; ++k) {
    double t = T * k / samples;
    double r1 = w.log_rho_i(1, t) - w.log_rho_i(4, t);
    double r3 = w.log_rho_i(3, t) - w.log_rho_i(4, t);
    if (!std::isfinite(r1) || !std::isfinite(r3)) c.ratio_bounded = false;
    c.log_ratio13_max = std::max({c.log_ratio13_max, r1, r3});
    last = std::max(r1, r3);
  }
  // the quotients tend to zero (log to -inf) at T
  if (!(last <= c.log_ratio13_max)) c.ratio_bounded = false;
  c.log_envelope_constant = fit_envelope_constant(w, samples);
  c.envelope = true;
  for (int k = 1; k < samples; ++k) {
    double t = T * k / samples;
    double q = w.log_rho4_quotient(t);
    if (q == -INFINITY) continue;
    double env = log_C - p.s * w.beta_hat(t) / 8.0;
    if (q > env + 1e-12 * std::max(1.0, std::abs(env))) c.envelope = false;
  }
  return c;
}

// ---------------------------------------------------------------- log sums

void LogSum::add(double lw, double v) {
  if (!(v > 0.0) || lw == -INFINITY) return;
  if (lw > ref_) {
    sum_ = sum_ * std::exp(ref_ - lw) + v;
    ref_ = lw;
  } else {
    sum_ += v * std::exp(lw - ref_);
  }
}

void LogSum::add(const LogSum& o) { add(o.ref_, o.sum_); }

double LogSum::log() const { return sum_ > 0.0 ? ref_ + std::log(sum_) : -INFINITY; }

namespace {

struct Split {
  LogSum shared, lhs, rhs;  // common part and the unshared excess of each side
};

ProbeReport finish(std::vector<std::pair<ProbeTerm, LogSum>>& parts, const Split& sp) {
  ProbeReport r;
  LogSum L, R;
  for (auto& [term, sum] : parts) {
    term.log_value = sum.log();
    (term.side == 'L' ? L : R).add(sum);
    r.terms.push_back(term);
  }
  r.log_lhs = L.log();
  r.log_rhs = R.log();
  r.log_lhs_excess = sp.lhs.log();
  r.log_rhs_excess = sp.rhs.log();
  if (r.log_lhs == -INFINITY && r.log_rhs == -INFINITY) {
    r.ratio = 0.0;
    r.ratio_minus_one = -1.0;
    return r;
  }
  if (r.log_rhs == -INFINITY) raise(ErrorKind::QuadratureUnderflow, "right-hand side vanished in log space");
  const double a = r.log_lhs_excess, b = r.log_rhs_excess;
  const double hi = std::max(a, b);
  double diff = 0.0;  // |e^a - e^b| as a log
  if (hi == -INFINITY || a == b) {
    r.ratio_minus_one = 0.0;
  } else {
    diff = hi + std::log1p(-std::exp(std::min(a, b) - hi));
    r.ratio_minus_one = (a > b ? 1.0 : -1.0) * std::exp(diff - r.log_rhs);
  }
  r.ratio = sp.shared.zero() ? std::exp(r.log_lhs - r.log_rhs) : 1.0 + r.ratio_minus_one;
  return r;
}

struct VolumePoint {
  Vec2 y;
  double w;
  double eta;
  int tri;
  std::array<double, 3> bary;
};

std::vector<VolumePoint> volume_points(const Mesh& mesh, const EtaField* eta, int order) {
  const TriQuadrature& rule = tri_quadrature(order);
  std::vector<VolumePoint> out;
  for (int t = 0; t < mesh.nt(); ++t) {
    ElementGeom g = element_geom(mesh, t);
    for (size_t q = 0; q < rule.weight.size(); ++q) {
      VolumePoint p;
      p.y = g.point(rule.bary[q]);
      p.w = 2.0 * g.area * rule.weight[q];
      p.eta = eta ? eta->value(mesh, t, rule.bary[q]) : 0.0;
      p.tri = t;
      p.bary = rule.bary[q];
      out.push_back(p);
    }
  }
  return out;
}

struct EdgePoint {
  Vec2 y, tau, n;
  double w;
};

std::vector<EdgePoint> edge_points(const Mesh& mesh) {
  std::vector<double> gx, gw;
  gauss_legendre01(2, gx, gw);
  std::vector<EdgePoint> out;
  for (const auto& e : mesh.boundary_edges) {
    Vec2 a = mesh.vertices[e.a], b = mesh.vertices[e.b];
    double len = (b - a).norm();
    Vec2 tau = (b - a) / len;
    Vec2 n(tau.y(), -tau.x());
    for (size_t q = 0; q < gx.size(); ++q) out.push_back({a + gx[q] * (b - a), tau, n, len * gw[q]});
  }
  return out;
}

// Composite Gauss nodes on (0,T), graded geometrically away from T/2.
void time_nodes(double T, double h0, double grading, int npts, std::vector<double>& t, std::vector<double>& w) {
  std::vector<double> gx, gw;
  gauss_legendre01(npts, gx, gw);
  std::vector<double> cuts{0.0};
  double h = std::min(h0, 0.5 * T);
  double pos = 0.0;
  while (pos < 0.5 * T) {
    pos = std::min(0.5 * T, pos + h);
    if (0.5 * T - pos < 0.25 * h) pos = 0.5 * T;
    cuts.push_back(pos);
    h *= grading;
  }
  t.clear();
  w.clear();
  for (int side = -1; side <= 1; side += 2)
    for (size_t k = 0; k + 1 < cuts.size(); ++k) {
      double a = 0.5 * T + side * cuts[k], b = 0.5 * T + side * cuts[k + 1];
      double lo = std::min(a, b), len = std::abs(b - a);
      for (size_t q = 0; q < gx.size(); ++q) {
        t.push_back(lo + gx[q] * len);
        w.push_back(gw[q] * len);
      }
    }
}

}  // namespace

std::string ProbeReport::csv() const {
  std::ostringstream os;
  double ref = std::max(log_lhs, log_rhs);
  if (ref == -INFINITY) ref = 0.0;
  os << "term,side,value\n";
  for (const auto& t : terms)
    os << t.name << ',' << t.side << ',' << format_double(std::exp(t.log_value - ref)) << '\n';
  os << "total,L," << format_double(std::exp(log_lhs - ref)) << '\n';
  os << "total,R," << format_double(std::exp(log_rhs - ref)) << '\n';
  os << "log_reference,-," << format_double(ref) << '\n';
  os << "ratio,-," << format_double(ratio) << '\n';
  os << "ratio_minus_one,-," << format_double(ratio_minus_one) << '\n';
  return os.str();
}

HeatFn manufactured_heat(double nu) {
  return [nu](double t, const Vec2& y) {
    double a = std::exp(-t) * (1.0 + t);
    double ad = -t * std::exp(-t);
    double s1 = std::sin(2.0 * y.x() + 0.3), c1 = std::cos(2.0 * y.x() + 0.3);
    double s2 = std::sin(1.5 * y.y()), c2 = std::cos(1.5 * y.y());
    double phi = s1 * c2 + 0.5 * y.x() * y.y() + 0.2;
    Vec2 dphi(2.0 * c1 * c2 + 0.5 * y.y(), -1.5 * s1 * s2 + 0.5 * y.x());
    double lap = -(4.0 + 2.25) * s1 * c2;
    HeatSample h;
    h.psi = a * phi;
    h.grad = a * dphi;
    h.psi_t = ad * phi;
    h.f = -h.psi_t - nu * a * lap;
    return h;
  };
}

ProbeReport probe_heat_carleman(const Domain& domain, const Mesh& mesh, const EtaField& eta, const WeightSet& w,
                                double nu, const HeatFn& psi, const ProbeOptions& opt) {
  (void)nu;
  const CarlemanParams& p = w.params();
  const double s = p.s, l = p.lambda, T = p.T;
  const AnnularSector core = domain.eta_core();
  auto vol = volume_points(mesh, &eta, opt.quad_order);
  auto edges = edge_points(mesh);
  std::vector<unsigned char> in_core(vol.size());
  for (size_t q = 0; q < vol.size(); ++q) in_core[q] = core.contains(vol[q].y);

  const double bh_mid = w.beta_hat(0.5 * T);
  const double sigma = T / std::sqrt(std::max(1e-300, 16.0 * p.N * s * bh_mid));
  std::vector<double> tn, tw;
  time_nodes(T, std::min(0.5 * T, 0.5 * sigma), opt.grading, opt.time_points, tn, tw);

  enum { L1, L2, L3, R1, R2, R3, R4, R5 };
  std::vector<std::pair<ProbeTerm, LogSum>> parts = {
      {{"grad_psi", 'L'}, {}},        {{"psi", 'L'}, {}},           {{"boundary_psi", 'L'}, {}},
      {{"local_psi", 'R'}, {}},       {{"local_grad_psi", 'R'}, {}}, {{"source", 'R'}, {}},
      {{"boundary_tangential", 'R'}, {}}, {{"boundary_time", 'R'}, {}}};
  const double ls = std::log(s), ll = std::log(l);
  Split sp;
  for (size_t k = 0; k < tn.size(); ++k) {
    const double t = tn[k];
    const double ldenom = p.N * std::log(t * (T - t));
    const double lwt = std::log(tw[k]);
    for (size_t q = 0; q < vol.size(); ++q) {
      const VolumePoint& P = vol[q];
      HeatSample h = psi(t, P.y);
      double lw = lwt + std::log(P.w) - 2.0 * s * w.beta_excess(t, P.eta);
      double lxi = l * (2 * p.N + P.eta) - ldenom;
      double g2 = h.grad.squaredNorm(), p2 = h.psi * h.psi;
      double a1 = lw + ls + 2 * ll + lxi, a2 = lw + 3 * ls + 4 * ll + 3 * lxi;
      parts[L1].second.add(a1, g2);
      parts[L2].second.add(a2, p2);
      if (in_core[q]) {
        parts[R1].second.add(a2, p2);
        parts[R2].second.add(a1, g2);
        sp.shared.add(a1, g2);
        sp.shared.add(a2, p2);
      } else {
        sp.lhs.add(a1, g2);
        sp.lhs.add(a2, p2);
      }
      parts[R3].second.add(lw, h.f * h.f);
      sp.rhs.add(lw, h.f * h.f);
    }
    const double lbh = -2.0 * s * w.beta_hat_excess(t);
    const double lxs = l * 2 * p.N - ldenom;
    for (const auto& E : edges) {
      HeatSample h = psi(t, E.y);
      double lw = lwt + std::log(E.w) + lbh;
      double dt = h.grad.dot(E.tau);
      parts[L3].second.add(lw + 3 * ls + 3 * ll + 3 * lxs, h.psi * h.psi);
      parts[R4].second.add(lw + ls + ll + lxs, dt * dt);
      parts[R5].second.add(lw - ls - ll - lxs, h.psi_t * h.psi_t);
      sp.lhs.add(lw + 3 * ls + 3 * ll + 3 * lxs, h.psi * h.psi);
      sp.rhs.add(lw + ls + ll + lxs, dt * dt);
      sp.rhs.add(lw - ls - ll - lxs, h.psi_t * h.psi_t);
    }
  }
  return finish(parts, sp);
}

StationaryFn manufactured_stationary() {
  return [](const Vec2& y) {
    Jet3 X = Jet3::var_x(y.x()), Y = Jet3::var_y(y.y());
    Jet3 Psi = sin(1.7 * X + 0.4) * cos(1.3 * Y - 0.2) + 0.4 * X * X * Y + 0.3 * Y;
    StationarySample s;
    s.psi = Vec2(-Psi.dy(), Psi.dx());
    s.grad << -Psi.dxy(), -Psi.dyy(), Psi.dxx(), Psi.dxy();
    s.f = Vec2(Psi.dxxy() + Psi.dyyy(), -(Psi.dxxx() + Psi.dxyy()));
    return s;
  };
}

namespace {

// Boundary loops as ordered vertex lists (fluid on the left).
std::vector<std::vector<int>> boundary_loops(const Mesh& mesh) {
  std::vector<int> next(mesh.nv(), -1);
  for (const auto& e : mesh.boundary_edges) next[e.a] = e.b;
  std::vector<unsigned char> seen(mesh.nv(), 0);
  std::vector<std::vector<int>> loops;
  for (const auto& e : mesh.boundary_edges) {
    if (seen[e.a]) continue;
    std::vector<int> loop;
    int v = e.a;
    while (v >= 0 && !seen[v]) {
      seen[v] = 1;
      loop.push_back(v);
      v = next[v];
    }
    loops.push_back(std::move(loop));
  }
  return loops;
}

// |g|^2_{H^{1/2}} on a closed curve: L sum_k (1 + 2 pi |k| / L) |c_k|^2.
double h_half_norm2(const std::vector<Vec2>& pts, const std::vector<double>& g) {
  const size_t n = pts.size();
  std::vector<double> s(n + 1, 0.0), ds(n);
  for (size_t j = 0; j < n; ++j) {
    double len = (pts[(j + 1) % n] - pts[j]).norm();
    s[j + 1] = s[j] + len;
  }
  const double L = s[n];
  for (size_t j = 0; j < n; ++j) {
    double prev = s[j] - (j == 0 ? s[n] - s[n - 1] : s[j] - s[j - 1]);
    ds[j] = 0.5 * (s[j + 1] - prev);
  }
  KahanSum acc;
  const int K = static_cast<int>(n / 2);
  for (int k = -K; k <= K; ++k) {
    std::complex<double> c(0.0, 0.0);
    for (size_t j = 0; j < n; ++j) c += g[j] * ds[j] * std::polar(1.0, -2.0 * M_PI * k * s[j] / L);
    c /= L;
    acc.add(L * (1.0 + 2.0 * M_PI * std::abs(k) / L) * std::norm(c));
  }
  return acc.value();
}

}  // namespace

ProbeReport probe_stationary_carleman(const Domain& domain, const Mesh& mesh, const EtaField& eta,
                                      const CarlemanParams& p, double friction, const StationaryFn& psi,
                                      const ProbeOptions& opt) {
  p.validate();
  const double s = p.s, l = p.lambda;
  auto vol = volume_points(mesh, &eta, opt.quad_order);
  auto edges = edge_points(mesh);
  enum { L1, L2, L3, R1, R2, R3, R4, R5 };
  std::vector<std::pair<ProbeTerm, LogSum>> parts = {
      {{"grad_psi", 'L'}, {}},      {{"psi", 'L'}, {}},        {{"boundary_tangential_psi", 'L'}, {}},
      {{"local_psi", 'R'}, {}},     {{"source", 'R'}, {}},     {{"normal_data_gradient", 'R'}, {}},
      {{"normal_data_h12", 'R'}, {}}, {{"tangential_data", 'R'}, {}}};
  const double ls = std::log(s), ll = std::log(l);
  Split sp;
  for (const auto& P : vol) {
    StationarySample v = psi(P.y);
    double alpha = std::exp(l * P.eta);
    double lw = std::log(P.w) + 2.0 * s * alpha;
    double la = l * P.eta;
    const double l1 = lw + 2 * ls + 2 * ll + 2 * la, l2 = lw + 4 * ls + 4 * ll + 4 * la;
    parts[L1].second.add(l1, v.grad.squaredNorm());
    parts[L2].second.add(l2, v.psi.squaredNorm());
    sp.lhs.add(l1, v.grad.squaredNorm());
    if (domain.control.contains(P.y)) {
      parts[R1].second.add(l2, v.psi.squaredNorm());
      sp.shared.add(l2, v.psi.squaredNorm());
    } else {
      sp.lhs.add(l2, v.psi.squaredNorm());
    }
    parts[R2].second.add(lw + ls + la, v.f.squaredNorm());
    sp.rhs.add(lw + ls + la, v.f.squaredNorm());
  }
  const double lb = 2.0 * s;  // alpha = 1 on the boundary
  for (const auto& E : edges) {
    StationarySample v = psi(E.y);
    double lw = std::log(E.w) + lb;
    double pt = v.psi.dot(E.tau);
    Mat2 D = 0.5 * (v.grad + v.grad.transpose());
    double b = E.tau.dot(2.0 * D * E.n + friction * v.psi);
    parts[L3].second.add(lw + std::log(friction) + 3 * ls + 2 * ll, pt * pt);
    parts[R5].second.add(lw + 3 * ls + 2 * ll, b * b);
    sp.lhs.add(lw + std::log(friction) + 3 * ls + 2 * ll, pt * pt);
    sp.rhs.add(lw + 3 * ls + 2 * ll, b * b);
  }
  for (const auto& loop : boundary_loops(mesh)) {
    std::vector<Vec2> pts;
    std::vector<double> g;
    for (int v : loop) {
      pts.push_back(mesh.vertices[v]);
      g.push_back(psi(mesh.vertices[v]).psi.dot(mesh.vertex_normals[mesh.boundary_index[v]]));
    }
    const size_t n = pts.size();
    KahanSum grad2;
    for (size_t j = 0; j < n; ++j) {
      double len = (pts[(j + 1) % n] - pts[j]).norm();
      double dg = g[(j + 1) % n] - g[j];
      grad2.add(dg * dg / len);
    }
    const double h12 = h_half_norm2(pts, g);
    parts[R3].second.add(lb + 3 * ls + 2 * ll, grad2.value());
    parts[R4].second.add(lb + 4 * ls + 2 * ll, h12);
    sp.rhs.add(lb + 3 * ls + 2 * ll, grad2.value());
    sp.rhs.add(lb + 4 * ls + 2 * ll, h12);
  }
  return finish(parts, sp);
}

ProbeReport probe_system_carleman(const Domain& domain, const DiscreteOperator& op, const WeightSet& w,
                                  const Trajectory& adj, const SystemSources& src, int quad_order) {
  const CarlemanParams& p = w.params();
  const double s = p.s, l = p.lambda, T = p.T;
  const FeSpace& S = op.space;
  auto vol = volume_points(S.mesh, nullptr, quad_order);
  std::vector<unsigned char> in_ctrl(vol.size());
  for (size_t q = 0; q < vol.size(); ++q) in_ctrl[q] = domain.control.contains(vol[q].y);
  enum { L1, L2, L3, R1, R2, R3, R4 };
  std::vector<std::pair<ProbeTerm, LogSum>> parts = {
      {{"grad_v", 'L'}, {}},  {{"v", 'L'}, {}},  {{"rigid", 'L'}, {}}, {{"local_v", 'R'}, {}},
      {{"F1", 'R'}, {}},      {{"F2", 'R'}, {}}, {{"F3", 'R'}, {}}};
  const double ls = std::log(s), ll = std::log(l);
  const size_t nt = adj.t.size();
  for (size_t n = 0; n < nt; ++n) {
    const double t = adj.t[n];
    if (t <= 0.0 || t >= T) continue;
    double dtw = 0.0;
    if (n > 0) dtw += 0.5 * (adj.t[n] - adj.t[n - 1]);
    if (n + 1 < nt) dtw += 0.5 * (adj.t[n + 1] - adj.t[n]);
    const double ldenom = p.N * std::log(t * (T - t));
    const double lxs = l * 2 * p.N - ldenom, lxh = l * (2 * p.N + 1) - ldenom;
    const double bh = w.beta_hat_excess(t), bs = w.beta_star_excess(t);
    const double l5 = std::log(dtw) - 5.0 * s * bh;
    const double l3 = std::log(dtw) - 3.0 * s * bh;
    const double lloc = std::log(dtw) - 2.0 * s * bs - 3.0 * s * bh + 5 * ls + 6 * ll + 5 * lxh;
    const Vec& z = adj.w[n].z;
    KahanSum gv, vv, loc, f1;
    for (size_t q = 0; q < vol.size(); ++q) {
      PointValue pv = eval_velocity(S, z, vol[q].tri, vol[q].bary);
      gv.add(vol[q].w * pv.grad.squaredNorm());
      double u2 = vol[q].w * pv.u.squaredNorm();
      vv.add(u2);
      if (in_ctrl[q]) loc.add(u2);
      if (src.F1) f1.add(vol[q].w * src.F1(t, vol[q].y).squaredNorm());
    }
    Vec2 lv(z(S.ldof(0)), z(S.ldof(1)));
    double kv = z(S.kdof());
    parts[L1].second.add(l5 + 3 * ls + 4 * ll + 3 * lxs, gv.value());
    parts[L2].second.add(l5 + 4 * ls + 4 * ll + 4 * lxs, vv.value());
    parts[L3].second.add(l5 + 3 * ls + 3 * ll + 3 * lxs, lv.squaredNorm() + kv * kv);
    parts[R1].second.add(lloc, loc.value());
    parts[R2].second.add(l3, f1.value());
    if (src.F2) parts[R3].second.add(l3, src.F2(t).squaredNorm());
    if (src.F3) {
      double f3 = src.F3(t);
      parts[R4].second.add(l3, f3 * f3);
    }
  }
  Split sp;
  for (const auto& [term, sum] : parts) (term.side == 'L' ? sp.lhs : sp.rhs).add(sum);
  return finish(parts, sp);
}

Calibration calibrate_s(const std::function<double(double)>& excess, double s_min, double rel_tol,
                        int max_doublings) {
  Calibration c;
  double r = excess(s_min);
  c.evaluations = 1;
  if (r <= 0.0) {
    c.s = s_min;
    c.ratio_minus_one = r;
    return c;
  }
  double lo = s_min, hi = s_min;
  bool found = false;
  for (int k = 0; k < max_doublings && !found; ++k) {
    lo = hi;
    hi *= 2.0;
    r = excess(hi);
    ++c.evaluations;
    found = r <= 0.0;
  }
  if (!found) {
    c.s = NAN;
    c.ratio_minus_one = r;
    return c;
  }
  double rhi = r;
  while (hi - lo > rel_tol * hi) {
    double mid = 0.5 * (lo + hi);
    double rm = excess(mid);
    ++c.evaluations;
    if (rm <= 0.0) {
      hi = mid;
      rhi = rm;
    } else {
      lo = mid;
    }
  }
  c.s = hi;
  c.ratio_minus_one = rhi;
  return c;
}

}  // namespace fsinc
