#include "fsinc/transform.hpp"

#include <algorithm>

namespace fsinc {

// ---------------------------------------------------------------- path

RigidPath RigidPath::from_states(const std::vector<double>& times, const std::vector<RigidState>& states) {
  if (times.size() != states.size() || times.empty())
    raise(ErrorKind::GridMismatch, "rigid path: times and states differ in length");
  RigidPath p;
  p.t = times;
  for (const auto& s : states) {
    if (!s.finite()) raise(ErrorKind::NonFiniteState, "rigid path contains non-finite entries");
    p.h.push_back(s.h);
    p.theta.push_back(s.theta);
  }
  return p;
}

RigidPath RigidPath::at_rest(double T, int steps) {
  RigidPath p;
  for (int n = 0; n <= steps; ++n) {
    p.t.push_back(T * n / steps);
    p.h.push_back(Vec2::Zero());
    p.theta.push_back(0.0);
  }
  return p;
}

void RigidPath::eval(double time, int interval, Vec2& hpos, double& th, Vec2& hdot, double& om) const {
  if (interval <= 0) {
    hdot = h[0];
    om = theta[0];
    hpos = (time + 1.0) * h[0];
    th = (time + 1.0) * theta[0];
    return;
  }
  double dt = t[interval] - t[interval - 1];
  hdot = (h[interval] - h[interval - 1]) / dt;
  om = (theta[interval] - theta[interval - 1]) / dt;
  double tau = time - t[interval - 1];
  hpos = h[interval - 1] + tau * hdot;
  th = theta[interval - 1] + tau * om;
}

CutoffParams CutoffParams::from_domain(const Domain& d) {
  double C = d.body.max_radius();
  double reach = std::min(d.control.r0, d.outer.min_radius()) - C;
  double D = std::min(d.safety_distance, reach);
  if (!(D > 0)) raise(ErrorKind::MarginViolated, "no room for the extension cutoff");
  CutoffParams c;
  c.r_in = C + D / 16.0;
  c.r_out = c.r_in + D / 2.0;
  return c;
}

// ---------------------------------------------------------------- extension velocity

FlowDerivs extension_velocity(const CutoffParams& cut, const Vec2& h, const Vec2& hdot, double omega,
                              const Vec2& x) {
  FlowDerivs f;
  Vec2 z = x - h;
  double r = z.norm();
  if (r >= cut.r_out) return f;
  if (r <= cut.r_in) {
    f.w = hdot + omega * perp(z);
    f.Dw << 0.0, -omega, omega, 0.0;
    return f;
  }
  Jet3 X = Jet3::var_x(x.x()), Y = Jet3::var_y(x.y());
  Jet3 zx = X - h.x(), zy = Y - h.y();
  Jet3 psi = hdot.y() * zx - hdot.x() * zy + (0.5 * omega) * (zx * zx + zy * zy);
  Jet3 rho = sqrt(zx * zx + zy * zy);
  double band = cut.r_out - cut.r_in;
  double s[4];
  smoothstep5((cut.r_out - r) / band, s);
  Jet3 chi = compose(rho, s[0], -s[1] / band, s[2] / (band * band), -s[3] / (band * band * band));
  Jet3 phi = chi * psi;
  f.w = Vec2(-phi.dy(), phi.dx());
  f.Dw << -phi.dxy(), -phi.dyy(), phi.dxx(), phi.dxy();
  f.D2w[0] << -phi.dxxy(), -phi.dxyy(), -phi.dxyy(), -phi.dyyy();
  f.D2w[1] << phi.dxxx(), phi.dxxy(), phi.dxxy(), phi.dxyy();
  return f;
}

// ---------------------------------------------------------------- flow integration

int flow_substeps(const RigidPath& path, const CutoffParams& cut, int interval, int base) {
  Vec2 h, hdot;
  double th, om;
  const double t0 = interval <= 0 ? -1.0 : path.t[interval - 1];
  const double t1 = interval <= 0 ? 0.0 : path.t[interval];
  path.eval(t0, interval, h, th, hdot, om);
  double lip = 0.0;
  for (int i = 0; i <= 4; ++i) {
    double rho = cut.r_in + (cut.r_out - cut.r_in) * i / 4.0;
    for (int j = 0; j < 32; ++j) {
      double a = 2.0 * M_PI * j / 32;
      Vec2 x = h + rho * Vec2(std::cos(a), std::sin(a));
      lip = std::max(lip, extension_velocity(cut, h, hdot, om, x).Dw.norm());
    }
  }
  const double kappa = 0.01;  // bound on |Dw| times the substep
  int n = static_cast<int>(std::ceil((t1 - t0) * lip / kappa));
  return std::max(base, n);
}

FlowIntegrator::FlowIntegrator(const RigidPath& path, const CutoffParams& cut, std::vector<Vec2> points,
                               int substeps, double det_tol)
    : path_(path), cut_(cut), pts_(std::move(points)), substeps_(std::max(1, substeps)), det_tol_(det_tol) {
  double hmax = 0.0;
  for (const auto& h : path_.h) hmax = std::max(hmax, h.norm());
  double reach = hmax + cut_.r_out + 1e-9;
  st_.resize(pts_.size());
  active_.resize(pts_.size());
  for (size_t q = 0; q < pts_.size(); ++q) {
    st_[q] = {pts_[q], Mat2::Identity(), {Mat2::Zero(), Mat2::Zero()}};
    active_[q] = pts_[q].norm() < reach;
  }
  if (path_.h[0].norm() > 0.0 || path_.theta[0] != 0.0)
    integrate(-1.0, 0.0, 0, flow_substeps(path_, cut_, 0, 4 * substeps_));
  check();
}

void FlowIntegrator::rhs(double t, int interval, const std::vector<State>& s, std::vector<State>& ds) const {
  Vec2 h, hdot;
  double th, om;
  path_.eval(t, interval, h, th, hdot, om);
  for (size_t q = 0; q < s.size(); ++q) {
    if (!active_[q]) continue;
    FlowDerivs f = extension_velocity(cut_, h, hdot, om, s[q].X);
    ds[q].X = f.w;
    ds[q].F = f.Dw * s[q].F;
    for (int k = 0; k < 2; ++k) {
      ds[q].H[k] = s[q].F.transpose() * f.D2w[k] * s[q].F + f.Dw(k, 0) * s[q].H[0] + f.Dw(k, 1) * s[q].H[1];
    }
  }
}

void FlowIntegrator::integrate(double t0, double t1, int interval, int nsub) {
  const double dt = (t1 - t0) / nsub;
  const size_t n = st_.size();
  State zero{Vec2::Zero(), Mat2::Zero(), {Mat2::Zero(), Mat2::Zero()}};
  std::vector<State> k1(n, zero), k2(n, zero), k3(n, zero), k4(n, zero), tmp(n, zero);
  auto axpy = [&](const std::vector<State>& k, double a) {
    for (size_t q = 0; q < n; ++q) {
      if (!active_[q]) continue;
      tmp[q].X = st_[q].X + a * k[q].X;
      tmp[q].F = st_[q].F + a * k[q].F;
      tmp[q].H[0] = st_[q].H[0] + a * k[q].H[0];
      tmp[q].H[1] = st_[q].H[1] + a * k[q].H[1];
    }
  };
  for (int i = 0; i < nsub; ++i) {
    double t = t0 + i * dt;
    rhs(t, interval, st_, k1);
    axpy(k1, 0.5 * dt);
    rhs(t + 0.5 * dt, interval, tmp, k2);
    axpy(k2, 0.5 * dt);
    rhs(t + 0.5 * dt, interval, tmp, k3);
    axpy(k3, dt);
    rhs(t + dt, interval, tmp, k4);
    for (size_t q = 0; q < n; ++q) {
      if (!active_[q]) continue;
      st_[q].X += dt / 6.0 * (k1[q].X + 2.0 * k2[q].X + 2.0 * k3[q].X + k4[q].X);
      st_[q].F += dt / 6.0 * (k1[q].F + 2.0 * k2[q].F + 2.0 * k3[q].F + k4[q].F);
      for (int k = 0; k < 2; ++k)
        st_[q].H[k] += dt / 6.0 * (k1[q].H[k] + 2.0 * k2[q].H[k] + 2.0 * k3[q].H[k] + k4[q].H[k]);
    }
  }
}

void FlowIntegrator::check() {
  for (size_t q = 0; q < st_.size(); ++q) {
    if (!active_[q]) continue;
    const State& s = st_[q];
    if (!s.X.allFinite() || !s.F.allFinite() || !s.H[0].allFinite() || !s.H[1].allFinite())
      raise(ErrorKind::FlowIntegrationDiverged, "non-finite flow state");
    double drift = std::abs(s.F.determinant() - 1.0);
    max_drift_ = std::max(max_drift_, drift);
    if (drift > det_tol_)
      raise(ErrorKind::FlowIntegrationDiverged, "det grad X drifted by " + format_double(drift));
  }
}

void FlowIntegrator::advance() {
  if (node_ >= path_.steps()) raise(ErrorKind::FlowIntegrationDiverged, "advance past the final time node");
  integrate(path_.t[node_], path_.t[node_ + 1], node_ + 1, flow_substeps(path_, cut_, node_ + 1, substeps_));
  ++node_;
  check();
}

MapSample FlowIntegrator::sample(size_t q) const {
  MapSample m;
  const State& s = st_[q];
  m.X = s.X;
  m.F = s.F;
  m.H = s.H;
  if (!active_[q] || path_.steps() == 0) return m;
  int interval = std::max(node_, 1);
  Vec2 h, hdot;
  double th, om;
  path_.eval(path_.t[node_], interval, h, th, hdot, om);
  FlowDerivs f = extension_velocity(cut_, h, hdot, om, s.X);
  m.Xt = f.w;
  m.Ft = f.Dw * s.F;
  return m;
}

// ---------------------------------------------------------------- stored maps

double TransformMaps::max_det_drift() const {
  double d = 0.0;
  for (const auto& row : samples)
    for (const auto& s : row) d = std::max(d, std::abs(s.det() - 1.0));
  return d;
}

Vec2 TransformMaps::inverse(int n, const Vec2& x) const {
  Vec2 p = x;
  auto vel = [&](double t, int interval, const Vec2& z) {
    Vec2 h, hdot;
    double th, om;
    path.eval(t, interval, h, th, hdot, om);
    return extension_velocity(cut, h, hdot, om, z).w;
  };
  auto run = [&](double t0, double t1, int interval, int nsub) {
    double dt = (t1 - t0) / nsub;
    for (int i = 0; i < nsub; ++i) {
      double t = t0 + i * dt;
      Vec2 k1 = vel(t, interval, p);
      Vec2 k2 = vel(t + 0.5 * dt, interval, p + 0.5 * dt * k1);
      Vec2 k3 = vel(t + 0.5 * dt, interval, p + 0.5 * dt * k2);
      Vec2 k4 = vel(t + dt, interval, p + dt * k3);
      p += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  };
  for (int k = n; k >= 1; --k) run(path.t[k], path.t[k - 1], k, flow_substeps(path, cut, k, substeps));
  if (path.h[0].norm() > 0.0 || path.theta[0] != 0.0) run(0.0, -1.0, 0, flow_substeps(path, cut, 0, 4 * substeps));
  return p;
}

MapSample TransformMaps::evaluate(int n, const Vec2& y) const {
  FlowIntegrator fi(path, cut, {y}, substeps, 1e300);
  for (int k = 0; k < n; ++k) fi.advance();
  return fi.sample(0);
}

TransformMaps build_extension_flow(const RigidPath& path, const Domain& domain, const std::vector<Vec2>& points,
                                   int substeps) {
  CutoffParams cut = CutoffParams::from_domain(domain);
  double reach = std::min(domain.control.r0, domain.outer.min_radius());
  for (int n = 0; n <= path.steps(); ++n) {
    double lhs = path.h[n].norm() +
                 domain.smallness_C * (rotation_matrix(path.theta[n]) - Mat2::Identity()).norm();
    if (lhs > 0.5 * domain.safety_distance || path.h[n].norm() + cut.r_out >= reach)
      raise(ErrorKind::MarginViolated, "trajectory leaves the d/2 margin at node " + std::to_string(n));
  }
  TransformMaps maps;
  maps.path = path;
  maps.cut = cut;
  maps.substeps = substeps;
  maps.points = points;
  FlowIntegrator fi(maps.path, cut, points, substeps);
  auto record = [&]() {
    std::vector<MapSample> row(points.size());
    for (size_t q = 0; q < points.size(); ++q) row[q] = fi.sample(q);
    maps.samples.push_back(std::move(row));
  };
  record();
  for (int n = 0; n < path.steps(); ++n) {
    fi.advance();
    record();
  }
  return maps;
}

// ---------------------------------------------------------------- grids

std::vector<Vec2> Grid2D::points() const {
  std::vector<Vec2> p;
  p.reserve(size());
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) p.push_back(point(i, j));
  return p;
}

Vec grid_derivative(const Grid2D& g, const Vec& f, int axis) {
  if (f.size() != g.size()) raise(ErrorKind::GridMismatch, "field size does not match the grid");
  Vec d(f.size());
  const int n = axis == 0 ? g.nx : g.ny;
  const double h = axis == 0 ? g.hx : g.hy;
  if (n < 3) raise(ErrorKind::GridMismatch, "grid needs at least 3 nodes per direction");
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      int k = axis == 0 ? i : j;
      auto at = [&](int kk) { return axis == 0 ? f(g.index(kk, j)) : f(g.index(i, kk)); };
      double v;
      if (k == 0)
        v = (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h);
      else if (k == n - 1)
        v = (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h);
      else
        v = (at(k + 1) - at(k - 1)) / (2.0 * h);
      d(g.index(i, j)) = v;
    }
  }
  return d;
}

Vec grid_laplacian(const Grid2D& g, const Vec& f) {
  return grid_derivative(g, grid_derivative(g, f, 0), 0) + grid_derivative(g, grid_derivative(g, f, 1), 1);
}

// ---------------------------------------------------------------- metric

std::vector<Christoffel> christoffel(const MetricData& metric, ChristoffelMode mode) {
  const double sgn = mode == ChristoffelMode::Standard ? -1.0 : 1.0;
  std::vector<Christoffel> out(metric.g_lo.size());
  for (size_t q = 0; q < out.size(); ++q) {
    const auto& dg = metric.dg_lo[q];
    const Mat2& gu = metric.g_up[q];
    for (int k = 0; k < 2; ++k) {
      Mat2 G = Mat2::Zero();
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          double v = 0.0;
          for (int l = 0; l < 2; ++l) v += gu(k, l) * (dg[j](i, l) + dg[i](j, l) + sgn * dg[l](i, j));
          G(i, j) = 0.5 * v;
        }
      out[q][k] = G;
    }
  }
  return out;
}

MetricData metric_tensors(const std::vector<MapSample>& samples, std::optional<Grid2D> grid, ChristoffelMode mode,
                          double det_tol) {
  if (grid && grid->size() != static_cast<int>(samples.size()))
    raise(ErrorKind::GridMismatch, "map samples do not match the grid");
  MetricData m;
  m.grid = grid;
  m.mode = mode;
  const size_t n = samples.size();
  m.g_lo.resize(n);
  m.g_up.resize(n);
  m.dg_lo.resize(n);
  for (size_t q = 0; q < n; ++q) {
    const MapSample& s = samples[q];
    Mat2 glo = s.F.transpose() * s.F;
    if (!(glo.determinant() > det_tol)) raise(ErrorKind::SingularMetric, "det g below tolerance");
    Mat2 Finv = s.F.inverse();
    m.g_lo[q] = glo;
    m.g_up[q] = Finv * Finv.transpose();
    for (int l = 0; l < 2; ++l) {
      Mat2 d = Mat2::Zero();
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
          for (int k = 0; k < 2; ++k) d(i, j) += s.H[k](i, l) * s.F(k, j) + s.F(k, i) * s.H[k](j, l);
      m.dg_lo[q][l] = d;
    }
  }
  m.gamma = christoffel(m, mode);
  return m;
}

PointCoefficients point_coefficients(const MapSample& s, ChristoffelMode mode) {
  MetricData m = metric_tensors({s}, std::nullopt, mode);
  PointCoefficients c;
  c.g_up = m.g_up[0];
  c.gamma = m.gamma[0];
  Mat2 Finv = s.F.inverse();
  c.Yt = -Finv * s.Xt;
  c.A = Finv * s.Ft;
  return c;
}

// ---------------------------------------------------------------- grid operators

namespace {
const Grid2D& require_grid(const MetricData& metric, const Grid2D& g) {
  if (!metric.grid || !(*metric.grid == g)) raise(ErrorKind::GridMismatch, "field and metric grids differ");
  return g;
}
}  // namespace

GridVector apply_L(const GridVector& u, const MetricData& metric) {
  const Grid2D& g = require_grid(metric, u.grid);
  const int n = g.size();
  GridVector out{g, Vec::Zero(n), Vec::Zero(n)};
  std::array<std::array<Vec, 2>, 2> du;  // du[i][l] = d u_i / d y_l
  for (int i = 0; i < 2; ++i)
    for (int l = 0; l < 2; ++l) du[i][l] = grid_derivative(g, u.comp(i), l);
  for (int i = 0; i < 2; ++i) {
    // sum_j d_j ( g^{jk} d_k u_i )
    for (int j = 0; j < 2; ++j) {
      Vec flux(n);
      for (int q = 0; q < n; ++q) flux(q) = metric.g_up[q](j, 0) * du[i][0](q) + metric.g_up[q](j, 1) * du[i][1](q);
      out.comp(i) += grid_derivative(g, flux, j);
    }
    // 2 sum g^{kl} Gamma^i_{jk} d_l u_j
    for (int q = 0; q < n; ++q) {
      double v = 0.0;
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k)
          for (int l = 0; l < 2; ++l) v += metric.g_up[q](k, l) * metric.gamma[q][i](j, k) * du[j][l](q);
      out.comp(i)(q) += 2.0 * v;
    }
    // sum ( d_k (g^{kl} Gamma^i_{jl}) + sum_m g^{kl} Gamma^m_{jl} Gamma^i_{km} ) u_j
    for (int j = 0; j < 2; ++j) {
      Vec coef = Vec::Zero(n);
      for (int k = 0; k < 2; ++k) {
        Vec a(n);
        for (int q = 0; q < n; ++q) {
          double v = 0.0;
          for (int l = 0; l < 2; ++l) v += metric.g_up[q](k, l) * metric.gamma[q][i](j, l);
          a(q) = v;
        }
        coef += grid_derivative(g, a, k);
      }
      for (int q = 0; q < n; ++q) {
        double v = 0.0;
        for (int k = 0; k < 2; ++k)
          for (int l = 0; l < 2; ++l)
            for (int m = 0; m < 2; ++m)
              v += metric.g_up[q](k, l) * metric.gamma[q][m](j, l) * metric.gamma[q][i](k, m);
        coef(q) += v;
      }
      out.comp(i) += coef.cwiseProduct(u.comp(j));
    }
  }
  return out;
}

GridVector apply_M(const GridVector& u, const std::vector<MapSample>& maps, const MetricData& metric) {
  const Grid2D& g = require_grid(metric, u.grid);
  const int n = g.size();
  if (static_cast<int>(maps.size()) != n) raise(ErrorKind::GridMismatch, "map samples do not match the grid");
  GridVector out{g, Vec::Zero(n), Vec::Zero(n)};
  std::array<std::array<Vec, 2>, 2> du;
  for (int i = 0; i < 2; ++i)
    for (int l = 0; l < 2; ++l) du[i][l] = grid_derivative(g, u.comp(i), l);
  for (int q = 0; q < n; ++q) {
    Mat2 Finv = maps[q].F.inverse();
    Vec2 Yt = -Finv * maps[q].Xt;
    Mat2 A = Finv * maps[q].Ft;
    for (int i = 0; i < 2; ++i) {
      double v = Yt(0) * du[i][0](q) + Yt(1) * du[i][1](q);
      for (int j = 0; j < 2; ++j) {
        double c = A(i, j);
        for (int k = 0; k < 2; ++k) c += metric.gamma[q][i](j, k) * Yt(k);
        v += c * u.comp(j)(q);
      }
      out.comp(i)(q) = v;
    }
  }
  return out;
}

GridVector apply_N(const GridVector& u, const MetricData& metric) {
  const Grid2D& g = require_grid(metric, u.grid);
  const int n = g.size();
  GridVector out{g, Vec::Zero(n), Vec::Zero(n)};
  std::array<std::array<Vec, 2>, 2> du;
  for (int i = 0; i < 2; ++i)
    for (int l = 0; l < 2; ++l) du[i][l] = grid_derivative(g, u.comp(i), l);
  for (int q = 0; q < n; ++q) {
    Vec2 uq(u.u1(q), u.u2(q));
    for (int i = 0; i < 2; ++i) {
      double v = uq(0) * du[i][0](q) + uq(1) * du[i][1](q);
      v += uq.dot(metric.gamma[q][i] * uq);
      out.comp(i)(q) = v;
    }
  }
  return out;
}

GridVector apply_G(const GridScalar& p, const MetricData& metric) {
  const Grid2D& g = require_grid(metric, p.grid);
  const int n = g.size();
  Vec px = grid_derivative(g, p.v, 0), py = grid_derivative(g, p.v, 1);
  GridVector out{g, Vec(n), Vec(n)};
  for (int q = 0; q < n; ++q) {
    Vec2 r = metric.g_up[q] * Vec2(px(q), py(q));
    out.u1(q) = r(0);
    out.u2(q) = r(1);
  }
  return out;
}

std::vector<Vec2> piola_transform(const std::function<Vec2(const Vec2&)>& U, const std::vector<MapSample>& maps) {
  std::vector<Vec2> out;
  out.reserve(maps.size());
  for (const auto& s : maps) {
    Mat2 cof;  // cofactor matrix of F
    cof << s.F(1, 1), -s.F(1, 0), -s.F(0, 1), s.F(0, 0);
    out.push_back(cof.transpose() * U(s.X));
  }
  return out;
}

Vec2 inverse_piola(const Vec2& u, const MapSample& s) { return s.F * u / s.F.determinant(); }

}  // namespace fsinc
