#pragma once

#include "fsinc/geometry.hpp"

#include <functional>
#include <optional>

namespace fsinc {

// Piecewise-linear rigid path on the time nodes t_0 = 0 < ... < t_N.  Times in
// [-1, 0) belong to a ramp from the reference placement to (h(0), theta(0)),
// so that X(0,.) already carries the reference body onto the initial placement.
struct RigidPath {
  std::vector<double> t;
  std::vector<Vec2> h;
  std::vector<double> theta;

  static RigidPath from_states(const std::vector<double>& times, const std::vector<RigidState>& states);
  static RigidPath at_rest(double T, int steps);
  int steps() const { return static_cast<int>(t.size()) - 1; }
  // position and velocity on the interval containing t (left-closed intervals
  // take the velocity of the interval ending at t_n when t == t_n)
  void eval(double time, int interval, Vec2& hpos, double& th, Vec2& hdot, double& om) const;
};

struct CutoffParams {
  double r_in = 0.0;   // chi == 1 for |x - h| <= r_in
  double r_out = 0.0;  // chi == 0 for |x - h| >= r_out

  static CutoffParams from_domain(const Domain& d);
};

struct FlowDerivs {
  Vec2 w = Vec2::Zero();
  Mat2 Dw = Mat2::Zero();              // Dw(m,a) = d w_m / d x_a
  std::array<Mat2, 2> D2w{Mat2::Zero(), Mat2::Zero()};  // D2w[m](a,b)
};

// Divergence-free extension w = curl(chi * psi_rigid) of the rigid velocity.
FlowDerivs extension_velocity(const CutoffParams& cut, const Vec2& h, const Vec2& hdot, double omega,
                              const Vec2& x);

// RK4 substeps on an interval (0 = pseudo ramp): at least `base`, refined so
// that the substep times the sampled Lipschitz bound of w stays below 0.01.
int flow_substeps(const RigidPath& path, const CutoffParams& cut, int interval, int base);

struct MapSample {
  Vec2 X = Vec2::Zero();
  Mat2 F = Mat2::Identity();                          // dX_k/dy_j
  std::array<Mat2, 2> H{Mat2::Zero(), Mat2::Zero()};  // H[k](i,j) = d2 X_k / dy_i dy_j
  Vec2 Xt = Vec2::Zero();                             // dX/dt
  Mat2 Ft = Mat2::Zero();                             // d2 X_k / dt dy_j

  double det() const { return F.determinant(); }
};

// Streams the flow map forward through the time nodes for a fixed set of points.
class FlowIntegrator {
 public:
  FlowIntegrator(const RigidPath& path, const CutoffParams& cut, std::vector<Vec2> points, int substeps = 4,
                 double det_tol = 1e-6);

  int node() const { return node_; }
  // integrate (t_{node}, t_{node+1}]
  void advance();
  MapSample sample(size_t q) const;
  size_t size() const { return pts_.size(); }
  double max_det_drift() const { return max_drift_; }

 private:
  struct State {
    Vec2 X;
    Mat2 F;
    std::array<Mat2, 2> H;
  };
  void integrate(double t0, double t1, int interval, int nsub);
  void rhs(double t, int interval, const std::vector<State>& s, std::vector<State>& ds) const;
  void check();

  const RigidPath& path_;
  CutoffParams cut_;
  std::vector<Vec2> pts_;
  std::vector<State> st_;
  std::vector<unsigned char> active_;
  int substeps_;
  double det_tol_;
  int node_ = 0;
  double max_drift_ = 0.0;
};

struct TransformMaps {
  RigidPath path;
  CutoffParams cut;
  int substeps = 4;
  std::vector<Vec2> points;
  std::vector<std::vector<MapSample>> samples;  // [time node][point]

  double max_det_drift() const;
  // Y(t_n, x) by backward integration of the flow
  Vec2 inverse(int n, const Vec2& x) const;
  // X and derivatives at an arbitrary reference point
  MapSample evaluate(int n, const Vec2& y) const;
};

TransformMaps build_extension_flow(const RigidPath& path, const Domain& domain, const std::vector<Vec2>& points,
                                   int substeps = 4);

// Cartesian sample grid for the finite-difference operator evaluation.
struct Grid2D {
  int nx = 0, ny = 0;
  double x0 = 0.0, y0 = 0.0, hx = 1.0, hy = 1.0;

  int size() const { return nx * ny; }
  int index(int i, int j) const { return j * nx + i; }
  Vec2 point(int i, int j) const { return Vec2(x0 + i * hx, y0 + j * hy); }
  std::vector<Vec2> points() const;
  bool operator==(const Grid2D& o) const {
    return nx == o.nx && ny == o.ny && x0 == o.x0 && y0 == o.y0 && hx == o.hx && hy == o.hy;
  }
};

struct GridScalar {
  Grid2D grid;
  Vec v;
};

struct GridVector {
  Grid2D grid;
  Vec u1, u2;
  const Vec& comp(int i) const { return i == 0 ? u1 : u2; }
  Vec& comp(int i) { return i == 0 ? u1 : u2; }
};

// first derivative along axis 0 (x) or 1 (y): central inside, second-order one-sided at the edges
Vec grid_derivative(const Grid2D& g, const Vec& f, int axis);
Vec grid_laplacian(const Grid2D& g, const Vec& f);  // sum_j D_j D_j f

using Christoffel = std::array<Mat2, 2>;  // Gamma[k](i,j)

enum class ChristoffelMode { Standard, AsWritten };

struct MetricData {
  std::optional<Grid2D> grid;
  std::vector<Mat2> g_lo;
  std::vector<Mat2> g_up;
  std::vector<std::array<Mat2, 2>> dg_lo;  // dg_lo[l](i,j) = d g_ij / d y_l
  std::vector<Christoffel> gamma;
  ChristoffelMode mode = ChristoffelMode::Standard;
};

MetricData metric_tensors(const std::vector<MapSample>& samples, std::optional<Grid2D> grid = std::nullopt,
                          ChristoffelMode mode = ChristoffelMode::Standard, double det_tol = 1e-12);
std::vector<Christoffel> christoffel(const MetricData& metric, ChristoffelMode mode);

// Pointwise coefficients of the transformed operators.
struct PointCoefficients {
  Mat2 g_up;
  Christoffel gamma;
  Vec2 Yt;  // dY/dt evaluated at x = X(t,y)
  Mat2 A;   // A(i,j) = sum_k dY_i/dx_k d2X_k/dt dy_j
};

PointCoefficients point_coefficients(const MapSample& s, ChristoffelMode mode = ChristoffelMode::Standard);

GridVector apply_L(const GridVector& u, const MetricData& metric);
GridVector apply_M(const GridVector& u, const std::vector<MapSample>& maps, const MetricData& metric);
GridVector apply_N(const GridVector& u, const MetricData& metric);
GridVector apply_G(const GridScalar& p, const MetricData& metric);

// u(y) = Cof(grad X(y))^T U(X(y))
std::vector<Vec2> piola_transform(const std::function<Vec2(const Vec2&)>& U, const std::vector<MapSample>& maps);
// U(x) = grad X(y) u(y) / det grad X(y) with y = Y(x); here given the samples at y
Vec2 inverse_piola(const Vec2& u, const MapSample& s);

}  // namespace fsinc
