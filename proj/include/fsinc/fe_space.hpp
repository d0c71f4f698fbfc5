#pragma once

#include "fsinc/mesh.hpp"

#include <functional>

namespace fsinc {

// MINI element layout of the monolithic unknown Z:
//   [2v + c]            P1 vertex velocity, component c
//   [2nv + 2t + c]      cubic bubble of triangle t
//   [nZ-3], [nZ-2]      rigid linear velocity l
//   [nZ-1]              rigid angular velocity k
// Pressure is P1 on the vertices.
struct FeSpace {
  Mesh mesh;
  int nv = 0, nt = 0, nZ = 0, np = 0;

  explicit FeSpace(Mesh m);
  FeSpace() = default;

  int vdof(int v, int c) const { return 2 * v + c; }
  int bdof(int t, int c) const { return 2 * nv + 2 * t + c; }
  int ldof(int c) const { return nZ - 3 + c; }
  int kdof() const { return nZ - 1; }
  int nfluid() const { return 2 * nv + 2 * nt; }
  // the 8 velocity dofs of triangle t: (v0x, v0y, v1x, v1y, v2x, v2y, bx, by)
  std::array<int, 8> element_dofs(int t) const;
};

struct ElementGeom {
  std::array<Vec2, 3> x;
  std::array<Vec2, 3> grad;  // gradients of the barycentric coordinates
  double area = 0.0;

  Vec2 point(const std::array<double, 3>& b) const { return b[0] * x[0] + b[1] * x[1] + b[2] * x[2]; }
};

ElementGeom element_geom(const Mesh& mesh, int t);

// phi[0..2] = barycentric hats, phi[3] = 27 l0 l1 l2
void mini_basis(const ElementGeom& g, const std::array<double, 3>& b, double phi[4], Vec2 dphi[4]);

struct PointValue {
  Vec2 u = Vec2::Zero();
  Mat2 grad = Mat2::Zero();  // grad(i,j) = du_i/dx_j
};

PointValue eval_velocity(const FeSpace& S, const Vec& z, int t, const std::array<double, 3>& b);
double eval_pressure(const FeSpace& S, const Vec& p, int t, const std::array<double, 3>& b);
Vec2 grad_pressure(const FeSpace& S, const Vec& p, int t);

using VelocityFn = std::function<Vec2(const Vec2&)>;

// Vertex interpolation (bubbles zero) of a fluid field plus the rigid unknowns.
Vec interpolate(const FeSpace& S, const VelocityFn& u, const Vec2& l, double k);
Vec interpolate_pressure(const FeSpace& S, const std::function<double(const Vec2&)>& p);

// Load vector  int_F f . v  for every velocity basis function (rigid slots zero).
Vec fluid_load(const FeSpace& S, const VelocityFn& f, int order = 4);

}  // namespace fsinc
