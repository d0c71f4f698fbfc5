#include "fsinc/fe_space.hpp"

namespace fsinc {

FeSpace::FeSpace(Mesh m) : mesh(std::move(m)) {
  nv = mesh.nv();
  nt = mesh.nt();
  np = nv;
  nZ = 2 * nv + 2 * nt + 3;
}

std::array<int, 8> FeSpace::element_dofs(int t) const {
  const auto& T = mesh.triangles[t];
  return {vdof(T[0], 0), vdof(T[0], 1), vdof(T[1], 0), vdof(T[1], 1),
          vdof(T[2], 0), vdof(T[2], 1), bdof(t, 0),    bdof(t, 1)};
}

ElementGeom element_geom(const Mesh& mesh, int t) {
  ElementGeom g;
  const auto& T = mesh.triangles[t];
  for (int k = 0; k < 3; ++k) g.x[k] = mesh.vertices[T[k]];
  double det = (g.x[1] - g.x[0]).x() * (g.x[2] - g.x[0]).y() - (g.x[1] - g.x[0]).y() * (g.x[2] - g.x[0]).x();
  g.area = 0.5 * det;
  for (int k = 0; k < 3; ++k) {
    const Vec2& a = g.x[(k + 1) % 3];
    const Vec2& b = g.x[(k + 2) % 3];
    g.grad[k] = Vec2(a.y() - b.y(), b.x() - a.x()) / det;
  }
  return g;
}

void mini_basis(const ElementGeom& g, const std::array<double, 3>& b, double phi[4], Vec2 dphi[4]) {
  for (int k = 0; k < 3; ++k) {
    phi[k] = b[k];
    dphi[k] = g.grad[k];
  }
  phi[3] = 27.0 * b[0] * b[1] * b[2];
  dphi[3] = 27.0 * (b[1] * b[2] * g.grad[0] + b[0] * b[2] * g.grad[1] + b[0] * b[1] * g.grad[2]);
}

PointValue eval_velocity(const FeSpace& S, const Vec& z, int t, const std::array<double, 3>& b) {
  ElementGeom g = element_geom(S.mesh, t);
  double phi[4];
  Vec2 dphi[4];
  mini_basis(g, b, phi, dphi);
  auto dofs = S.element_dofs(t);
  PointValue pv;
  for (int a = 0; a < 4; ++a) {
    Vec2 c(z(dofs[2 * a]), z(dofs[2 * a + 1]));
    pv.u += phi[a] * c;
    pv.grad += c * dphi[a].transpose();
  }
  return pv;
}

double eval_pressure(const FeSpace& S, const Vec& p, int t, const std::array<double, 3>& b) {
  const auto& T = S.mesh.triangles[t];
  return b[0] * p(T[0]) + b[1] * p(T[1]) + b[2] * p(T[2]);
}

Vec2 grad_pressure(const FeSpace& S, const Vec& p, int t) {
  ElementGeom g = element_geom(S.mesh, t);
  const auto& T = S.mesh.triangles[t];
  return p(T[0]) * g.grad[0] + p(T[1]) * g.grad[1] + p(T[2]) * g.grad[2];
}

Vec interpolate(const FeSpace& S, const VelocityFn& u, const Vec2& l, double k) {
  Vec z = Vec::Zero(S.nZ);
  for (int v = 0; v < S.nv; ++v) {
    Vec2 val = u(S.mesh.vertices[v]);
    z(S.vdof(v, 0)) = val.x();
    z(S.vdof(v, 1)) = val.y();
  }
  z(S.ldof(0)) = l.x();
  z(S.ldof(1)) = l.y();
  z(S.kdof()) = k;
  return z;
}

Vec interpolate_pressure(const FeSpace& S, const std::function<double(const Vec2&)>& p) {
  Vec out(S.np);
  for (int v = 0; v < S.nv; ++v) out(v) = p(S.mesh.vertices[v]);
  return out;
}

Vec fluid_load(const FeSpace& S, const VelocityFn& f, int order) {
  Vec out = Vec::Zero(S.nZ);
  const TriQuadrature& Q = tri_quadrature(order);
  double phi[4];
  Vec2 dphi[4];
  for (int t = 0; t < S.nt; ++t) {
    ElementGeom g = element_geom(S.mesh, t);
    auto dofs = S.element_dofs(t);
    for (size_t q = 0; q < Q.weight.size(); ++q) {
      mini_basis(g, Q.bary[q], phi, dphi);
      Vec2 fv = f(g.point(Q.bary[q]));
      double w = 2.0 * g.area * Q.weight[q];
      for (int a = 0; a < 4; ++a) {
        out(dofs[2 * a]) += w * phi[a] * fv.x();
        out(dofs[2 * a + 1]) += w * phi[a] * fv.y();
      }
    }
  }
  return out;
}

}  // namespace fsinc
