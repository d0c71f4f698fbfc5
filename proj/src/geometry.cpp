#include "fsinc/geometry.hpp"

#include <algorithm>
#include <limits>

namespace fsinc {

Mat2 rotation_matrix(double theta) {
  double c = std::cos(theta), s = std::sin(theta);
  Mat2 R;
  R << c, -s, s, c;
  return R;
}

bool RigidState::finite() const {
  return h.allFinite() && std::isfinite(theta) && l.allFinite() && std::isfinite(omega);
}

void PhysicalParams::validate() const {
  if (!(nu > 0.0)) raise(ErrorKind::ConfigInvalid, "physics.nu must be > 0");
  if (!(m > 0.0)) raise(ErrorKind::ConfigInvalid, "physics.m must be > 0");
  if (!(J > 0.0)) raise(ErrorKind::ConfigInvalid, "physics.J must be > 0");
  if (!(beta_Omega >= 0.0)) raise(ErrorKind::ConfigInvalid, "physics.beta_Omega must be >= 0");
  if (!(beta_S > 0.0)) raise(ErrorKind::ConfigInvalid, "physics.beta_S must be > 0");
}

Vec2 Shape::normal(double t) const {
  Vec2 n(b * std::cos(t), a * std::sin(t));
  return n.normalized();
}

bool Shape::contains(const Vec2& x) const {
  double q = (x.x() / a) * (x.x() / a) + (x.y() / b) * (x.y() / b);
  return q < 1.0;
}

namespace {
double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a < 0) a += 2.0 * M_PI;
  return a - M_PI;
}
}  // namespace

bool AnnularSector::contains(const Vec2& x) const {
  double r = x.norm();
  if (!(r > r0 && r < r1)) return false;
  double d = wrap_angle(std::atan2(x.y(), x.x()) - center);
  return std::abs(d) < 0.5 * arc;
}

bool AnnularSector::contains_closed(const Vec2& x, double tol) const {
  double r = x.norm();
  if (r < r0 - tol || r > r1 + tol) return false;
  if (arc >= 2.0 * M_PI) return true;
  double d = wrap_angle(std::atan2(x.y(), x.x()) - center);
  return std::abs(d) <= 0.5 * arc + tol / std::max(r, 1e-12);
}

std::vector<Vec2> AnnularSector::boundary_polyline(int n) const {
  std::vector<Vec2> pts;
  double a0 = center - 0.5 * arc, a1 = center + 0.5 * arc;
  int na = std::max(8, n / 2);
  int nr = std::max(4, n / 8);
  auto at = [](double r, double a) { return Vec2(r * std::cos(a), r * std::sin(a)); };
  for (int i = 0; i < na; ++i) pts.push_back(at(r1, a0 + (a1 - a0) * i / na));
  for (int i = 0; i < nr; ++i) pts.push_back(at(r1 + (r0 - r1) * i / nr, a1));
  for (int i = 0; i < na; ++i) pts.push_back(at(r0, a1 + (a0 - a1) * i / na));
  for (int i = 0; i < nr; ++i) pts.push_back(at(r0 + (r1 - r0) * i / nr, a0));
  return pts;
}

AnnularSector AnnularSector::shrunk(double factor) const {
  AnnularSector s = *this;
  double rc = 0.5 * (r0 + r1), hw = 0.5 * (r1 - r0) * factor;
  s.r0 = rc - hw;
  s.r1 = rc + hw;
  s.arc = arc * factor;
  return s;
}

Polyline sample_shape(const Shape& s, int n) {
  Polyline p;
  p.points.reserve(n);
  p.normals.reserve(n);
  for (int i = 0; i < n; ++i) {
    double t = 2.0 * M_PI * i / n;
    p.points.push_back(s.point(t));
    p.normals.push_back(s.normal(t));
  }
  return p;
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  Vec2 ab = b - a;
  double L2 = ab.squaredNorm();
  double t = L2 > 0 ? std::clamp((p - a).dot(ab) / L2, 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).norm();
}

double polyline_distance(const std::vector<Vec2>& A, const std::vector<Vec2>& B) {
  double best = std::numeric_limits<double>::infinity();
  auto one_way = [&best](const std::vector<Vec2>& P, const std::vector<Vec2>& Q) {
    const size_t nq = Q.size();
    std::vector<Vec2> mid(nq);
    std::vector<double> half(nq);
    for (size_t j = 0; j < nq; ++j) {
      mid[j] = 0.5 * (Q[j] + Q[(j + 1) % nq]);
      half[j] = 0.5 * (Q[(j + 1) % nq] - Q[j]).norm();
    }
    for (const auto& p : P)
      for (size_t j = 0; j < nq; ++j) {
        double lower = (p - mid[j]).norm() - half[j];
        if (lower >= best) continue;
        best = std::min(best, point_segment_distance(p, Q[j], Q[(j + 1) % nq]));
      }
  };
  one_way(A, B);
  one_way(B, A);
  return best;
}

bool point_in_polygon(const Vec2& p, const std::vector<Vec2>& poly) {
  bool inside = false;
  const size_t n = poly.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if (((a.y() > p.y()) != (b.y() > p.y())) &&
        (p.x() < (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x()))
      inside = !inside;
  }
  return inside;
}

Domain make_domain(const Shape& outer, const Shape& body, const AnnularSector& control, double eta_shrink,
                   int boundary_samples) {
  if (!(outer.a > 0 && outer.b > 0 && body.a > 0 && body.b > 0))
    raise(ErrorKind::ConfigInvalid, "shape radii must be positive");
  if (body.max_radius() >= outer.min_radius())
    raise(ErrorKind::ConfigInvalid, "body does not fit strictly inside the outer boundary");
  if (!(control.r0 > body.max_radius() && control.r1 < outer.min_radius() && control.r0 < control.r1))
    raise(ErrorKind::ConfigInvalid, "control region must lie strictly inside the fluid region");
  if (!(control.arc > 0.0 && control.arc <= 2.0 * M_PI))
    raise(ErrorKind::ConfigInvalid, "control arc must lie in (0, 2pi]");
  if (!(eta_shrink > 0.0 && eta_shrink < 1.0))
    raise(ErrorKind::ConfigInvalid, "eta_core.shrink_factor must lie in (0,1)");

  Domain d;
  d.outer = outer;
  d.body = body;
  d.control = control;
  d.eta_shrink = eta_shrink;
  d.boundary_samples = boundary_samples;

  Polyline ob = sample_shape(outer, boundary_samples);
  Polyline bb = sample_shape(body, boundary_samples);
  double dist_outer = polyline_distance(bb.points, ob.points);
  double dist_ctrl = polyline_distance(bb.points, control.boundary_polyline(boundary_samples));
  d.safety_distance = std::min(dist_outer, dist_ctrl);

  double C = 0.0;
  const int nC = 10000;
  for (int i = 0; i < nC; ++i) C = std::max(C, body.point(2.0 * M_PI * i / nC).norm());
  d.smallness_C = C;
  return d;
}

RigidMotion RigidMotion::compose(const RigidMotion& other) const {
  RigidMotion r;
  r.h = h + rotation_matrix(theta) * other.h;
  r.theta = theta + other.theta;
  return r;
}

bool PlacedBody::contains(const Vec2& x, const Shape& reference) const {
  Vec2 y = rotation_matrix(-motion.theta) * (x - motion.h);
  return reference.contains(y);
}

PlacedBody place_body(const Domain& domain, const Vec2& h, double theta) {
  PlacedBody pb;
  pb.motion = {h, theta};
  Polyline ref = sample_shape(domain.body, domain.boundary_samples);
  Mat2 R = rotation_matrix(theta);
  pb.boundary.points.reserve(ref.points.size());
  for (size_t i = 0; i < ref.points.size(); ++i) {
    pb.boundary.points.push_back(h + R * ref.points[i]);
    pb.boundary.normals.push_back(R * ref.normals[i]);
  }
  for (const auto& p : pb.boundary.points)
    if (!domain.outer.contains(p))
      raise(ErrorKind::PlacementOutsideDomain, "placed body crosses the outer boundary");
  return pb;
}

Vec2 structure_velocity(const RigidState& state, const Vec2& x, Frame frame) {
  if (frame == Frame::Reference) return state.l + state.omega * perp(x);
  return state.h_dot() + state.omega * perp(x - state.h);
}

MarginReport collision_margin(const Domain& domain, const Vec2& h, double theta) {
  Polyline ref = sample_shape(domain.body, domain.boundary_samples);
  Mat2 R = rotation_matrix(theta);
  std::vector<Vec2> placed;
  placed.reserve(ref.points.size());
  for (const auto& p : ref.points) placed.push_back(h + R * p);
  Polyline ob = sample_shape(domain.outer, domain.boundary_samples);
  MarginReport rep;
  rep.margin = std::min(polyline_distance(placed, ob.points),
                        polyline_distance(placed, domain.control.boundary_polyline(domain.boundary_samples)));
  for (const auto& p : placed)
    if (!domain.outer.contains(p) || domain.control.contains(p)) rep.margin = 0.0;
  rep.smallness_lhs = h.norm() + domain.smallness_C * (R - Mat2::Identity()).norm();
  double d = domain.safety_distance;
  rep.flag = rep.margin >= 0.5 * d && rep.smallness_lhs <= 0.5 * d;
  return rep;
}

}  // namespace fsinc
