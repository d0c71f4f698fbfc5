#pragma once

#include "fsinc/common.hpp"

namespace fsinc {

Mat2 rotation_matrix(double theta);

struct RigidState {
  Vec2 h = Vec2::Zero();
  double theta = 0.0;
  Vec2 l = Vec2::Zero();  // linear velocity, body-aligned frame
  double omega = 0.0;

  bool finite() const;
  Vec2 h_dot() const { return rotation_matrix(theta) * l; }
};

struct PhysicalParams {
  double nu = 0.1;
  double m = 1.0;
  double J = 0.02;
  double beta_Omega = 1.0;
  double beta_S = 1.0;

  // Throws ConfigInvalid on violated positivity; beta_S must be > 0.
  void validate() const;
};

// Closed curve: a disk (a == b) or an axis-aligned ellipse centred at the origin.
struct Shape {
  enum class Kind { Disk, Ellipse };
  Kind kind = Kind::Disk;
  double a = 1.0;
  double b = 1.0;

  static Shape disk(double r) { return {Kind::Disk, r, r}; }
  static Shape ellipse(double a, double b) { return {Kind::Ellipse, a, b}; }

  Vec2 point(double t) const { return Vec2(a * std::cos(t), b * std::sin(t)); }
  Vec2 normal(double t) const;  // outward unit normal of the enclosed region
  bool contains(const Vec2& x) const;
  double max_radius() const { return std::max(a, b); }
  double min_radius() const { return std::min(a, b); }
};

// Annular sector {r0 < |x| < r1, |arg x - center| < arc/2}.
struct AnnularSector {
  double r0 = 0.4;
  double r1 = 0.9;
  double arc = 2.0 * M_PI / 3.0;
  double center = 0.0;

  bool contains(const Vec2& x) const;
  bool contains_closed(const Vec2& x, double tol = 1e-12) const;
  std::vector<Vec2> boundary_polyline(int n) const;
  AnnularSector shrunk(double factor) const;
};

struct Polyline {
  std::vector<Vec2> points;   // closed; last point connects to the first
  std::vector<Vec2> normals;  // analytic outward normals where available
};

Polyline sample_shape(const Shape& s, int n);

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b);
// Minimal distance between two closed polylines (point-to-segment, both ways).
double polyline_distance(const std::vector<Vec2>& A, const std::vector<Vec2>& B);
bool point_in_polygon(const Vec2& p, const std::vector<Vec2>& poly);

struct Domain {
  Shape outer = Shape::disk(1.0);
  Shape body = Shape::disk(0.2);
  AnnularSector control;
  double eta_shrink = 0.5;
  int boundary_samples = 1024;

  // derived by make_domain
  double safety_distance = 0.0;
  double smallness_C = 0.0;

  AnnularSector eta_core() const { return control.shrunk(eta_shrink); }
  bool in_fluid(const Vec2& x) const { return outer.contains(x) && !body.contains(x); }
};

// Validates the invariants and computes d and the smallness constant C.
Domain make_domain(const Shape& outer, const Shape& body, const AnnularSector& control,
                   double eta_shrink, int boundary_samples = 1024);

struct RigidMotion {
  Vec2 h = Vec2::Zero();
  double theta = 0.0;

  Vec2 apply(const Vec2& y) const { return h + rotation_matrix(theta) * y; }
  // (this o other)(y) = this(other(y))
  RigidMotion compose(const RigidMotion& other) const;
};

struct PlacedBody {
  RigidMotion motion;
  Polyline boundary;  // h + R_theta * reference boundary
  bool contains(const Vec2& x, const Shape& reference) const;
};

PlacedBody place_body(const Domain& domain, const Vec2& h, double theta);

enum class Frame { Physical, Reference };

Vec2 structure_velocity(const RigidState& state, const Vec2& x, Frame frame);

struct MarginReport {
  double margin = 0.0;
  bool flag = false;
  double smallness_lhs = 0.0;  // |h| + C |R - I|_F
};

MarginReport collision_margin(const Domain& domain, const Vec2& h, double theta);

}  // namespace fsinc
