#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsinc {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Vec = Eigen::VectorXd;

enum class ErrorKind {
  PlacementOutsideDomain,
  MarginViolated,
  FlowIntegrationDiverged,
  SingularMetric,
  GridMismatch,
  MeshTooCoarse,
  AssemblyFailed,
  LinearSolveFailed,
  NonFiniteState,
  FixedPointDiverged,
  EtaConstructionFailed,
  OverflowGuard,
  QuadratureUnderflow,
  CGStalled,
  PenaltyTooSmall,
  ConfigInvalid,
  IoError,
};

const char* to_string(ErrorKind k);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);
  ErrorKind kind() const { return kind_; }
  const std::string& message() const { return message_; }  // without the kind prefix

 private:
  ErrorKind kind_;
  std::string message_;
};

[[noreturn]] void raise(ErrorKind kind, const std::string& what);

// Compensated (Neumaier) summation.
class KahanSum {
 public:
  void add(double x) {
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      c_ += (sum_ - t) + x;
    else
      c_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + c_; }

 private:
  double sum_ = 0.0;
  double c_ = 0.0;
};

// Portable deterministic generator: splitmix-seeded xoshiro256**.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  std::uint64_t next();
  double uniform();  // [0,1)
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  double normal();

 private:
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline Vec2 perp(const Vec2& a) { return Vec2(-a.y(), a.x()); }

// Truncated bivariate Taylor polynomial of order 3 (forward-mode jets).
// Coefficients are Taylor coefficients of x^i y^j in the order
// 1, x, y, x2, xy, y2, x3, x2y, xy2, y3.
struct Jet3 {
  std::array<double, 10> c{};

  static Jet3 constant(double v);
  static Jet3 var_x(double x0);
  static Jet3 var_y(double y0);

  double value() const { return c[0]; }
  double dx() const { return c[1]; }
  double dy() const { return c[2]; }
  double dxx() const { return 2.0 * c[3]; }
  double dxy() const { return c[4]; }
  double dyy() const { return 2.0 * c[5]; }
  double dxxx() const { return 6.0 * c[6]; }
  double dxxy() const { return 2.0 * c[7]; }
  double dxyy() const { return 2.0 * c[8]; }
  double dyyy() const { return 6.0 * c[9]; }

  Jet3& operator+=(const Jet3& o);
  Jet3& operator-=(const Jet3& o);
  Jet3& operator*=(double s);
};

Jet3 operator+(Jet3 a, const Jet3& b);
Jet3 operator-(Jet3 a, const Jet3& b);
Jet3 operator-(Jet3 a);
Jet3 operator*(const Jet3& a, const Jet3& b);
Jet3 operator*(Jet3 a, double s);
Jet3 operator*(double s, Jet3 a);
Jet3 operator+(Jet3 a, double s);
Jet3 operator+(double s, Jet3 a);
Jet3 operator-(Jet3 a, double s);
Jet3 operator-(double s, const Jet3& a);

// f(a) given f and its first three derivatives at a.value().
Jet3 compose(const Jet3& a, double f0, double f1, double f2, double f3);
Jet3 sqrt(const Jet3& a);
Jet3 exp(const Jet3& a);
Jet3 sin(const Jet3& a);
Jet3 cos(const Jet3& a);
Jet3 inverse(const Jet3& a);
Jet3 atan2(const Jet3& y, const Jet3& x);

// Gauss-Legendre nodes/weights on [0,1].
void gauss_legendre01(int n, std::vector<double>& x, std::vector<double>& w);

struct TriQuadrature {
  std::vector<std::array<double, 3>> bary;  // barycentric coordinates
  std::vector<double> weight;               // sums to 1/2 (reference area)
};

// Collapsed-coordinate product rule, exact for total degree <= 2n-2.
const TriQuadrature& tri_quadrature(int n);

// Quintic smoothstep S with S(0)=0, S(1)=1, S',S'' vanishing at 0 and 1.
// Returns derivatives up to order 3 in d[0..3].
void smoothstep5(double x, double d[4]);

std::string format_double(double v);

}  // namespace fsinc
