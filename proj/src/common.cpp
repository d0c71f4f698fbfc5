#include "fsinc/common.hpp"

#include <Eigen/Eigenvalues>

#include <cstdio>
#include <map>
#include <mutex>

namespace fsinc {

const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::PlacementOutsideDomain: return "PlacementOutsideDomain";
    case ErrorKind::MarginViolated: return "MarginViolated";
    case ErrorKind::FlowIntegrationDiverged: return "FlowIntegrationDiverged";
    case ErrorKind::SingularMetric: return "SingularMetric";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::MeshTooCoarse: return "MeshTooCoarse";
    case ErrorKind::AssemblyFailed: return "AssemblyFailed";
    case ErrorKind::LinearSolveFailed: return "LinearSolveFailed";
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::FixedPointDiverged: return "FixedPointDiverged";
    case ErrorKind::EtaConstructionFailed: return "EtaConstructionFailed";
    case ErrorKind::OverflowGuard: return "OverflowGuard";
    case ErrorKind::QuadratureUnderflow: return "QuadratureUnderflow";
    case ErrorKind::CGStalled: return "CGStalled";
    case ErrorKind::PenaltyTooSmall: return "PenaltyTooSmall";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), message_(what) {}

void raise(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

// ---------------------------------------------------------------- Rng

namespace {
std::uint64_t splitmix(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& v : s_) v = splitmix(x);
}

std::uint64_t Rng::next() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  while (u1 <= 0.0) u1 = uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * M_PI * u2);
  has_spare_ = true;
  return r * std::cos(2.0 * M_PI * u2);
}

// ---------------------------------------------------------------- Jet3

namespace {
// exponent pairs of the monomials
constexpr int kPx[10] = {0, 1, 0, 2, 1, 0, 3, 2, 1, 0};
constexpr int kPy[10] = {0, 0, 1, 0, 1, 2, 0, 1, 2, 3};
int index_of(int i, int j) {
  switch (i + j) {
    case 0: return 0;
    case 1: return i == 1 ? 1 : 2;
    case 2: return 3 + j;
    case 3: return 6 + j;
    default: return -1;
  }
}
}  // namespace

Jet3 Jet3::constant(double v) {
  Jet3 j;
  j.c[0] = v;
  return j;
}
Jet3 Jet3::var_x(double x0) {
  Jet3 j;
  j.c[0] = x0;
  j.c[1] = 1.0;
  return j;
}
Jet3 Jet3::var_y(double y0) {
  Jet3 j;
  j.c[0] = y0;
  j.c[2] = 1.0;
  return j;
}

Jet3& Jet3::operator+=(const Jet3& o) {
  for (int k = 0; k < 10; ++k) c[k] += o.c[k];
  return *this;
}
Jet3& Jet3::operator-=(const Jet3& o) {
  for (int k = 0; k < 10; ++k) c[k] -= o.c[k];
  return *this;
}
Jet3& Jet3::operator*=(double s) {
  for (auto& v : c) v *= s;
  return *this;
}

Jet3 operator+(Jet3 a, const Jet3& b) { return a += b; }
Jet3 operator-(Jet3 a, const Jet3& b) { return a -= b; }
Jet3 operator-(Jet3 a) { return a *= -1.0; }
Jet3 operator*(Jet3 a, double s) { return a *= s; }
Jet3 operator*(double s, Jet3 a) { return a *= s; }
Jet3 operator+(Jet3 a, double s) {
  a.c[0] += s;
  return a;
}
Jet3 operator+(double s, Jet3 a) { return a + s; }
Jet3 operator-(Jet3 a, double s) {
  a.c[0] -= s;
  return a;
}
Jet3 operator-(double s, const Jet3& a) { return (-a) + s; }

Jet3 operator*(const Jet3& a, const Jet3& b) {
  Jet3 r;
  for (int p = 0; p < 10; ++p) {
    if (a.c[p] == 0.0) continue;
    for (int q = 0; q < 10; ++q) {
      int i = kPx[p] + kPx[q];
      int j = kPy[p] + kPy[q];
      if (i + j > 3) continue;
      r.c[index_of(i, j)] += a.c[p] * b.c[q];
    }
  }
  return r;
}

Jet3 compose(const Jet3& a, double f0, double f1, double f2, double f3) {
  Jet3 d = a;
  d.c[0] = 0.0;
  Jet3 d2 = d * d;
  Jet3 d3 = d2 * d;
  Jet3 r = Jet3::constant(f0);
  r += f1 * d;
  r += (0.5 * f2) * d2;
  r += (f3 / 6.0) * d3;
  return r;
}

Jet3 sqrt(const Jet3& a) {
  double v = a.value();
  double s = std::sqrt(v);
  return compose(a, s, 0.5 / s, -0.25 / (s * v), 0.375 / (s * v * v));
}

Jet3 exp(const Jet3& a) {
  double e = std::exp(a.value());
  return compose(a, e, e, e, e);
}

Jet3 sin(const Jet3& a) {
  double s = std::sin(a.value()), c = std::cos(a.value());
  return compose(a, s, c, -s, -c);
}

Jet3 cos(const Jet3& a) {
  double s = std::sin(a.value()), c = std::cos(a.value());
  return compose(a, c, -s, -c, s);
}

Jet3 inverse(const Jet3& a) {
  double v = a.value();
  return compose(a, 1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v), -6.0 / (v * v * v * v));
}

Jet3 atan2(const Jet3& y, const Jet3& x) {
  double x0 = x.value(), y0 = y.value();
  // tan(phi - phi0) = (x0 y - y0 x) / (x0 x + y0 y)
  Jet3 num = x0 * y - y0 * x;
  Jet3 den = x0 * x + y0 * y;
  Jet3 q = num * inverse(den);
  // atan(q) with q(0)=0: q - q^3/3
  Jet3 r = compose(q, 0.0, 1.0, 0.0, -2.0);
  r.c[0] = std::atan2(y0, x0);
  return r;
}

// ---------------------------------------------------------------- quadrature

void gauss_legendre01(int n, std::vector<double>& x, std::vector<double>& w) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    double b = k / std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = b;
    J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  x.resize(n);
  w.resize(n);
  for (int k = 0; k < n; ++k) {
    x[k] = 0.5 * (es.eigenvalues()(k) + 1.0);
    double v = es.eigenvectors()(0, k);
    w[k] = v * v;  // sums to 1 on [0,1]
  }
}

const TriQuadrature& tri_quadrature(int n) {
  static std::mutex mtx;
  static std::map<int, TriQuadrature> cache;
  std::lock_guard<std::mutex> lock(mtx);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<double> x, w;
  gauss_legendre01(n, x, w);
  TriQuadrature q;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double u = x[i], v = x[j];
      double xi = u, eta = v * (1.0 - u);
      q.bary.push_back({1.0 - xi - eta, xi, eta});
      q.weight.push_back(w[i] * w[j] * (1.0 - u));
    }
  }
  return cache.emplace(n, std::move(q)).first->second;
}

void smoothstep5(double x, double d[4]) {
  if (x <= 0.0) {
    d[0] = d[1] = d[2] = d[3] = 0.0;
    return;
  }
  if (x >= 1.0) {
    d[0] = 1.0;
    d[1] = d[2] = d[3] = 0.0;
    return;
  }
  double x2 = x * x, x3 = x2 * x;
  d[0] = x3 * (10.0 - 15.0 * x + 6.0 * x2);
  d[1] = 30.0 * x2 * (1.0 - x) * (1.0 - x);
  d[2] = 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x);
  d[3] = 60.0 * (1.0 - 6.0 * x + 6.0 * x2);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace fsinc
