#pragma once

#include "fsinc/fsi_core.hpp"

namespace fsinc {

struct Poly {
  std::vector<double> c;  // c[i] r^i

  double operator()(double r) const;
  Jet3 operator()(const Jet3& r) const;
  Poly deriv() const;
  Poly integral() const;  // zero constant term
};

// Exact solution of the linear fluid / rigid-body problem on the annulus
// r0 < |x| < R, built from stream functions that satisfy both Navier
// conditions and the normal-trace coupling identically:
//   rotation     k(t) Psi(r),              Psi' = f
//   translation  g(r) (l2 cos phi - l1 sin phi)
//   interior     b(t) q(r) cos 2phi,       q(r0) = q(R) = 0
// plus pressure c(t) x y.  Sources F1, F2, F3 follow from the equations.
class ManufacturedSolution {
 public:
  enum class Profile { Linear, Oscillatory };

  ManufacturedSolution(const PhysicalParams& params, double r0, double R, Profile profile);

  Vec2 l(double t) const;
  Vec2 l_dot(double t) const;
  double k(double t) const;
  double k_dot(double t) const;

  FieldWithGradient velocity(double t, const Vec2& x) const;
  double pressure(double t, const Vec2& x) const;
  Vec2 F1(double t, const Vec2& x) const;
  Vec2 F2(double t) const;
  double F3(double t) const;
  // traction integrals over the body boundary, normal pointing out of the fluid
  BodyForce traction(double t, int samples = 512) const;

  SourceTerms source(const DiscreteOperator& op) const;
  Vec exact_state(const DiscreteOperator& op, double t) const;

  // time amplitudes of the four stream modes (l1, l2, k, b) and the pressure
  double amplitude(int mode, double t) const { return amp(mode, t).v; }
  double amplitude_rate(int mode, double t) const { return amp(mode, t).d; }
  // stream function of a single mode with unit amplitude
  Jet3 mode_stream(int mode, const Vec2& x) const;

  const Poly& f() const { return f_; }
  const Poly& g() const { return g_; }
  const Poly& q() const { return q_; }

 private:
  struct Amp {
    double v, d;  // value, time derivative
  };
  Amp amp(int which, double t) const;
  Jet3 stream(double t, const Vec2& x, bool time_derivative) const;
  BodyForce mode_traction(int mode, int samples) const;  // mode 4: pressure x y

  PhysicalParams p_;
  double r0_, R_;
  Profile profile_;
  Poly f_, psi_, g_, q_;
  std::array<BodyForce, 5> trac_;
};

// Mode-separated tables on a given mesh: loads and quadrature-point values are
// computed once, so evaluating sources and errors costs O(ndof) per time.
class MmsDiscrete {
 public:
  MmsDiscrete(const DiscreteOperator& op, const ManufacturedSolution& mms);
  Vec load(double t) const;
  SourceTerms source() const;
  double h_error(const Vec& z, double t) const;
  // fluid velocity at the quadrature points for a discrete state
  std::vector<Vec2> sample(const Vec& z) const;
  double l2_distance(const Vec& a, const Vec& b) const;  // H-norm of a - b

 private:
  const DiscreteOperator& op_;
  const ManufacturedSolution& mms_;
  std::array<Vec, 4> Lu_, Llap_;
  Vec Lp_;
  std::vector<int> tri_;
  std::vector<std::array<double, 3>> bary_;
  std::vector<double> w_;
  std::array<std::vector<Vec2>, 4> uq_;
};


struct MmsRun {
  double l2_time_error = 0.0;  // sqrt(sum dt |e_n|_H^2)
  double final_error = 0.0;
  double max_force_error = 0.0;  // discrete hydrodynamic force vs exact traction
  double force_scale = 0.0;
  std::vector<Vec> states;  // z at every time node
};

MmsRun run_manufactured(const DiscreteOperator& op, const ManufacturedSolution& mms, double T, int steps,
                        double theta = 1.0);

struct TemporalOrder {
  std::vector<int> steps;
  std::vector<double> exact_error;  // L2-in-time H error against the exact solution
  std::vector<double> difference;   // L2-in-time distance between runs with dt and dt/2
  double order = 0.0;               // log2 of the ratio of successive differences
};

// Runs steps, 2 steps, 4 steps on one mesh; the successive differences remove
// the common spatial error and expose the time-discretization order.
TemporalOrder temporal_order(const DiscreteOperator& op, const ManufacturedSolution& mms, double T, int steps,
                             double theta = 1.0);

}  // namespace fsinc
