#pragma once

#include "fsinc/fsi_core.hpp"

#include <functional>
#include <string>

namespace fsinc {

struct CarlemanParams {
  double lambda = 1.5;
  double s = 1.0;
  int N = 4;
  double T = 1.0;

  void validate() const;  // lambda > 1, s > 1 (s >= 1 accepted), N >= 4, T > 0
};

struct EtaOptions {
  double grad_floor = 1e-3;
  int max_repairs = 10;
  double tilt = 1.0;  // initial angular tilt amplitude
};

// P1 field on the fluid mesh, normalized so that max eta = 1.
struct EtaField {
  Vec values;                  // nodal values
  std::vector<Vec2> grad;      // per triangle
  double gradient_floor = 0;   // min |grad eta| at quadrature points outside the core
  double boundary_max = 0;     // max |eta| on boundary vertices
  double max_normal_derivative = 0;  // max grad eta . n over boundary edges (n out of the fluid)
  Vec2 argmax = Vec2::Zero();
  int repairs = 0;
  double tilt = 0.0;
  double radial_shift = 0.0;

  double value(const Mesh& mesh, int t, const std::array<double, 3>& b) const;
};

// Poisson solution -Delta eta_P = 1, eta_P = 0 on the boundary, times
// exp(a Theta(angle) + b r): Theta has its two critical angles inside the core
// sector and b moves the radial critical ring into the core's radial range.
EtaField build_eta(const Domain& domain, const Mesh& mesh, const EtaOptions& opt = {});

// Carleman and time weights for a normalized eta (values in [0, 1]).
class WeightSet {
 public:
  explicit WeightSet(const CarlemanParams& p, double eta_sup = 1.0);

  const CarlemanParams& params() const { return p_; }

  double beta(double t, double eta) const;
  double beta_hat(double t) const;
  double beta_star(double t) const;
  double beta_hat_dot(double t) const;
  // Excesses over beta*(T/2), the global minimum of beta; accurate where the
  // weights themselves are too large to difference.
  double beta_excess(double t, double eta) const;
  double beta_hat_excess(double t) const;
  double beta_star_excess(double t) const;
  double xi(double t, double eta) const;
  double xi_star(double t) const;
  double xi_hat(double t) const;

  double log_rho(double t) const;  // rho = exp(-3/2 s beta_hat)
  // i in 1..4; -inf at t >= T
  double log_rho_i(int i, double t) const;
  double log_rho_i_star(int i, double t) const;
  double rho_i(int i, double t) const { return std::exp(log_rho_i(i, t)); }
  // rho_i / rho_i(T/2): equal to 1 on (0, T/2]
  double log_rho_tilde(int i, double t) const;
  double rho_tilde(int i, double t) const;
  double rho_tilde_star(int i, double t) const;
  // log |rho_4' rho_2 / rho_4^2|, -inf where rho_4 is constant
  double log_rho4_quotient(double t) const;

 private:
  double denom(double t) const;  // (t (T - t))^N
  double inv_denom_excess(double t) const;  // 1/denom(t) - 1/denom(T/2)
  CarlemanParams p_;
  double eta_sup_;
  double e_top_, e_low_, e_mid_;  // e^{l(2N+2)|eta|}, e^{l 2N |eta|}, e^{l(2N+1)|eta|}
};

struct WeightCheck {
  bool ordering = false;        // beta* <= beta <= beta_hat, xi* <= xi <= xi_hat
  bool vanish_at_T = false;     // rho_i(T) == 0
  bool continuity = false;      // rho_i continuous at T/2
  bool constant_first_half = false;
  bool ratio_bounded = false;   // rho_1/rho_4 and rho_3/rho_4 bounded and decaying towards T
  bool envelope = false;        // |rho_4' rho_2 / rho_4^2| <= C_fit e^{-s beta_hat / 8}
  double log_ratio13_max = 0.0;
  double log_envelope_constant = 0.0;  // fitted log C on the sample grid
  bool all() const {
    return ordering && vanish_at_T && continuity && constant_first_half && ratio_bounded && envelope;
  }
};

// Fits log C_fit = max over the interior sample nodes of log |rho_4' rho_2/rho_4^2| + s beta_hat/8.
double fit_envelope_constant(const WeightSet& w, int samples);
// Scans `samples` uniform interior nodes; the envelope uses the given frozen constant.
WeightCheck check_weights(const WeightSet& w, int samples, double log_envelope_constant);

// Sum of exp(log_weight) * value kept as exp(ref) * sum to survive extreme weights.
class LogSum {
 public:
  void add(double log_weight, double value);
  void add(const LogSum& o);
  double log() const;  // -inf when empty or zero
  bool zero() const { return sum_ == 0.0; }

 private:
  double ref_ = -INFINITY;
  double sum_ = 0.0;
};

struct ProbeTerm {
  std::string name;
  char side = 'L';
  double log_value = -INFINITY;
};

struct ProbeReport {
  std::vector<ProbeTerm> terms;
  double log_lhs = -INFINITY;
  double log_rhs = -INFINITY;
  double ratio = 0.0;  // 0 when both sides vanish
  // Parts of each side not shared with the other; LHS <= RHS iff lhs excess <= rhs excess.
  double log_lhs_excess = -INFINITY;
  double log_rhs_excess = -INFINITY;
  double ratio_minus_one = 0.0;  // computed from the excesses, free of cancellation

  bool holds() const { return log_lhs_excess <= log_rhs_excess; }

  // rows term,side,value with values relative to max(log_lhs, log_rhs), then the reference
  std::string csv() const;
};

struct HeatSample {
  double psi = 0.0;
  Vec2 grad = Vec2::Zero();
  double psi_t = 0.0;
  double f = 0.0;  // -psi_t - nu Delta psi
};
using HeatFn = std::function<HeatSample(double, const Vec2&)>;

// psi(t,y) = a(t) phi(y) with a(t) = e^{-t} (1 + t) and phi a smooth non-radial
// profile; f is derived analytically for the given viscosity.
HeatFn manufactured_heat(double nu);

struct ProbeOptions {
  int quad_order = 3;
  int time_points = 8;  // Gauss points per time panel
  double grading = 1.5;
};

ProbeReport probe_heat_carleman(const Domain& domain, const Mesh& mesh, const EtaField& eta, const WeightSet& w,
                                double nu, const HeatFn& psi, const ProbeOptions& opt = {});

struct StationarySample {
  Vec2 psi = Vec2::Zero();
  Mat2 grad = Mat2::Zero();  // grad(i,j) = d psi_i / d y_j
  Vec2 f = Vec2::Zero();     // -Delta psi
};
using StationaryFn = std::function<StationarySample(const Vec2&)>;

// psi = curl of a smooth stream function (divergence free).
StationaryFn manufactured_stationary();

// Stationary (divergence-free Laplacian with Navier data) probe; the normal
// and tangential data a, b are the traces of the manufactured field.
ProbeReport probe_stationary_carleman(const Domain& domain, const Mesh& mesh, const EtaField& eta,
                                      const CarlemanParams& p, double friction, const StationaryFn& psi,
                                      const ProbeOptions& opt = {});

struct SystemSources {
  std::function<Vec2(double, const Vec2&)> F1;
  std::function<Vec2(double)> F2;
  std::function<double(double)> F3;
};

ProbeReport probe_system_carleman(const Domain& domain, const DiscreteOperator& op, const WeightSet& w,
                                  const Trajectory& adjoint, const SystemSources& src, int quad_order = 3);

struct Calibration {
  double s = 0.0;
  double ratio_minus_one = 0.0;
  int evaluations = 0;
};

// Smallest s >= s_min (to relative tolerance) with excess(s) <= 0, by doubling then
// bisection; excess is a probe's ratio_minus_one.  s is NaN if no s up to
// s_min 2^max_doublings qualifies.
Calibration calibrate_s(const std::function<double(double)>& excess, double s_min = 1.0, double rel_tol = 1e-3,
                        int max_doublings = 40);

}  // namespace fsinc
