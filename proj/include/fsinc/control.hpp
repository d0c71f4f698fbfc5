#pragma once

#include "fsinc/carleman.hpp"
#include "fsinc/nonlinear.hpp"

#include <optional>

namespace fsinc {

// Backward data of the adjoint: gamma1 as one load vector per time node (may be
// empty), gamma2 = (l, k) constant, and final velocity data phi (may be empty = 0).
struct DualData {
  std::vector<Vec> gamma1;
  Eigen::Vector3d gamma2 = Eigen::Vector3d::Zero();
  Vec phi;
};

// Implicit Euler adjoint on the forward grid t_n = n T / steps:
//   P^N = S(M phi + dt g^N),  P^n = S(M P^{n+1} + dt g^n),  g^n = gamma1^n + C^T gamma2,
// where S is the constrained solve of (M + dt K) and C^T places gamma2 on the rigid slots.
// The returned trajectory holds P^n at t_n for n = 0..N, with P^0 = S(M P^1 + dt g^0).
Trajectory solve_adjoint(const DiscreteOperator& op, const DualData& dual, double T, int steps);

// Residual of the discrete duality identity
//   phi^T M z^N + sum_n dt g^n . z^n  =  sum_n dt P^n . b^n + P^1 . M z^0
// for a forward run from z0 with loads b^n (n = 1..N); relative to the larger side.
double duality_residual(const DiscreteOperator& op, const Vec& z0, const std::vector<Vec>& loads,
                        const DualData& dual, double T, int steps);

// Mass matrix of the velocity restricted to the control region (fluid dofs only).
SpMat control_mass(const FeSpace& S, const AnnularSector& control, int quad_order = 3);

struct CgOptions {
  double tol = 1e-10;  // relative residual in the M (+) R^3 norm
  int max_iterations = 400;
  int stall_window = 20;
};

struct ControlProblem {
  FsiField w0;
  Vec2 h0 = Vec2::Zero();
  double theta0 = 0.0;
  double T = 1.0;
  int steps = 50;
  double epsilon = 1e-6;
  CarlemanParams carleman;
  CgOptions cg;
  // known sources of the linear model: loads per node and position sources
  // (dh, dtheta) per node, both optional
  std::vector<Vec> loads;
  std::vector<Eigen::Vector3d> position_sources;
};

struct CgLogEntry {
  int iteration = 0;
  double residual = 0.0;
  double functional = 0.0;  // penalized dual functional
};

struct ControlCertificate {
  double terminal_state_norm = 0.0;      // |z(T)|_H
  double terminal_position_error = 0.0;  // |(h(T), theta(T))|
  int cg_iterations = 0;
  double epsilon = 0.0;
  double control_energy_weighted = 0.0;  // sum dt int_O |v|^2 / rho3~^2
  double max_duality_residual = 0.0;
  std::vector<CgLogEntry> log;
};

struct ControlResult {
  std::vector<Vec> v;      // control field per time node (fluid dofs, rigid slots zero)
  std::vector<Vec> loads;  // M_O v per node
  Trajectory traj;         // linear controlled run
  ControlCertificate certificate;
};

// Penalized HUM: CG on (Lambda + eps) q = -y_free in M (+) R^3, control v^n = rho3~(t_n)^2 P^n(q).
ControlResult compute_control(const ControlProblem& problem, const DiscreteOperator& op, const Domain& domain);

// |z|_H + |l| + |k| + |h| + |theta| at the last node.
double terminal_metric(const DiscreteOperator& op, const Trajectory& traj);

// Smooth mesh-independent random field: a random combination of curls of
// low-frequency stream functions, projected on the constraint set.
Vec smooth_random_state(const DiscreteOperator& op, Rng& rng, int modes = 6);

struct ObservabilityStats {
  std::vector<double> ratios;
  double max_ratio = 0.0;
  double mean_ratio = 0.0;
  int skipped = 0;
};

struct ObservabilityOptions {
  int samples = 100;
  int time_bins = 10;  // gamma1 is piecewise constant in time on this many bins
  std::uint64_t seed = 1;
  double late_fraction = 0.0;  // >0: gamma1 supported on t >= late_fraction T, gamma2 = 0
};

// LHS = |gamma2|^2 + |v(0)|_H^2 + sum dt |rho1~ v|_H^2,
// RHS = sum dt |rho2~ (gamma1 + C* gamma2)|_H^2 + sum dt rho3~^2 int_O |v|^2.
ObservabilityStats observability_ratio(const DiscreteOperator& op, const Domain& domain, const WeightSet& w,
                                       double T, int steps, const ObservabilityOptions& opt);

struct ClosedLoopOptions {
  int max_outer = 5;
  NonlinearOptions nonlinear;
};

struct ClosedLoopReport {
  double uncontrolled_terminal = 0.0;
  std::vector<double> terminal;  // per outer iteration
  std::vector<double> min_margin;
  Trajectory controlled;
  Trajectory uncontrolled;
  std::vector<Vec> v;
  ControlCertificate certificate;  // of the last linear solve
  int outer_iterations = 0;
};

// Control of the linearization with the nonlinear remainder as a known source,
// applied in the Picard solver; re-linearized until the terminal value stagnates.
ClosedLoopReport closed_loop_experiment(const ControlProblem& problem, const DiscreteOperator& op,
                                        const Domain& domain, const ClosedLoopOptions& opt = {});

}  // namespace fsinc
