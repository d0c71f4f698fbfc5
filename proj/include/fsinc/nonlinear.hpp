#pragma once

#include "fsinc/fsi_core.hpp"
#include "fsinc/transform.hpp"

namespace fsinc {

struct NonlinearOptions {
  double tol = 1e-8;        // relative successive difference of the remainder
  int max_iterations = 25;
  int flow_substeps = 4;
  int quad_order = 3;
  double theta = 1.0;       // time scheme
  ChristoffelMode mode = ChristoffelMode::Standard;
};

struct NonlinearProblem {
  const DiscreteOperator* op = nullptr;
  const Domain* domain = nullptr;
  FsiField w0;
  Vec2 h0 = Vec2::Zero();
  double theta0 = 0.0;
  double T = 1.0;
  int steps = 50;
  std::vector<Vec> control;  // load per time node, or empty
  std::vector<Vec> initial_remainder;  // warm start of the iteration, or empty
};

struct NonlinearResult {
  Trajectory traj;
  std::vector<Vec> remainder;       // Phi loads per time node at the last iterate
  int iterations = 0;
  bool converged = false;
  std::vector<double> differences;  // |F_{k+1} - F_k|
  std::vector<double> norms;        // |F_{k+1}|
  double contraction = 0.0;         // largest ratio of successive differences
  double max_det_drift = 0.0;
  double min_margin = 0.0;
};

// Load vectors of the remainder
//   nu (L - Delta) u - M u - N u + (grad - G) p   tested against the velocity basis,
//   -m k l^perp                                   on the linear rigid slot,
// with the change of variables built from the trajectory's rigid path.  The
// diffusion part is integrated by parts; its coefficients vanish near the boundary.
std::vector<Vec> remainder_loads(const DiscreteOperator& op, const Domain& domain, const Trajectory& traj,
                                 const NonlinearOptions& opt, double* max_det_drift = nullptr);

// sqrt(sum_n dt |F_n|^2)
double load_norm(const std::vector<Vec>& F, double dt);

// Picard iteration on F -> Phi(solution of the linear problem with source F + control).
NonlinearResult solve_nonlinear(const NonlinearProblem& problem, const NonlinearOptions& opt = {});

}  // namespace fsinc
