#pragma once

#include "fsinc/fe_space.hpp"
#include "fsinc/geometry.hpp"

#include <Eigen/Sparse>

#include <map>
#include <memory>
#include <mutex>

namespace fsinc {

using SpMat = Eigen::SparseMatrix<double>;

struct KktSolution {
  Vec z;             // velocity unknowns
  Vec p;             // pressure block (scaled by the stiffness factor)
  Vec mu;            // normal-trace multipliers
  double sigma = 0;  // pressure-mean multiplier
};

// Mass, stiffness and constraint blocks of the Stokes / rigid-body operator
// with Navier slip.  Saddle-point solves
//   [aM M + aK K, B^T, C^T, 0; B, 0, 0, e; C, 0, 0, 0; 0, e^T, 0, 0]
// are factorized once per (aM, aK) and cached.
struct DiscreteOperator {
  FeSpace space;
  PhysicalParams params;
  SpMat M, K;
  SpMat B;  // np x nZ, B(q, .) = -int phi_q div u
  SpMat C;  // nc x nZ, nodal normal traces
  Vec mean;  // int phi_q
  std::vector<int> constrained_vertices;
  double h_max = 0.0;

  KktSolution solve_kkt(double aM, double aK, const Vec& rz) const;
  int kkt_size() const { return space.nZ + space.np + static_cast<int>(C.rows()) + 1; }

 private:
  struct Factor;
  struct Cache {
    std::mutex mtx;
    std::map<std::pair<double, double>, std::shared_ptr<Factor>> f;
  };
  std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
  std::shared_ptr<Factor> factor(double aM, double aK) const;
};

DiscreteOperator assemble(const Mesh& mesh, const PhysicalParams& params);

struct FsiField {
  Vec z;   // velocity + rigid unknowns
  Vec p;   // pressure
  Vec mu;  // normal-trace multipliers (traction recovery)

  Vec2 l(const FeSpace& S) const { return Vec2(z(S.ldof(0)), z(S.ldof(1))); }
  double k(const FeSpace& S) const { return z(S.kdof()); }
};

FsiField zero_field(const DiscreteOperator& op);

// Load vectors b(t) = int F1.v + F2.l_v + F3 k_v; an empty function means no source.
struct SourceTerms {
  std::function<Vec(double)> load;
  Vec at(double t, int nZ) const { return load ? load(t) : Vec::Zero(nZ); }
};

SourceTerms make_source(const DiscreteOperator& op, std::function<Vec2(double, const Vec2&)> F1,
                        std::function<Vec2(double)> F2, std::function<double(double)> F3);

double h_inner(const DiscreteOperator& op, const Vec& a, const Vec& b);
double h_norm(const DiscreteOperator& op, const Vec& z);
double energy_form(const DiscreteOperator& op, const Vec& z);  // a(z,z)

struct ConstraintResidual {
  double divergence = 0.0;
  double normal_trace = 0.0;
};
ConstraintResidual constraint_residual(const DiscreteOperator& op, const Vec& z);

// M-orthogonal projection onto the discrete constraint set.
Vec project_to_constraints(const DiscreteOperator& op, const Vec& z);
Vec random_state(const DiscreteOperator& op, Rng& rng);

// One theta-scheme step of w' = A w + F from t to t + dt.
FsiField step_linear(const DiscreteOperator& op, const FsiField& state, const SourceTerms& src, double t, double dt,
                     double theta = 1.0);
FsiField step_linear_load(const DiscreteOperator& op, const FsiField& state, const Vec& load_old,
                          const Vec& load_new, double dt, double theta = 1.0);

struct Trajectory {
  std::vector<double> t;
  std::vector<FsiField> w;
  std::vector<RigidState> rigid;
};

// Linear run; positions follow the linearized kinematics a' = (l, k).
Trajectory simulate_linear(const DiscreteOperator& op, const FsiField& w0, const Vec2& h0, double theta0,
                           const SourceTerms& src, double T, int steps, double theta = 1.0);

enum class Kinematics {
  Linear,  // h' = l, theta' = k (the linearized system)
  Rigid,   // h' = R_theta l, theta' = k
};

// Run driven by one load vector per time node (loads.size() == steps + 1, or
// empty for no source).  Positions are advanced implicitly with the new velocities.
Trajectory simulate_loads(const DiscreteOperator& op, const FsiField& w0, const Vec2& h0, double theta0,
                          const std::vector<Vec>& loads, double T, int steps, double theta = 1.0,
                          Kinematics kin = Kinematics::Linear);

struct InitialDataReport {
  double divergence = 0.0;    // max |div u0| on interior samples
  double outer_normal = 0.0;  // max |u0 . n| on the outer boundary
  double body_normal = 0.0;   // max |(u0 - u_S) . n| on the placed body boundary
  bool pass = false;
};

struct FieldWithGradient {
  Vec2 u;
  Mat2 grad;
};

InitialDataReport validate_initial_data(const Domain& domain, const std::function<FieldWithGradient(const Vec2&)>& u0,
                                        const Vec2& l0, double omega0, const Vec2& h0, double theta0,
                                        double tol = 1e-8, int samples = 400);

double stiffness_asymmetry(const DiscreteOperator& op);

struct RitzReport {
  double min_value = 0.0;
  double max_value = 0.0;
  double scale = 0.0;
  int iterations = 0;
};
// Extreme generalized eigenvalues of K w = lambda M w on the constraint kernel (shift-invert Lanczos).
RitzReport ritz_extremes(const DiscreteOperator& op, int iterations = 40, std::uint64_t seed = 1);

struct BodyForce {
  Vec2 force = Vec2::Zero();
  double torque = 0.0;
};
// Force and torque exerted by the fluid on the body, recovered from the rigid rows.
BodyForce hydro_force(const DiscreteOperator& op, const FsiField& w);

}  // namespace fsinc
