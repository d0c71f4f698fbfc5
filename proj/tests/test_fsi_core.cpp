#include "bench.hpp"
#include "fsinc/manufactured.hpp"

#include <gtest/gtest.h>

using namespace fsinc;

namespace {

const DiscreteOperator& bench_op() {
  static const DiscreteOperator op = assemble(benchmark::benchmark_mesh(), PhysicalParams{});
  return op;
}

}  // namespace

TEST(FsiCore, SpaceLayout) {
  const FeSpace& S = bench_op().space;
  EXPECT_EQ(S.nZ, 2 * S.nv + 2 * S.nt + 3);
  EXPECT_EQ(S.np, S.nv);
  EXPECT_EQ(S.ldof(0), S.nZ - 3);
  EXPECT_EQ(S.kdof(), S.nZ - 1);
}

TEST(FsiCore, StiffnessSymmetricAndMassPositive) {
  const DiscreteOperator& op = bench_op();
  EXPECT_LE(stiffness_asymmetry(op), 1e-12);
  Rng rng(5);
  for (int i = 0; i < 5; ++i) {
    Vec z = random_state(op, rng);
    EXPECT_GT(h_norm(op, z), 0.0);
    EXPECT_GE(energy_form(op, z), 0.0);
  }
}

TEST(FsiCore, RandomStatesSatisfyConstraints) {
  const DiscreteOperator& op = bench_op();
  Rng rng(6);
  Vec z = random_state(op, rng);
  ConstraintResidual r = constraint_residual(op, z);
  EXPECT_LT(r.divergence, 1e-10 * z.norm());
  EXPECT_LT(r.normal_trace, 1e-10 * z.norm());
  Vec p = project_to_constraints(op, z);
  EXPECT_LT((p - z).norm(), 1e-9 * z.norm());
}

TEST(FsiCore, RigidFieldHasZeroEnergyWithoutOuterFriction) {
  PhysicalParams p;
  p.beta_Omega = 0.0;
  DiscreteOperator op = assemble(benchmark::coarse_mesh(), p);
  Vec2 l(0.3, -0.2);
  double k = 0.7;
  Vec z = interpolate(op.space, [&](const Vec2& x) -> Vec2 { return l + k * perp(x); }, l, k);
  EXPECT_NEAR(energy_form(op, z), 0.0, 1e-12);
}

TEST(FsiCore, ZeroDataStaysZero) {
  const DiscreteOperator& op = bench_op();
  Trajectory tr = simulate_loads(op, zero_field(op), Vec2::Zero(), 0.0, {}, 1.0, 10);
  ASSERT_EQ(tr.t.size(), 11u);
  for (const auto& w : tr.w) EXPECT_EQ(w.z.norm(), 0.0);
  for (const auto& r : tr.rigid) {
    EXPECT_EQ(r.h.norm(), 0.0);
    EXPECT_EQ(r.theta, 0.0);
  }
}

TEST(FsiCore, EnergyDecaysEveryStep) {
  const DiscreteOperator& op = bench_op();
  Rng rng(12);
  const Vec zero = Vec::Zero(op.space.nZ);
  for (int sample = 0; sample < 3; ++sample) {
    FsiField w = zero_field(op);
    w.z = random_state(op, rng);
    double prev = h_norm(op, w.z);
    for (int n = 0; n < 10; ++n) {
      w = step_linear_load(op, w, zero, zero, 0.02);
      double e = h_norm(op, w.z);
      EXPECT_LE(e, prev * (1 + 1e-12));
      prev = e;
    }
  }
}

TEST(FsiCore, LinearKinematicsIntegratesVelocities) {
  const DiscreteOperator& op = bench_op();
  FsiField w = zero_field(op);
  w.z = benchmark::scaled_smooth_state(op, 3, 0.1);
  Trajectory tr = simulate_loads(op, w, Vec2::Zero(), 0.0, {}, 1.0, 20);
  // implicit update: a^{n+1} = a^n + dt (l, k)^{n+1}
  for (size_t n = 1; n < tr.t.size(); ++n) {
    double dt = tr.t[n] - tr.t[n - 1];
    EXPECT_NEAR(tr.rigid[n].h.x(), tr.rigid[n - 1].h.x() + dt * tr.rigid[n].l.x(), 1e-14);
    EXPECT_NEAR(tr.rigid[n].theta, tr.rigid[n - 1].theta + dt * tr.rigid[n].omega, 1e-14);
  }
}

TEST(FsiCore, GridMismatchOnLoadCount) {
  const DiscreteOperator& op = bench_op();
  std::vector<Vec> loads(3, Vec::Zero(op.space.nZ));
  try {
    simulate_loads(op, zero_field(op), Vec2::Zero(), 0.0, loads, 1.0, 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GridMismatch);
  }
}

TEST(FsiCore, ManufacturedSolutionSatisfiesBoundaryConditions) {
  PhysicalParams p;
  ManufacturedSolution ms(p, 0.2, 1.0, ManufacturedSolution::Profile::Oscillatory);
  double t = 0.37;
  for (int i = 0; i < 64; ++i) {
    double a = 2 * M_PI * i / 64 + 0.1;
    for (int side = 0; side < 2; ++side) {
      double r = side ? 1.0 : 0.2;
      Vec2 x(r * std::cos(a), r * std::sin(a));
      Vec2 er = x / r, tau = perp(er), n = side ? er : Vec2(-er);
      FieldWithGradient v = ms.velocity(t, x);
      Vec2 us = side ? Vec2::Zero() : Vec2(ms.l(t) + ms.k(t) * perp(x));
      double beta = side ? p.beta_Omega : p.beta_S;
      Mat2 D = 0.5 * (v.grad + v.grad.transpose());
      EXPECT_NEAR((v.u - us).dot(n), 0.0, 1e-12);
      EXPECT_NEAR(tau.dot(2 * p.nu * D * n + beta * (v.u - us)), 0.0, 1e-10);
    }
    Vec2 x(0.5 * std::cos(a), 0.5 * std::sin(a));
    EXPECT_NEAR(ms.velocity(t, x).grad.trace(), 0.0, 1e-12);
  }
}

TEST(FsiCore, HydroForceMatchesExactTraction) {
  PhysicalParams p;
  ManufacturedSolution ms(p, 0.2, 1.0, ManufacturedSolution::Profile::Linear);
  DiscreteOperator op = assemble(annulus_mesh(0.2, 1.0, 48, 12), p);
  MmsRun run = run_manufactured(op, ms, 0.5, 10);
  EXPECT_LT(run.max_force_error, 0.1 * run.force_scale);
}
