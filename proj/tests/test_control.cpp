#include "bench.hpp"

#include <gtest/gtest.h>

using namespace fsinc;

namespace {

struct Fixture {
  Domain domain = benchmark::benchmark_domain();
  DiscreteOperator op = assemble(benchmark::coarse_mesh(), PhysicalParams{});
};

Fixture& fx() {
  static Fixture f;
  return f;
}

ControlProblem problem(double scale, double eps) {
  ControlProblem pb;
  pb.w0 = zero_field(fx().op);
  if (scale > 0) pb.w0.z = benchmark::scaled_smooth_state(fx().op, 11, scale);
  pb.steps = 20;
  pb.epsilon = eps;
  return pb;
}

}  // namespace

TEST(Adjoint, ZeroDataGivesZero) {
  Trajectory adj = solve_adjoint(fx().op, DualData{}, 1.0, 10);
  ASSERT_EQ(adj.w.size(), 11u);
  for (const auto& w : adj.w) EXPECT_EQ(w.z.norm(), 0.0);
}

TEST(Adjoint, DualityIdentityOnRandomData) {
  const DiscreteOperator& op = fx().op;
  const int steps = 10;
  Rng rng(21);
  for (int k = 0; k < 5; ++k) {
    Vec z0 = random_state(op, rng);
    std::vector<Vec> loads(steps + 1);
    for (auto& b : loads) b = Vec::NullaryExpr(op.space.nZ, [&] { return rng.normal(); });
    DualData d;
    d.phi = random_state(op, rng);
    d.gamma2 = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
    d.gamma1.resize(steps + 1);
    for (auto& g : d.gamma1) g = Vec::NullaryExpr(op.space.nZ, [&] { return rng.normal(); });
    EXPECT_LE(duality_residual(op, z0, loads, d, 1.0, steps), 1e-8);
  }
}

TEST(Adjoint, RigidDataDrivesRigidVelocityBackward) {
  // constant gamma2 on l only: the adjoint rigid velocity is nonzero at every node before T
  DualData d;
  d.gamma2 = Eigen::Vector3d(1.0, 0.0, 0.0);
  Trajectory adj = solve_adjoint(fx().op, d, 1.0, 10);
  const FeSpace& S = fx().op.space;
  for (size_t n = 0; n + 1 < adj.w.size(); ++n) EXPECT_GT(std::abs(adj.w[n].z(S.ldof(0))), 0.0);
  // more accumulated load further from T
  EXPECT_GT(std::abs(adj.w[0].z(S.ldof(0))), std::abs(adj.w[9].z(S.ldof(0))));
}

TEST(Control, ZeroDataGivesZeroControl) {
  ControlResult r = compute_control(problem(0.0, 1e-4), fx().op, fx().domain);
  EXPECT_EQ(r.certificate.cg_iterations, 0);
  for (const auto& v : r.v) EXPECT_EQ(v.norm(), 0.0);
  EXPECT_EQ(r.certificate.terminal_state_norm, 0.0);
}

TEST(Control, RefusesVanishingBodyFriction) {
  DiscreteOperator op = fx().op;
  op.params.beta_S = 0.0;
  try {
    compute_control(problem(0.0, 1e-4), op, fx().domain);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConfigInvalid);
  }
}

TEST(Control, ReducesTerminalStateAndImprovesWithSmallerPenalty) {
  ControlProblem pb = problem(0.05, 1e-3);
  Trajectory free = simulate_loads(fx().op, pb.w0, pb.h0, pb.theta0, {}, pb.T, pb.steps);
  double uncontrolled = terminal_metric(fx().op, free);
  double prev = uncontrolled;
  for (double eps : {1e-3, 1e-4, 1e-5}) {
    pb.epsilon = eps;
    ControlResult r = compute_control(pb, fx().op, fx().domain);
    double m = terminal_metric(fx().op, r.traj);
    EXPECT_LT(m, prev) << eps;
    EXPECT_LE(r.certificate.max_duality_residual, 1e-8);
    EXPECT_GT(r.certificate.cg_iterations, 0);
    prev = m;
  }
  EXPECT_LT(prev, 0.2 * uncontrolled);
}

TEST(Control, LoadsSupportedInControlRegion) {
  ControlResult r = compute_control(problem(0.05, 1e-3), fx().op, fx().domain);
  const FeSpace& S = fx().op.space;
  // the control enters only through M_O: vertex loads vanish away from the closed region
  for (const auto& b : r.loads) {
    EXPECT_EQ(b(S.ldof(0)), 0.0);
    EXPECT_EQ(b(S.kdof()), 0.0);
    for (int v = 0; v < S.nv; ++v) {
      const Vec2& x = S.mesh.vertices[v];
      if (x.norm() < 0.3 || x.x() < 0.0) EXPECT_EQ(std::abs(b(S.vdof(v, 0))) + std::abs(b(S.vdof(v, 1))), 0.0);
    }
  }
}

TEST(Control, ControlMassIsPositiveSemidefiniteAndLocal) {
  SpMat Mo = control_mass(fx().op.space, fx().domain.control);
  EXPECT_LT((SpMat(Mo.transpose()) - Mo).norm(), 1e-14 * Mo.norm());
  Rng rng(3);
  for (int i = 0; i < 5; ++i) {
    Vec x = Vec::NullaryExpr(Mo.rows(), [&] { return rng.normal(); });
    EXPECT_GE(x.dot(Mo * x), -1e-14);
  }
  // the constant field's mass is the quadrature-sampled area of the region; it approaches the exact area
  const AnnularSector& c = fx().domain.control;
  const double area = 0.5 * c.arc * (c.r1 * c.r1 - c.r0 * c.r0);
  std::vector<double> gap;
  for (int k = 0; k < 3; ++k) {
    FeSpace S(annulus_mesh(0.2, 1.0, 24 << k, 6 << k));
    SpMat M = control_mass(S, c);
    Vec one = Vec::Zero(S.nZ);
    for (int v = 0; v < S.nv; ++v) one(S.vdof(v, 0)) = 1.0;
    double sampled = 0.0;
    const TriQuadrature& Q = tri_quadrature(3);
    for (int t = 0; t < S.nt; ++t) {
      ElementGeom g = element_geom(S.mesh, t);
      for (size_t q = 0; q < Q.weight.size(); ++q)
        if (c.contains(g.point(Q.bary[q]))) sampled += 2.0 * g.area * Q.weight[q];
    }
    EXPECT_NEAR(one.dot(M * one), sampled, 1e-12 * sampled);
    gap.push_back(std::abs(sampled - area));
  }
  EXPECT_LT(gap[2], gap[0]);
  EXPECT_LT(gap[2], 0.02 * area);
}

TEST(Control, SmoothRandomStateIsAdmissible) {
  Rng rng(4);
  Vec z = smooth_random_state(fx().op, rng);
  ConstraintResidual r = constraint_residual(fx().op, z);
  EXPECT_LT(r.divergence, 1e-10 * z.norm());
  EXPECT_LT(r.normal_trace, 1e-10 * z.norm());
  Rng again(4);
  EXPECT_EQ((smooth_random_state(fx().op, again) - z).norm(), 0.0);
}

TEST(Observability, RatiosFiniteAndDeterministic) {
  WeightSet w(CarlemanParams{1.5, 1.0, 4, 1.0});
  ObservabilityOptions o;
  o.samples = 5;
  ObservabilityStats a = observability_ratio(fx().op, fx().domain, w, 1.0, 20, o);
  ObservabilityStats b = observability_ratio(fx().op, fx().domain, w, 1.0, 20, o);
  ASSERT_EQ(a.ratios.size(), 5u);
  for (size_t i = 0; i < a.ratios.size(); ++i) {
    EXPECT_TRUE(std::isfinite(a.ratios[i]));
    EXPECT_GT(a.ratios[i], 0.0);
    EXPECT_EQ(a.ratios[i], b.ratios[i]);
  }
  EXPECT_EQ(a.max_ratio, *std::max_element(a.ratios.begin(), a.ratios.end()));
}
