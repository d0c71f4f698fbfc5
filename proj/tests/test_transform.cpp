#include "bench.hpp"

#include <gtest/gtest.h>

using namespace fsinc;

namespace {

RigidPath wobble_path(int N = 50, double T = 1.0) {
  std::vector<double> ts;
  std::vector<RigidState> st;
  for (int n = 0; n <= N; ++n) {
    double t = T * n / N;
    RigidState s;
    s.h = Vec2(0.06 * std::sin(2 * t), 0.03 * t * t);
    s.theta = 0.1 * std::sin(3 * t) + 0.02;
    ts.push_back(t);
    st.push_back(s);
  }
  return RigidPath::from_states(ts, st);
}

std::vector<Vec2> random_points(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec2> pts;
  for (int i = 0; i < n; ++i) {
    double r = rng.uniform(0.2, 1.0), a = rng.uniform(0, 2 * M_PI);
    pts.emplace_back(r * std::cos(a), r * std::sin(a));
  }
  return pts;
}

Grid2D box_grid(int n, double half) {
  Grid2D g;
  g.nx = g.ny = n;
  g.x0 = g.y0 = -half;
  g.hx = g.hy = 2 * half / (n - 1);
  return g;
}

}  // namespace

TEST(Transform, CutoffBandIsHalfTheMargin) {
  Domain d = benchmark::benchmark_domain();
  CutoffParams c = CutoffParams::from_domain(d);
  EXPECT_NEAR(c.r_out - c.r_in, 0.5 * d.safety_distance, 1e-12);
  EXPECT_GT(c.r_in, d.smallness_C);
  EXPECT_LE(c.r_out, d.control.r0);
}

TEST(Transform, FlowPreservesVolumeAndIsRigidNearBody) {
  Domain d = benchmark::benchmark_domain();
  RigidPath path = wobble_path();
  auto pts = random_points(300, 1);
  TransformMaps maps = build_extension_flow(path, d, pts, 4);
  EXPECT_LE(maps.max_det_drift(), 1e-8);
  for (int n : {0, 10, 25, 50}) {
    for (size_t q = 0; q < pts.size(); q += 5) {
      const MapSample& s = maps.samples[n][q];
      EXPECT_NEAR(s.det(), 1.0, 1e-8);
      EXPECT_LT((maps.inverse(n, s.X) - pts[q]).norm(), 1e-10);
      if (pts[q].norm() < maps.cut.r_in) {
        Vec2 rigid = path.h[n] + rotation_matrix(path.theta[n]) * pts[q];
        EXPECT_LT((rigid - s.X).norm(), 1e-10);
      }
      if (pts[q].norm() > maps.cut.r_out + 0.1) EXPECT_LT((s.X - pts[q]).norm(), 1e-14);
    }
  }
}

TEST(Transform, JacobianMatchesFiniteDifferences) {
  Domain d = benchmark::benchmark_domain();
  RigidPath path = wobble_path();
  TransformMaps maps = build_extension_flow(path, d, {Vec2(0.3, 0.0)}, 4);
  Vec2 y(0.26, 0.05);
  const int n = 30;
  const double e = 1e-5;
  MapSample s0 = maps.evaluate(n, y);
  Mat2 Ffd;
  for (int j = 0; j < 2; ++j) {
    Vec2 dy = Vec2::Zero();
    dy(j) = e;
    Ffd.col(j) = (maps.evaluate(n, y + dy).X - maps.evaluate(n, y - dy).X) / (2 * e);
  }
  EXPECT_LT((Ffd - s0.F).norm(), 1e-6);
  for (int j = 0; j < 2; ++j) {
    Vec2 dy = Vec2::Zero();
    dy(j) = e;
    Mat2 dF = (maps.evaluate(n, y + dy).F - maps.evaluate(n, y - dy).F) / (2 * e);
    for (int k = 0; k < 2; ++k)
      for (int i = 0; i < 2; ++i) EXPECT_NEAR(dF(k, i), s0.H[k](i, j), 1e-4);
  }
}

TEST(Transform, ExtensionVelocityIsDivergenceFreeAndRigidInside) {
  Domain d = benchmark::benchmark_domain();
  CutoffParams cut = CutoffParams::from_domain(d);
  Vec2 h(0.02, -0.01), hdot(0.3, 0.4);
  double om = 1.2;
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    double r = rng.uniform(0.0, 0.6), a = rng.uniform(0, 2 * M_PI);
    Vec2 x = h + r * Vec2(std::cos(a), std::sin(a));
    FlowDerivs f = extension_velocity(cut, h, hdot, om, x);
    EXPECT_NEAR(f.Dw.trace(), 0.0, 1e-12);
    if (r < cut.r_in) EXPECT_LT((f.w - (hdot + om * perp(x - h))).norm(), 1e-12);
    if (r > cut.r_out) EXPECT_LT(f.w.norm(), 1e-14);
  }
}

TEST(Transform, MarginViolationRaised) {
  Domain d = benchmark::benchmark_domain();
  std::vector<double> ts{0.0, 0.5, 1.0};
  std::vector<RigidState> st(3);
  st[2].h = Vec2(0.15, 0.0);
  try {
    build_extension_flow(RigidPath::from_states(ts, st), d, {Vec2(0.5, 0.0)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MarginViolated);
  }
}

TEST(Transform, IdentityMapDegeneratesOperators) {
  Domain d = benchmark::benchmark_domain();
  Grid2D g = box_grid(21, 0.5);
  TransformMaps maps = build_extension_flow(RigidPath::at_rest(1.0, 4), d, g.points(), 4);
  const auto& S = maps.samples[2];
  MetricData md = metric_tensors(S, g);
  for (size_t q = 0; q < S.size(); ++q) {
    EXPECT_EQ(md.g_up[q], Mat2::Identity());
    for (int k = 0; k < 2; ++k) EXPECT_EQ(md.gamma[q][k].norm(), 0.0);
  }
  GridVector u{g, Vec(g.size()), Vec(g.size())};
  GridScalar p{g, Vec(g.size())};
  auto pts = g.points();
  for (int q = 0; q < g.size(); ++q) {
    const Vec2& y = pts[q];
    u.u1(q) = std::sin(2 * y.x()) * std::cos(y.y());
    u.u2(q) = y.x() * y.y() * y.y();
    p.v(q) = std::exp(y.x() - y.y());
  }
  GridVector L = apply_L(u, md), M = apply_M(u, S, md), Nc = apply_N(u, md), G = apply_G(p, md);
  for (int i = 0; i < 2; ++i) {
    Vec lap = grid_laplacian(g, u.comp(i));
    Vec conv = u.u1.cwiseProduct(grid_derivative(g, u.comp(i), 0)) + u.u2.cwiseProduct(grid_derivative(g, u.comp(i), 1));
    EXPECT_LT((L.comp(i) - lap).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(M.comp(i).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_LT((Nc.comp(i) - conv).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((G.comp(i) - grid_derivative(g, p.v, i)).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Transform, PiolaPreservesDivergence) {
  Domain d = benchmark::benchmark_domain();
  RigidPath path = wobble_path();
  // divergence-free U = curl psi, psi = sin(3x + 0.2) cos(2y)
  auto U = [](const Vec2& x) {
    return Vec2(-2.0 * std::sin(3 * x.x() + 0.2) * std::sin(2 * x.y()),
                -3.0 * std::cos(3 * x.x() + 0.2) * std::cos(2 * x.y()));
  };
  // points inside the cutoff band, where the map is strongly sheared; centered divergence converges at order 2
  for (const Vec2& y : {Vec2(0.0875, -0.29), Vec2(-0.25, -0.0375)}) {
    std::vector<double> div;
    for (double e : {2.5e-3, 6.25e-4, 1.5625e-4}) {
      TransformMaps maps =
          build_extension_flow(path, d, {y + Vec2(e, 0), y - Vec2(e, 0), y + Vec2(0, e), y - Vec2(0, e)}, 4);
      for (int n : {10, 50}) {
        auto v = piola_transform(U, maps.samples[n]);
        for (size_t q = 0; q < v.size(); ++q)
          EXPECT_LT((inverse_piola(v[q], maps.samples[n][q]) - U(maps.samples[n][q].X)).norm(), 1e-12);
      }
      auto v = piola_transform(U, maps.samples[10]);
      div.push_back((v[0].x() - v[1].x()) / (2 * e) + (v[2].y() - v[3].y()) / (2 * e));
    }
    EXPECT_NEAR(std::log(div[0] / div[1]) / std::log(4.0), 2.0, 0.2) << y.transpose();
    EXPECT_NEAR(std::log(div[1] / div[2]) / std::log(4.0), 2.0, 0.2) << y.transpose();
    EXPECT_LT(std::abs(div[2]), 2e-3) << y.transpose();
  }
}

TEST(Transform, ChristoffelModesDifferOnlyOffIdentity) {
  Domain d = benchmark::benchmark_domain();
  TransformMaps maps = build_extension_flow(wobble_path(), d, {Vec2(0.27, 0.03)}, 4);
  PointCoefficients a = point_coefficients(maps.samples[40][0], ChristoffelMode::Standard);
  PointCoefficients b = point_coefficients(maps.samples[40][0], ChristoffelMode::AsWritten);
  EXPECT_GT((a.gamma[0] - b.gamma[0]).norm() + (a.gamma[1] - b.gamma[1]).norm(), 1e-8);
  EXPECT_LT((a.g_up - b.g_up).norm(), 1e-15);
}
