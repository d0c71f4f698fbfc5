#include "bench.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace fsinc;

TEST(Mesh, AnnulusCountsAndOrientation) {
  Mesh m = annulus_mesh(0.2, 1.0, 48, 12);
  EXPECT_EQ(m.nv(), 48 * 13);
  EXPECT_EQ(m.nt(), 2 * 48 * 12);
  double area = 0.0;
  for (int t = 0; t < m.nt(); ++t) {
    EXPECT_GT(m.area(t), 0.0);
    area += m.area(t);
  }
  // area of the polygonal annulus with 48-gons
  double exact = 0.5 * 48 * std::sin(2 * M_PI / 48) * (1.0 - 0.04);
  EXPECT_NEAR(area, exact, 1e-12);
}

TEST(Mesh, BoundaryMarkers) {
  Mesh m = annulus_mesh(0.2, 1.0, 24, 6);
  int outer = 0, body = 0;
  for (int v = 0; v < m.nv(); ++v) {
    double r = m.vertices[v].norm();
    if (m.vertex_marker[v] == kOuter) {
      ++outer;
      EXPECT_NEAR(r, 1.0, 1e-14);
    }
    if (m.vertex_marker[v] == kBody) {
      ++body;
      EXPECT_NEAR(r, 0.2, 1e-14);
    }
  }
  EXPECT_EQ(outer, 24);
  EXPECT_EQ(body, 24);
  EXPECT_EQ(static_cast<int>(m.boundary_edges.size()), 48);
  for (const auto& e : m.boundary_edges) {
    Vec2 mid = 0.5 * (m.vertices[e.a] + m.vertices[e.b]);
    Vec2 n = m.vertex_normals[e.a];
    // outward from the fluid: away from the origin on the outer circle, towards it on the body
    if (e.marker == kOuter) EXPECT_GT(n.dot(mid), 0.0);
    if (e.marker == kBody) EXPECT_LT(n.dot(mid), 0.0);
  }
}

TEST(Mesh, TextRoundTrip) {
  Mesh m = annulus_mesh(0.2, 1.0, 16, 4);
  std::stringstream ss;
  write_mesh(ss, m);
  Mesh r = read_mesh(ss);
  ASSERT_EQ(r.nv(), m.nv());
  ASSERT_EQ(r.nt(), m.nt());
  for (int v = 0; v < m.nv(); ++v) {
    EXPECT_EQ(r.vertices[v], m.vertices[v]);
    EXPECT_EQ(r.vertex_marker[v], m.vertex_marker[v]);
  }
  for (int t = 0; t < m.nt(); ++t) EXPECT_EQ(r.triangles[t], m.triangles[t]);
  std::stringstream again;
  write_mesh(again, r);
  std::stringstream first;
  write_mesh(first, m);
  EXPECT_EQ(again.str(), first.str());
}

TEST(Mesh, MalformedTextRejected) {
  std::stringstream ss("vertices 2\n0 0\n1 0\ntriangles 1\n0 1 7\nboundary_markers 0\n");
  EXPECT_THROW(read_mesh(ss), Error);
  std::stringstream ss2("points 3\n");
  try {
    read_mesh(ss2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IoError);
  }
  EXPECT_THROW(read_mesh_file("/nonexistent/mesh.txt"), Error);
}
