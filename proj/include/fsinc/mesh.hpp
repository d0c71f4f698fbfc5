#pragma once

#include "fsinc/common.hpp"

#include <iosfwd>

namespace fsinc {

enum BoundaryMarker : int { kInterior = 0, kOuter = 1, kBody = 2 };

struct BoundaryEdge {
  int a = 0, b = 0;   // vertex indices, fluid region on the left of a->b
  int tri = 0;        // adjacent triangle
  int marker = 0;
};

struct Mesh {
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;  // counter-clockwise
  std::vector<int> vertex_marker;

  // derived by finalize()
  std::vector<BoundaryEdge> boundary_edges;
  std::vector<int> boundary_vertices;  // vertex ids carrying a marker
  std::vector<int> boundary_index;     // vertex id -> position in boundary_vertices or -1
  std::vector<Vec2> vertex_normals;    // length-weighted averaged outward normals (boundary only)

  int nv() const { return static_cast<int>(vertices.size()); }
  int nt() const { return static_cast<int>(triangles.size()); }

  void finalize();
  double area(int t) const;
  Vec2 centroid(int t) const;
  double max_edge() const;
};

// Structured annulus between radius r_in (marker kBody) and r_out (marker kOuter)
// with log-polar radial grading, n_theta nodes per ring and n_r radial layers.
Mesh annulus_mesh(double r_in, double r_out, int n_theta, int n_r);

void write_mesh(std::ostream& os, const Mesh& mesh);
Mesh read_mesh(std::istream& is);
Mesh read_mesh_file(const std::string& path);

}  // namespace fsinc
