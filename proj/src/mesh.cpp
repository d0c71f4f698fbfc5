#include "fsinc/mesh.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace fsinc {

double Mesh::area(int t) const {
  const auto& T = triangles[t];
  Vec2 e1 = vertices[T[1]] - vertices[T[0]];
  Vec2 e2 = vertices[T[2]] - vertices[T[0]];
  return 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
}

Vec2 Mesh::centroid(int t) const {
  const auto& T = triangles[t];
  return (vertices[T[0]] + vertices[T[1]] + vertices[T[2]]) / 3.0;
}

double Mesh::max_edge() const {
  double h = 0.0;
  for (const auto& T : triangles)
    for (int k = 0; k < 3; ++k) h = std::max(h, (vertices[T[k]] - vertices[T[(k + 1) % 3]]).norm());
  return h;
}

void Mesh::finalize() {
  for (int t = 0; t < nt(); ++t)
    if (!(area(t) > 0.0)) raise(ErrorKind::AssemblyFailed, "triangle " + std::to_string(t) + " is not counter-clockwise");
  if (static_cast<int>(vertex_marker.size()) != nv()) vertex_marker.assign(nv(), kInterior);

  std::map<std::pair<int, int>, std::pair<int, int>> edges;  // sorted edge -> (count, tri)
  std::map<std::pair<int, int>, std::pair<int, int>> oriented;
  for (int t = 0; t < nt(); ++t) {
    const auto& T = triangles[t];
    for (int k = 0; k < 3; ++k) {
      int a = T[k], b = T[(k + 1) % 3];
      auto key = std::minmax(a, b);
      auto& e = edges[{key.first, key.second}];
      e.first++;
      e.second = t;
      oriented[{key.first, key.second}] = {a, b};
    }
  }
  boundary_edges.clear();
  for (const auto& [key, e] : edges) {
    if (e.first != 1) continue;
    auto [a, b] = oriented[key];
    int ma = vertex_marker[a], mb = vertex_marker[b];
    if (ma == kInterior || mb == kInterior || ma != mb)
      raise(ErrorKind::AssemblyFailed, "boundary edge with inconsistent vertex markers");
    boundary_edges.push_back({a, b, e.second, ma});
  }
  boundary_vertices.clear();
  boundary_index.assign(nv(), -1);
  for (int v = 0; v < nv(); ++v)
    if (vertex_marker[v] != kInterior) {
      boundary_index[v] = static_cast<int>(boundary_vertices.size());
      boundary_vertices.push_back(v);
    }
  vertex_normals.assign(nv(), Vec2::Zero());
  for (const auto& e : boundary_edges) {
    Vec2 d = vertices[e.b] - vertices[e.a];
    // fluid on the left of a->b, so the outward normal points to the right
    Vec2 n(d.y(), -d.x());
    vertex_normals[e.a] += n;
    vertex_normals[e.b] += n;
  }
  for (int v : boundary_vertices) {
    double L = vertex_normals[v].norm();
    if (!(L > 0)) raise(ErrorKind::AssemblyFailed, "boundary vertex without boundary edges");
    vertex_normals[v] /= L;
  }
}

Mesh annulus_mesh(double r_in, double r_out, int n_theta, int n_r) {
  if (n_theta < 6 || n_r < 1 || !(r_in > 0 && r_out > r_in))
    raise(ErrorKind::MeshTooCoarse, "annulus mesh parameters out of range");
  Mesh m;
  const double L = std::log(r_out / r_in);
  for (int i = 0; i <= n_r; ++i) {
    double r = (i == 0) ? r_in : (i == n_r ? r_out : r_in * std::exp(L * i / n_r));
    for (int j = 0; j < n_theta; ++j) {
      double a = 2.0 * M_PI * j / n_theta;
      m.vertices.emplace_back(r * std::cos(a), r * std::sin(a));
      m.vertex_marker.push_back(i == 0 ? kBody : (i == n_r ? kOuter : kInterior));
    }
  }
  auto id = [n_theta](int i, int j) { return i * n_theta + (j % n_theta); };
  for (int i = 0; i < n_r; ++i) {
    for (int j = 0; j < n_theta; ++j) {
      int a = id(i, j), b = id(i, j + 1), c = id(i + 1, j + 1), d = id(i + 1, j);
      if ((i + j) % 2 == 0) {
        m.triangles.push_back({a, d, c});
        m.triangles.push_back({a, c, b});
      } else {
        m.triangles.push_back({a, d, b});
        m.triangles.push_back({b, d, c});
      }
    }
  }
  m.finalize();
  return m;
}

void write_mesh(std::ostream& os, const Mesh& mesh) {
  os << "vertices " << mesh.nv() << "\n";
  for (const auto& v : mesh.vertices) os << format_double(v.x()) << " " << format_double(v.y()) << "\n";
  os << "triangles " << mesh.nt() << "\n";
  for (const auto& t : mesh.triangles) os << t[0] << " " << t[1] << " " << t[2] << "\n";
  int nb = 0;
  for (int mk : mesh.vertex_marker) nb += (mk != kInterior);
  os << "boundary_markers " << nb << "\n";
  for (int v = 0; v < mesh.nv(); ++v)
    if (mesh.vertex_marker[v] != kInterior) os << v << " " << mesh.vertex_marker[v] << "\n";
}

Mesh read_mesh(std::istream& is) {
  Mesh m;
  std::string tag;
  long n = 0;
  auto expect = [&](const char* name) {
    if (!(is >> tag >> n) || tag != name || n < 0)
      raise(ErrorKind::IoError, std::string("mesh file: expected section '") + name + "'");
  };
  expect("vertices");
  m.vertices.resize(n);
  for (auto& v : m.vertices)
    if (!(is >> v.x() >> v.y())) raise(ErrorKind::IoError, "mesh file: bad vertex line");
  expect("triangles");
  m.triangles.resize(n);
  for (auto& t : m.triangles) {
    if (!(is >> t[0] >> t[1] >> t[2])) raise(ErrorKind::IoError, "mesh file: bad triangle line");
    for (int k : t)
      if (k < 0 || k >= m.nv()) raise(ErrorKind::IoError, "mesh file: triangle vertex out of range");
  }
  expect("boundary_markers");
  m.vertex_marker.assign(m.nv(), kInterior);
  for (long i = 0; i < n; ++i) {
    int v = 0, mk = 0;
    if (!(is >> v >> mk) || v < 0 || v >= m.nv() || (mk != kOuter && mk != kBody))
      raise(ErrorKind::IoError, "mesh file: bad boundary marker line");
    m.vertex_marker[v] = mk;
  }
  m.finalize();
  return m;
}

Mesh read_mesh_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) raise(ErrorKind::IoError, "cannot open mesh file " + path);
  return read_mesh(f);
}

}  // namespace fsinc
