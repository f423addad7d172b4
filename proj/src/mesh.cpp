#include "cadtwin/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <tuple>

#include "cadtwin/error.hpp"
#include "cadtwin/rng.hpp"

namespace cadtwin {

void TriMesh::validate() const {
  const int n = static_cast<int>(vertices.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Face& t = faces[f];
    for (int i : t) {
      if (i < 0 || i >= n) {
        throw MeshError("face " + std::to_string(f) + " references vertex " + std::to_string(i) +
                        " out of range (" + std::to_string(n) + " vertices)");
      }
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
      throw MeshError("face " + std::to_string(f) + " is degenerate (repeated vertex index)");
    }
  }
  if (!uv.empty() && uv.size() != vertices.size()) {
    throw MeshError("uv count " + std::to_string(uv.size()) + " does not match vertex count " + std::to_string(n));
  }
}

Vec3 TriMesh::face_normal_unnormalized(std::size_t f) const {
  const Face& t = faces[f];
  return (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
}

double TriMesh::face_area(std::size_t f) const { return 0.5 * face_normal_unnormalized(f).norm(); }

double TriMesh::total_area() const {
  double a = 0.0;
  for (std::size_t f = 0; f < faces.size(); ++f) a += face_area(f);
  return a;
}

Adjacency build_adjacency(const TriMesh& mesh) {
  mesh.validate();
  struct HalfEdge {
    int a, b, face;
  };
  std::vector<HalfEdge> half;
  half.reserve(mesh.faces.size() * 3);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    for (int k = 0; k < 3; ++k) {
      const int u = t[k];
      const int v = t[(k + 1) % 3];
      half.push_back({std::min(u, v), std::max(u, v), static_cast<int>(f)});
    }
  }
  std::sort(half.begin(), half.end(), [](const HalfEdge& x, const HalfEdge& y) {
    return std::tie(x.a, x.b, x.face) < std::tie(y.a, y.b, y.face);
  });

  Adjacency adj;
  adj.one_ring.resize(mesh.vertices.size());
  for (std::size_t i = 0; i < half.size();) {
    std::size_t j = i;
    while (j < half.size() && half[j].a == half[i].a && half[j].b == half[i].b) ++j;
    const std::size_t incident = j - i;
    if (incident > 2) {
      throw MeshError("non-manifold edge (" + std::to_string(half[i].a) + ", " + std::to_string(half[i].b) +
                      ") shared by " + std::to_string(incident) + " faces");
    }
    adj.edges.push_back({half[i].a, half[i].b});
    if (incident == 2) {
      adj.edge_faces.push_back({half[i].face, half[i + 1].face});
      adj.face_pairs.push_back({half[i].face, half[i + 1].face});
    } else {
      adj.edge_faces.push_back({half[i].face, -1});
    }
    adj.one_ring[half[i].a].push_back(half[i].b);
    adj.one_ring[half[i].b].push_back(half[i].a);
    i = j;
  }
  std::sort(adj.face_pairs.begin(), adj.face_pairs.end());
  for (auto& ring : adj.one_ring) std::sort(ring.begin(), ring.end());
  return adj;
}

Eigen::SparseMatrix<double> graph_laplacian(std::size_t vertex_count, const Adjacency& adjacency) {
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(vertex_count + adjacency.edges.size() * 2);
  // Degrees come from the edge list so an edge-only adjacency suffices.
  for (const auto& e : adjacency.edges) {
    entries.emplace_back(e[0], e[1], -1.0);
    entries.emplace_back(e[1], e[0], -1.0);
    entries.emplace_back(e[0], e[0], 1.0);
    entries.emplace_back(e[1], e[1], 1.0);
  }
  Eigen::SparseMatrix<double> l(static_cast<Eigen::Index>(vertex_count), static_cast<Eigen::Index>(vertex_count));
  l.setFromTriplets(entries.begin(), entries.end());
  return l;
}

Eigen::SparseMatrix<double> graph_laplacian(const TriMesh& mesh) {
  return graph_laplacian(mesh.vertices.size(), build_adjacency(mesh));
}

std::vector<SurfaceSample> sample_surface(const TriMesh& mesh, std::size_t count, std::uint64_t seed) {
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    total += mesh.face_area(f);
    cumulative[f] = total;
  }
  if (!(total > 0.0)) throw MeshError("sample_surface: mesh has zero total area");

  std::vector<SurfaceSample> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double target = counter_uniform(seed, 0, i) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    std::size_t f = static_cast<std::size_t>(it - cumulative.begin());
    if (f >= cumulative.size()) f = cumulative.size() - 1;
    // Skip zero-area faces that share a cumulative value with a neighbor.
    while (mesh.face_area(f) == 0.0 && f + 1 < cumulative.size()) ++f;
    const double s = std::sqrt(counter_uniform(seed, 1, i));
    const double r2 = counter_uniform(seed, 2, i);
    const Vec3 bary(1.0 - s, s * (1.0 - r2), s * r2);
    const Face& t = mesh.faces[f];
    out[i].face_index = static_cast<int>(f);
    out[i].barycentric = bary;
    out[i].position = bary[0] * mesh.vertices[t[0]] + bary[1] * mesh.vertices[t[1]] + bary[2] * mesh.vertices[t[2]];
  }
  return out;
}

int euler_characteristic(const TriMesh& mesh, const Adjacency& adjacency) {
  return static_cast<int>(mesh.vertices.size()) - static_cast<int>(adjacency.edges.size()) +
         static_cast<int>(mesh.faces.size());
}

void append_mesh(TriMesh& a, const TriMesh& b) {
  const int offset = static_cast<int>(a.vertices.size());
  const bool uv = (a.vertices.empty() || a.has_uv()) && b.has_uv();
  if (!uv) a.uv.clear();
  a.vertices.insert(a.vertices.end(), b.vertices.begin(), b.vertices.end());
  if (uv) a.uv.insert(a.uv.end(), b.uv.begin(), b.uv.end());
  for (const Face& f : b.faces) a.faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
}

TriMesh make_icosphere(int subdivisions, double radius) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriMesh m;
  m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
             {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (auto& v : m.vertices) v.normalize();
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::make_pair(std::min(a, b), std::max(a, b));
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
      const int id = static_cast<int>(m.vertices.size()) - 1;
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<Face> next;
    next.reserve(m.faces.size() * 4);
    for (const Face& f : m.faces) {
      const int ab = mid(f[0], f[1]);
      const int bc = mid(f[1], f[2]);
      const int ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    m.faces = std::move(next);
  }
  for (auto& v : m.vertices) v *= radius;
  return m;
}

TriMesh make_cylinder(int segments) {
  TriMesh m;
  const int n = std::max(3, segments);
  for (int i = 0; i < n; ++i) {
    const double theta = 2.0 * std::numbers::pi * i / n;
    m.vertices.emplace_back(std::cos(theta), -0.5, std::sin(theta));
  }
  for (int i = 0; i < n; ++i) {
    const double theta = 2.0 * std::numbers::pi * i / n;
    m.vertices.emplace_back(std::cos(theta), 0.5, std::sin(theta));
  }
  const int bottom = static_cast<int>(m.vertices.size());
  m.vertices.emplace_back(0.0, -0.5, 0.0);
  const int top = bottom + 1;
  m.vertices.emplace_back(0.0, 0.5, 0.0);
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    const int lo_i = i, lo_j = j, hi_i = n + i, hi_j = n + j;
    m.faces.push_back({lo_i, hi_i, lo_j});
    m.faces.push_back({hi_i, hi_j, lo_j});
    m.faces.push_back({top, hi_j, hi_i});
    m.faces.push_back({bottom, lo_i, lo_j});
  }
  return m;
}

TriMesh make_subdivided_cube(int n) {
  n = std::max(1, n);
  TriMesh m;
  std::map<std::tuple<long, long, long>, int> index;
  auto vertex = [&](const Vec3& p) {
    const auto key = std::make_tuple(std::lround(p.x() * n), std::lround(p.y() * n), std::lround(p.z() * n));
    auto it = index.find(key);
    if (it != index.end()) return it->second;
    m.vertices.push_back(p);
    const int id = static_cast<int>(m.vertices.size()) - 1;
    index.emplace(key, id);
    return id;
  };
  const Vec3 ex = Vec3::UnitX(), ey = Vec3::UnitY(), ez = Vec3::UnitZ();
  const std::array<std::array<Vec3, 3>, 6> frames = {{{ex, ey, ez},
                                                      {-ex, ez, ey},
                                                      {ey, ez, ex},
                                                      {-ey, ex, ez},
                                                      {ez, ex, ey},
                                                      {-ez, ey, ex}}};
  for (const auto& fr : frames) {
    const Vec3& normal = fr[0];
    const Vec3& u = fr[1];
    const Vec3& w = fr[2];
    std::vector<int> ids((n + 1) * (n + 1));
    for (int j = 0; j <= n; ++j) {
      for (int i = 0; i <= n; ++i) {
        const double s = -1.0 + 2.0 * i / n;
        const double t = -1.0 + 2.0 * j / n;
        ids[j * (n + 1) + i] = vertex(normal + s * u + t * w);
      }
    }
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        const int v00 = ids[j * (n + 1) + i];
        const int v10 = ids[j * (n + 1) + i + 1];
        const int v11 = ids[(j + 1) * (n + 1) + i + 1];
        const int v01 = ids[(j + 1) * (n + 1) + i];
        m.faces.push_back({v00, v10, v11});
        m.faces.push_back({v00, v11, v01});
      }
    }
  }
  return m;
}

TriMesh make_grid(int nx, int ny) {
  TriMesh m;
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      m.vertices.emplace_back(i, j, 0.0);
      m.uv.emplace_back(static_cast<double>(i) / nx, static_cast<double>(j) / ny);
    }
  }
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int v00 = j * (nx + 1) + i;
      const int v10 = v00 + 1;
      const int v01 = v00 + nx + 1;
      const int v11 = v01 + 1;
      m.faces.push_back({v00, v10, v11});
      m.faces.push_back({v00, v11, v01});
    }
  }
  return m;
}

}  // namespace cadtwin
