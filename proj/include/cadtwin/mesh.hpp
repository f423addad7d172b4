#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/SparseCore>

#include "cadtwin/types.hpp"

namespace cadtwin {

using Face = std::array<int, 3>;

// Indexed triangle mesh in meters. Faces are counter-clockwise when seen from
// outside. uv is either empty or holds one coordinate per vertex.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<Vec2> uv;

  bool has_uv() const { return !uv.empty(); }
  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t face_count() const { return faces.size(); }

  // Checks index range, degenerate faces and uv size. Throws MeshError.
  void validate() const;

  Vec3 face_normal_unnormalized(std::size_t f) const;
  double face_area(std::size_t f) const;
  double total_area() const;
};

struct Adjacency {
  // Undirected edges (a < b), sorted lexicographically.
  std::vector<std::array<int, 2>> edges;
  // The one or two faces incident to each edge; second entry is -1 on a boundary.
  std::vector<std::array<int, 2>> edge_faces;
  // Faces sharing an edge, each unordered pair once (first < second).
  std::vector<std::array<int, 2>> face_pairs;
  // Sorted neighbor vertices of each vertex.
  std::vector<std::vector<int>> one_ring;
};

// Throws MeshError naming the offending edge if any edge has more than two faces.
Adjacency build_adjacency(const TriMesh& mesh);

// Combinatorial graph Laplacian: L[i][i] = degree(i), L[i][j] = -1 per edge.
Eigen::SparseMatrix<double> graph_laplacian(const TriMesh& mesh);
Eigen::SparseMatrix<double> graph_laplacian(std::size_t vertex_count, const Adjacency& adjacency);

struct SurfaceSample {
  Vec3 position;
  int face_index = -1;
  Vec3 barycentric;
};

// Area-weighted uniform samples. Sample i depends only on (seed, i), so the
// result is identical for any thread count. Throws MeshError on zero area.
std::vector<SurfaceSample> sample_surface(const TriMesh& mesh, std::size_t count, std::uint64_t seed);

// Euler characteristic V - E + F.
int euler_characteristic(const TriMesh& mesh, const Adjacency& adjacency);

// Appends b to a, offsetting b's face indices.
void append_mesh(TriMesh& a, const TriMesh& b);

// Small procedural meshes used by fixtures and tests.
TriMesh make_icosphere(int subdivisions, double radius = 1.0);
// Closed cylinder with axis along +y, unit radius, height 1 centered at origin.
TriMesh make_cylinder(int segments);
// Cube [-1,1]^3 with each face split into n x n quads, two triangles each.
TriMesh make_subdivided_cube(int n);
// Planar grid on z = 0 covering [0,nx] x [0,ny] with unit spacing.
TriMesh make_grid(int nx, int ny);

}  // namespace cadtwin
