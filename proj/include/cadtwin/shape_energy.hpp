#pragma once

#include <vector>

#include "cadtwin/mesh.hpp"

namespace cadtwin {

struct ShapeEnergy {
  double normal = 0.0;
  double edge = 0.0;
  double total() const { return normal + edge; }
};

// Normal consistency mean over adjacent face pairs of (1 - n.n')^2 plus mean
// squared edge length. When grad is non-null it is resized to the vertex count
// and receives d(normal + edge)/dV. Throws NumericError on a zero-area face.
ShapeEnergy e_shape(const TriMesh& mesh, const Adjacency& adjacency, std::vector<Vec3>* grad = nullptr);

// Deformation form of the same two terms measured against a rest shape:
// mean ((1 - n.n') - (1 - n0.n0'))^2 and mean |(v - v') - (v0 - v0')|^2.
// Zero exactly at the rest shape and under translation.
ShapeEnergy e_shape_relative(const TriMesh& mesh, const std::vector<Vec3>& rest, const Adjacency& adjacency,
                             std::vector<Vec3>* grad = nullptr);

}  // namespace cadtwin
