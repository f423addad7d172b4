#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "cadtwin/mesh.hpp"
#include "cadtwin/vehicle.hpp"

namespace cadtwin {

enum PartLabel : std::uint8_t { kBodyPart = 0, kWheelPart = 1 };

// Wheel placement shared by every vehicle decoded from one shape space.
struct WheelRig {
  std::vector<Eigen::Isometry3d> poses;
  std::vector<int> front_wheels{0, 1};
  WheelParams defaults;
};

// Body and wheel template merged into one vertex-aligned mesh, the vector the
// PCA operates on. labels holds one PartLabel per vertex.
struct PartMesh {
  TriMesh mesh;
  std::vector<std::uint8_t> labels;
};

PartMesh to_part_mesh(const VehicleMesh& vm);

// Index bookkeeping between the merged layout and the body / template meshes.
struct PartSplit {
  std::vector<int> body_vertices;   // merged indices of body vertices, ascending
  std::vector<int> wheel_vertices;  // merged indices of template vertices, ascending
  std::vector<Face> body_faces;     // in body-local indices
  std::vector<Face> wheel_faces;    // in template-local indices
};

// Throws MeshError when a face mixes parts.
PartSplit split_parts(const std::vector<Face>& faces, const std::vector<std::uint8_t>& labels);

VehicleMesh from_part_mesh(const TriMesh& merged, const std::vector<std::uint8_t>& labels, const WheelRig& rig);

// Linear shape space V = W z + mu over vertex-aligned exemplars. Vertex data is
// flattened as (x0, y0, z0, x1, ...).
struct ShapeSpace {
  Eigen::VectorXd mean;
  Eigen::MatrixXd basis;            // 3N x k, orthonormal columns
  Eigen::MatrixXd codes;            // k x exemplar count
  Eigen::VectorXd singular_values;  // of the centered exemplar matrix, descending
  std::vector<Face> faces;
  std::vector<Vec2> uv;
  std::vector<std::uint8_t> part_labels;
  Vec3 symmetry_axis = Vec3::UnitY();
  WheelRig rig;

  int k() const { return static_cast<int>(basis.cols()); }
  std::size_t vertex_count() const { return static_cast<std::size_t>(mean.size() / 3); }

  Eigen::VectorXd encode(const std::vector<Vec3>& vertices) const;
  // z may be shorter than k; missing entries are zero.
  std::vector<Vec3> decode_vertices(const Eigen::VectorXd& z) const;
  TriMesh decode_mesh(const Eigen::VectorXd& z) const;
  // Pulls a gradient on merged vertices back to the latent code: W^T g.
  Eigen::VectorXd pullback(const std::vector<Vec3>& grad_vertices) const;
  // Merged-layout mesh of the mean shape.
  TriMesh mean_mesh() const { return decode_mesh(Eigen::VectorXd()); }
};

// PCA over aligned exemplars with shared topology. k is clamped to the number
// of exemplars. Throws MeshError naming the first exemplar whose topology
// differs from exemplar 0.
ShapeSpace build_shape_space(const std::vector<TriMesh>& exemplars, const std::vector<std::uint8_t>& labels,
                             const WheelRig& rig, int k, const Vec3& symmetry_axis = Vec3::UnitY());

VehicleMesh decode(const ShapeSpace& space, const Eigen::VectorXd& z);

// Single-file binary archive; see README for the layout.
void save_shape_space(const std::filesystem::path& path, const ShapeSpace& space);
ShapeSpace load_shape_space(const std::filesystem::path& path);

}  // namespace cadtwin
