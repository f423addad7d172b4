#pragma once

#include <vector>

#include "cadtwin/mesh.hpp"
#include "cadtwin/types.hpp"

namespace cadtwin {

// Articulation of the shared wheel template. The template lives in its own
// canonical frame: axle along +y, forward +x, up +z, hub at the origin. The
// per-wheel scale is (radius, thickness, radius).
struct WheelParams {
  double radius = 1.0;
  double thickness = 1.0;
  Vec3 front_offset = Vec3::Zero();
  Vec3 back_offset = Vec3::Zero();
  double steer = 0.0;  // yaw of the front axle about +z, radians

  Vec3 scale() const { return {radius, thickness, radius}; }
};

struct WheelParamsGrad {
  double radius = 0.0;
  double thickness = 0.0;
  Vec3 front_offset = Vec3::Zero();
  Vec3 back_offset = Vec3::Zero();
  double steer = 0.0;
};

// Part-aware vehicle: body mesh plus K rigidly placed copies of one wheel.
struct VehicleMesh {
  TriMesh body;
  TriMesh wheel_template;
  std::vector<Eigen::Isometry3d> wheel_poses;  // T^k, wheel frame -> vehicle frame
  WheelParams params;
  std::vector<int> front_wheels;  // zero-based slots of steerable wheels, subset of {0, 1}
  std::vector<double> spin;       // per-wheel rolling angle; animation state only

  int wheel_count() const { return static_cast<int>(wheel_poses.size()); }
  bool is_front(int k) const;
  // Throws ArgumentError on K < 2, non-positive scale, bad front indices or spin size.
  void validate() const;
};

// Local transform of wheel k before T^k: x -> A (s * S x) + t where S spins
// about the axle, s is the wheel scale and A steers front wheels.
struct WheelTransform {
  Mat3 spin;
  Mat3 steer;
  Vec3 scale;
  Vec3 offset;
  Mat3 pose_rotation;
  Vec3 pose_translation;

  Vec3 apply(const Vec3& v) const;
};

WheelTransform wheel_transform(const VehicleMesh& vm, int k);

// Body vertices first, then wheel copies 0..K-1. Face and uv layout follow.
TriMesh assemble(const VehicleMesh& vm);

struct AssembleGrad {
  std::vector<Vec3> body;
  std::vector<Vec3> wheel_template;
  WheelParamsGrad params;
};

// Vector-Jacobian product of assemble with respect to body vertices, template
// vertices and wheel parameters.
AssembleGrad assemble_backward(const VehicleMesh& vm, const std::vector<Vec3>& grad_assembled);

// Rolls every wheel by forward_distance / radius and sets the steering yaw.
VehicleMesh animate(const VehicleMesh& vm, double forward_distance, double steer);

}  // namespace cadtwin
