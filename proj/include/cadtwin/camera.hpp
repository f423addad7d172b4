#pragma once

#include "cadtwin/rotation.hpp"
#include "cadtwin/types.hpp"

namespace cadtwin {

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.5;
  double cy = 0.5;
  int width = 1;
  int height = 1;
};

// Pinhole camera; extrinsics map world (actor-frame) points into the camera
// frame, +z forward, +x right, +y down. Pixel (i, j) covers [i, i+1) x [j, j+1)
// and is sampled at its center.
struct Camera {
  Intrinsics intrinsics;
  Pose6D extrinsics;

  // Throws ArgumentError unless fx, fy > 0 and the principal point is inside the image.
  void validate() const;
  // Camera center in world coordinates.
  Vec3 center() const;
  // Unnormalized camera-frame ray direction (x, y, 1) through a continuous pixel coordinate.
  Vec3 ray_camera(double px, double py) const;
};

inline constexpr double kNearDepth = 1e-6;

struct Projection {
  Vec2 pixel = Vec2::Zero();
  double depth = 0.0;
  bool valid = false;  // false when depth <= kNearDepth
};

Projection project(const Camera& camera, const Vec3& world_point);
Projection project_camera_frame(const Intrinsics& k, const Vec3& camera_point);

// Camera at eye looking at target with the given world up vector.
Camera look_at(const Intrinsics& k, const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ());

}  // namespace cadtwin
