#include "cadtwin/camera.hpp"

#include "cadtwin/error.hpp"

namespace cadtwin {

void Camera::validate() const {
  const Intrinsics& k = intrinsics;
  if (!(k.fx > 0.0) || !(k.fy > 0.0)) throw ArgumentError("camera: focal lengths must be positive");
  if (k.width <= 0 || k.height <= 0) throw ArgumentError("camera: image size must be positive");
  if (!(k.cx > 0.0 && k.cx < k.width && k.cy > 0.0 && k.cy < k.height)) {
    throw ArgumentError("camera: principal point outside the image");
  }
}

Vec3 Camera::center() const {
  const Mat3 r = extrinsics.rotation();
  return -(r.transpose() * extrinsics.translation);
}

Vec3 Camera::ray_camera(double px, double py) const {
  return {(px - intrinsics.cx) / intrinsics.fx, (py - intrinsics.cy) / intrinsics.fy, 1.0};
}

Projection project_camera_frame(const Intrinsics& k, const Vec3& p) {
  Projection out;
  out.depth = p.z();
  if (!(p.z() > kNearDepth)) return out;
  out.pixel = Vec2(k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy);
  out.valid = true;
  return out;
}

Projection project(const Camera& camera, const Vec3& world_point) {
  return project_camera_frame(camera.intrinsics, camera.extrinsics.apply(world_point));
}

Camera look_at(const Intrinsics& k, const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-9) right = forward.cross(Vec3::UnitX().cross(forward).norm() > 1e-6 ? Vec3::UnitX() : Vec3::UnitY());
  right.normalize();
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.row(0) = right;
  r.row(1) = down;
  r.row(2) = forward;
  Camera cam;
  cam.intrinsics = k;
  cam.extrinsics = Pose6D::from_rt(r, -(r * eye));
  return cam;
}

}  // namespace cadtwin
