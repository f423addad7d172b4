#include "cadtwin/vehicle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cadtwin/error.hpp"
#include "cadtwin/rotation.hpp"

namespace cadtwin {
namespace {

Mat3 rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}

Mat3 rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}

Mat3 rot_z_derivative(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << -s, -c, 0, c, -s, 0, 0, 0, 0;
  return r;
}

}  // namespace

bool VehicleMesh::is_front(int k) const {
  return std::find(front_wheels.begin(), front_wheels.end(), k) != front_wheels.end();
}

void VehicleMesh::validate() const {
  if (wheel_count() < 2) throw ArgumentError("vehicle needs at least two wheels, got " + std::to_string(wheel_count()));
  if (!(params.radius > 0.0) || !(params.thickness > 0.0)) {
    throw ArgumentError("wheel scale components must be positive");
  }
  for (int k : front_wheels) {
    if (k < 0 || k > 1 || k >= wheel_count()) {
      throw ArgumentError("front wheel index " + std::to_string(k) + " is not one of the first two slots");
    }
  }
  if (!spin.empty() && static_cast<int>(spin.size()) != wheel_count()) {
    throw ArgumentError("spin vector size does not match wheel count");
  }
}

Vec3 WheelTransform::apply(const Vec3& v) const {
  return pose_rotation * (steer * scale.cwiseProduct(spin * v) + offset) + pose_translation;
}

WheelTransform wheel_transform(const VehicleMesh& vm, int k) {
  WheelTransform t;
  const double angle = vm.spin.empty() ? 0.0 : vm.spin[k];
  t.spin = rot_y(angle);
  const bool front = vm.is_front(k);
  t.steer = front ? rot_z(vm.params.steer) : Mat3::Identity();
  t.scale = vm.params.scale();
  t.offset = front ? vm.params.front_offset : vm.params.back_offset;
  t.pose_rotation = vm.wheel_poses[k].linear();
  t.pose_translation = vm.wheel_poses[k].translation();
  return t;
}

TriMesh assemble(const VehicleMesh& vm) {
  vm.validate();
  TriMesh out = vm.body;
  const bool uv = vm.body.has_uv() && vm.wheel_template.has_uv();
  if (!uv) out.uv.clear();
  const std::size_t nw = vm.wheel_template.vertices.size();
  out.vertices.reserve(vm.body.vertices.size() + nw * vm.wheel_count());
  for (int k = 0; k < vm.wheel_count(); ++k) {
    const WheelTransform t = wheel_transform(vm, k);
    const int offset = static_cast<int>(out.vertices.size());
    for (const Vec3& v : vm.wheel_template.vertices) out.vertices.push_back(t.apply(v));
    if (uv) out.uv.insert(out.uv.end(), vm.wheel_template.uv.begin(), vm.wheel_template.uv.end());
    for (const Face& f : vm.wheel_template.faces) out.faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
  }
  return out;
}

AssembleGrad assemble_backward(const VehicleMesh& vm, const std::vector<Vec3>& grad_assembled) {
  const std::size_t nb = vm.body.vertices.size();
  const std::size_t nw = vm.wheel_template.vertices.size();
  if (grad_assembled.size() != nb + nw * vm.wheel_count()) {
    throw ArgumentError("assemble_backward: gradient size does not match the assembled mesh");
  }
  AssembleGrad g;
  g.body.assign(grad_assembled.begin(), grad_assembled.begin() + static_cast<std::ptrdiff_t>(nb));
  g.wheel_template.assign(nw, Vec3::Zero());
  for (int k = 0; k < vm.wheel_count(); ++k) {
    const WheelTransform t = wheel_transform(vm, k);
    const bool front = vm.is_front(k);
    const Mat3 dsteer = front ? rot_z_derivative(vm.params.steer) : Mat3::Zero();
    for (std::size_t i = 0; i < nw; ++i) {
      const Vec3& gx = grad_assembled[nb + k * nw + i];
      const Vec3 w = t.spin * vm.wheel_template.vertices[i];
      const Vec3 q = t.scale.cwiseProduct(w);
      const Vec3 gy = t.pose_rotation.transpose() * gx;
      if (front) {
        g.params.front_offset += gy;
        g.params.steer += gy.dot(dsteer * q);
      } else {
        g.params.back_offset += gy;
      }
      const Vec3 gq = t.steer.transpose() * gy;
      const Vec3 gs = gq.cwiseProduct(w);
      g.params.radius += gs.x() + gs.z();
      g.params.thickness += gs.y();
      g.wheel_template[i] += t.spin.transpose() * t.scale.cwiseProduct(gq);
    }
  }
  return g;
}

VehicleMesh animate(const VehicleMesh& vm, double forward_distance, double steer) {
  VehicleMesh out = vm;
  if (out.spin.empty()) out.spin.assign(out.wheel_count(), 0.0);
  const double increment = forward_distance / vm.params.radius;
  for (double& s : out.spin) s += increment;
  out.params.steer = steer;
  return out;
}

}  // namespace cadtwin
