#pragma once

#include "cadtwin/types.hpp"

namespace cadtwin {

// Gram-Schmidt map from two stacked 3-vectors to a rotation matrix whose
// columns are (normalize(a), normalize(b - (b.c1)c1), c1 x c2).
// Throws NumericError when a is zero or b is parallel to a.
Mat3 rot6d_to_matrix(const Vec6& rot6);

// Vector-Jacobian product of rot6d_to_matrix: given dL/dR returns dL/drot6.
Vec6 rot6d_backward(const Vec6& rot6, const Mat3& grad_rotation);

// The first two columns of R, the canonical 6D encoding.
Vec6 matrix_to_rot6d(const Mat3& rotation);

// Rigid transform x -> R(rot6) x + translation.
struct Pose6D {
  Vec6 rot6 = (Vec6() << 1, 0, 0, 0, 1, 0).finished();
  Vec3 translation = Vec3::Zero();

  static Pose6D identity() { return {}; }
  static Pose6D from_rt(const Mat3& rotation, const Vec3& translation);

  Mat3 rotation() const { return rot6d_to_matrix(rot6); }
  Vec3 apply(const Vec3& x) const { return rotation() * x + translation; }
  Pose6D inverse() const;
  // (this * other)(x) = this(other(x))
  Pose6D compose(const Pose6D& other) const;
};

// Gradient with respect to a Pose6D: six rotation entries then the translation.
struct PoseGrad {
  Vec6 rot6 = Vec6::Zero();
  Vec3 translation = Vec3::Zero();

  PoseGrad& operator+=(const PoseGrad& o) {
    rot6 += o.rot6;
    translation += o.translation;
    return *this;
  }
};

Mat3 rotation_about_axis(const Vec3& axis, double angle);

}  // namespace cadtwin
