#include "cadtwin/rotation.hpp"

#include <cmath>
#include <string>

#include "cadtwin/error.hpp"

namespace cadtwin {
namespace {

struct GramSchmidt {
  Vec3 a, b, c1, d, c2, c3;
  double norm_a = 0.0;
  double norm_d = 0.0;
  double b_dot_c1 = 0.0;
};

GramSchmidt orthonormalize(const Vec6& rot6) {
  GramSchmidt gs;
  gs.a = rot6.head<3>();
  gs.b = rot6.tail<3>();
  if (!gs.a.allFinite() || !gs.b.allFinite()) throw NumericError("rot6d: non-finite input");
  gs.norm_a = gs.a.norm();
  if (gs.norm_a < 1e-12) throw NumericError("rot6d: first column is zero");
  gs.c1 = gs.a / gs.norm_a;
  gs.b_dot_c1 = gs.b.dot(gs.c1);
  gs.d = gs.b - gs.b_dot_c1 * gs.c1;
  gs.norm_d = gs.d.norm();
  if (gs.norm_d <= 1e-9 * std::max(1.0, gs.b.norm())) {
    throw NumericError("rot6d: second column is parallel to the first");
  }
  gs.c2 = gs.d / gs.norm_d;
  gs.c3 = gs.c1.cross(gs.c2);
  return gs;
}

}  // namespace

Mat3 rot6d_to_matrix(const Vec6& rot6) {
  const GramSchmidt gs = orthonormalize(rot6);
  Mat3 r;
  r.col(0) = gs.c1;
  r.col(1) = gs.c2;
  r.col(2) = gs.c3;
  return r;
}

Vec6 rot6d_backward(const Vec6& rot6, const Mat3& grad_rotation) {
  const GramSchmidt gs = orthonormalize(rot6);
  const Vec3 g3 = grad_rotation.col(2);
  Vec3 g_c1 = grad_rotation.col(0) + gs.c2.cross(g3);
  const Vec3 g_c2 = grad_rotation.col(1) + g3.cross(gs.c1);

  const Vec3 g_d = (g_c2 - gs.c2 * gs.c2.dot(g_c2)) / gs.norm_d;
  const double g_s = -g_d.dot(gs.c1);
  g_c1 += -gs.b_dot_c1 * g_d + g_s * gs.b;
  const Vec3 g_b = g_d + g_s * gs.c1;
  const Vec3 g_a = (g_c1 - gs.c1 * gs.c1.dot(g_c1)) / gs.norm_a;

  Vec6 out;
  out << g_a, g_b;
  return out;
}

Vec6 matrix_to_rot6d(const Mat3& rotation) {
  Vec6 out;
  out << rotation.col(0), rotation.col(1);
  return out;
}

Pose6D Pose6D::from_rt(const Mat3& rotation, const Vec3& t) {
  Pose6D p;
  p.rot6 = matrix_to_rot6d(rotation);
  p.translation = t;
  return p;
}

Pose6D Pose6D::inverse() const {
  const Mat3 r = rotation();
  return from_rt(r.transpose(), -(r.transpose() * translation));
}

Pose6D Pose6D::compose(const Pose6D& other) const {
  const Mat3 r = rotation();
  return from_rt(r * other.rotation(), r * other.translation + translation);
}

Mat3 rotation_about_axis(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

}  // namespace cadtwin
