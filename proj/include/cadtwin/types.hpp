#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace cadtwin {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;

}  // namespace cadtwin
