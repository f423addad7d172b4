#pragma once

#include <nlohmann/json.hpp>

#include "cadtwin/camera.hpp"
#include "cadtwin/shape_space.hpp"
#include "cadtwin/vehicle.hpp"

namespace cadtwin {

// JSON helpers. Readers throw FormatError on missing keys or wrong shapes.
nlohmann::json to_json(const Vec3& v);
Vec3 vec3_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Mat3& m);  // row-major nested arrays
Mat3 mat3_from_json(const nlohmann::json& j);

// {"rotation": [[...]], "translation": [...]}
nlohmann::json to_json(const Eigen::Isometry3d& t);
Eigen::Isometry3d isometry_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Pose6D& p);
Pose6D pose_from_json(const nlohmann::json& j);

nlohmann::json to_json(const WheelParams& p);
WheelParams wheel_params_from_json(const nlohmann::json& j);

nlohmann::json to_json(const WheelRig& rig);
WheelRig rig_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Intrinsics& k);
Intrinsics intrinsics_from_json(const nlohmann::json& j);

// {"intrinsics": {...}, "extrinsics": pose}; extrinsics map world to camera.
nlohmann::json to_json(const Camera& c);
Camera camera_from_json(const nlohmann::json& j);

}  // namespace cadtwin
