#include "cadtwin/serialization.hpp"

#include <string>

#include "cadtwin/error.hpp"

namespace cadtwin {
namespace {

const nlohmann::json& field(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw FormatError(std::string("missing JSON field '") + key + "'");
  return j.at(key);
}

double number(const nlohmann::json& j, const char* what) {
  if (!j.is_number()) throw FormatError(std::string("expected a number for ") + what);
  return j.get<double>();
}

}  // namespace

nlohmann::json to_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("expected a 3-vector");
  return {number(j[0], "vector"), number(j[1], "vector"), number(j[2], "vector")};
}

nlohmann::json to_json(const Mat3& m) {
  auto out = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) out.push_back(to_json(Vec3(m.row(r).transpose())));
  return out;
}

Mat3 mat3_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("expected a 3x3 matrix");
  Mat3 m;
  for (int r = 0; r < 3; ++r) m.row(r) = vec3_from_json(j[r]).transpose();
  return m;
}

nlohmann::json to_json(const Eigen::Isometry3d& t) {
  return {{"rotation", to_json(Mat3(t.linear()))}, {"translation", to_json(Vec3(t.translation()))}};
}

Eigen::Isometry3d isometry_from_json(const nlohmann::json& j) {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.linear() = mat3_from_json(field(j, "rotation"));
  t.translation() = vec3_from_json(field(j, "translation"));
  return t;
}

nlohmann::json to_json(const Pose6D& p) {
  return {{"rot6", std::vector<double>(p.rot6.data(), p.rot6.data() + 6)}, {"translation", to_json(p.translation)}};
}

Pose6D pose_from_json(const nlohmann::json& j) {
  Pose6D p;
  const auto& r = field(j, "rot6");
  if (!r.is_array() || r.size() != 6) throw FormatError("rot6 must have 6 entries");
  for (int i = 0; i < 6; ++i) p.rot6[i] = number(r[i], "rot6");
  p.translation = vec3_from_json(field(j, "translation"));
  return p;
}

nlohmann::json to_json(const WheelParams& p) {
  return {{"radius", p.radius},
          {"thickness", p.thickness},
          {"front_offset", to_json(p.front_offset)},
          {"back_offset", to_json(p.back_offset)},
          {"steer", p.steer}};
}

WheelParams wheel_params_from_json(const nlohmann::json& j) {
  WheelParams p;
  p.radius = number(field(j, "radius"), "radius");
  p.thickness = number(field(j, "thickness"), "thickness");
  p.front_offset = vec3_from_json(field(j, "front_offset"));
  p.back_offset = vec3_from_json(field(j, "back_offset"));
  p.steer = j.contains("steer") ? number(j["steer"], "steer") : 0.0;
  return p;
}

nlohmann::json to_json(const WheelRig& rig) {
  auto poses = nlohmann::json::array();
  for (const auto& t : rig.poses) poses.push_back(to_json(t));
  return {{"poses", poses}, {"front_wheels", rig.front_wheels}, {"defaults", to_json(rig.defaults)}};
}

WheelRig rig_from_json(const nlohmann::json& j) {
  WheelRig rig;
  const auto& poses = field(j, "poses");
  if (!poses.is_array()) throw FormatError("rig poses must be an array");
  for (const auto& p : poses) rig.poses.push_back(isometry_from_json(p));
  rig.front_wheels = field(j, "front_wheels").get<std::vector<int>>();
  rig.defaults = wheel_params_from_json(field(j, "defaults"));
  return rig;
}

nlohmann::json to_json(const Intrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

Intrinsics intrinsics_from_json(const nlohmann::json& j) {
  Intrinsics k;
  k.fx = number(field(j, "fx"), "fx");
  k.fy = number(field(j, "fy"), "fy");
  k.cx = number(field(j, "cx"), "cx");
  k.cy = number(field(j, "cy"), "cy");
  k.width = static_cast<int>(number(field(j, "width"), "width"));
  k.height = static_cast<int>(number(field(j, "height"), "height"));
  return k;
}

nlohmann::json to_json(const Camera& c) {
  return {{"intrinsics", to_json(c.intrinsics)}, {"extrinsics", to_json(c.extrinsics)}};
}

Camera camera_from_json(const nlohmann::json& j) {
  return {intrinsics_from_json(field(j, "intrinsics")), pose_from_json(field(j, "extrinsics"))};
}

}  // namespace cadtwin
