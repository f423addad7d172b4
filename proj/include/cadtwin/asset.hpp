#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cadtwin/appearance.hpp"
#include "cadtwin/rotation.hpp"
#include "cadtwin/vehicle.hpp"

namespace cadtwin {

struct Provenance {
  std::string scene_id;
  std::string config_hash;
  std::string trace_digest;
};

// A reconstructed vehicle. Geometry lives in the vehicle frame; object_pose
// places it in the scene's actor frame.
struct FittedAsset {
  VehicleMesh vehicle;
  AppearanceParams appearance;
  std::vector<double> vertex_intensity;  // empty or one per assembled vertex
  Pose6D object_pose;
  Eigen::VectorXd latent;  // shape-space code the fit started from
  Provenance provenance;

  // Throws on invalid geometry, missing textures or empty provenance.
  void validate() const;
  TriMesh assembled() const { return assemble(vehicle); }
  // Assembled mesh moved by object_pose.
  TriMesh placed() const;
};

inline constexpr std::uint16_t kAssetMajor = 1;
inline constexpr std::uint16_t kAssetMinor = 0;

// ".cta" container: "CTAR", u16 major, u16 minor, u32 entry count, then per
// entry a u64-length name, u64 size, u32 crc32 and the bytes; a trailing crc32
// covers everything before it. Entries: params.json, body.ply, wheel.ply and
// float64 blobs kd.f64, orm.f64, env.f64, intensity.f64.
void save_asset(const std::filesystem::path& path, const FittedAsset& asset);
// Throws FormatError on a bad magic, major version mismatch or checksum
// failure. A newer minor version loads with a warning.
FittedAsset load_asset(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

// Returns dst's geometry with src's appearance. Throws MeshError unless both
// share body and wheel topology and uv.
FittedAsset transfer_texture(const FittedAsset& src, const FittedAsset& dst);

}  // namespace cadtwin
