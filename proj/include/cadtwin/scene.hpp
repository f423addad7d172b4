#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cadtwin/camera.hpp"
#include "cadtwin/image.hpp"
#include "cadtwin/lidar.hpp"

namespace cadtwin {

struct SceneFrame {
  std::string id;
  std::filesystem::path image_path;  // relative to the manifest
  std::filesystem::path mask_path;
  Image image;  // RGB in [0, 1]
  Image mask;   // one channel in [0, 1]
  Camera camera;
};

// Coarse detection box; pose maps box coordinates (x forward, z up) to the world.
struct ObjectBox {
  Pose6D pose;
  Vec3 dimensions = Vec3::Ones();
};

struct SceneObservations {
  std::string scene_id;
  std::vector<SceneFrame> frames;
  PointCloud cloud;  // aggregated
  ObjectBox box;
  nlohmann::json metadata = nlohmann::json::object();
  // True once cameras and cloud are expressed in the box (actor) frame.
  bool actor_frame = false;

  // Throws ArgumentError when there is neither a frame nor a point.
  void validate() const;
};

inline constexpr int kSceneSchemaMajor = 1;
inline constexpr int kSceneSchemaMinor = 0;

// Manifest JSON:
// {"version": "1.0", "scene_id": str,
//  "frames": [{"id", "image", "mask", "camera": {"intrinsics", "extrinsics"}}],
//  "cloud": "cloud.ply" (optional),
//  "object_box": {"pose": {"rot6", "translation"}, "dimensions": [l, w, h]},
//  "metadata": {...}}
// Paths are relative to the manifest; cameras and cloud are in world coordinates.
SceneObservations read_scene(const std::filesystem::path& manifest);
// Same, then converted to the actor frame.
SceneObservations load_scene(const std::filesystem::path& manifest);
// Writes manifest, PNGs and cloud next to it. Requires world-frame data.
void save_scene(const std::filesystem::path& manifest, const SceneObservations& world);
SceneObservations to_actor_frame(const SceneObservations& world);

}  // namespace cadtwin
