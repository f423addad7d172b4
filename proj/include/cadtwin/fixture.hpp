#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cadtwin/asset.hpp"
#include "cadtwin/lidar.hpp"
#include "cadtwin/scene.hpp"
#include "cadtwin/shape_space.hpp"

namespace cadtwin {

// Vertex-aligned exemplars in the merged body + wheel-template layout. The
// vehicle frame has its origin on the ground below the body center, x forward,
// y left, z up.
struct ExemplarSet {
  std::vector<TriMesh> meshes;
  std::vector<std::uint8_t> labels;
  WheelRig rig;
};

// Procedural sedan-like bodies (a deformed subdivided cube with a cabin bump)
// and a dished cylinder wheel template, varied per exemplar.
ExemplarSet make_synthetic_exemplars(int count, std::uint64_t seed, int body_subdivisions = 8,
                                     int wheel_segments = 16);

// Directory layout: exemplar_NNN.ply (x, y, z, u, v, part and faces) plus
// rig.json. Files are read in lexicographic order.
void write_exemplars(const std::filesystem::path& dir, const ExemplarSet& set);
// Throws IoError on a missing directory, FormatError when no exemplar is found
// or part labels differ between files.
ExemplarSet read_exemplars(const std::filesystem::path& dir);

struct FixtureNoise {
  double pose_sigma = 0.0;  // meters, per axis of the box translation
  double mask_sigma = 0.0;  // pixels, contour displacement
};

struct FixtureConfig {
  std::uint64_t seed = 0;
  int view_count = 20;
  int heldout_views = 4;
  std::size_t lidar_points = 5000;
  int lidar_frames = 4;
  int image_size = 128;
  int texture_size = 64;
  int env_directions = 32;
  FixtureNoise noise;
  LidarPattern pattern;  // sensor frames are generated; pattern.frames is ignored
  std::string scene_id = "fixture";
};

struct Fixture {
  SceneObservations scene;        // world frame, noisy box and masks
  FittedAsset ground_truth;       // vehicle frame coincides with the true box frame
  Eigen::VectorXd z_gt;
  Pose6D true_box;                // true box frame -> world
  std::vector<SceneFrame> held_out;  // clean world-frame views not in the scene
  // Ground-truth vehicle frame -> actor (noisy box) frame.
  Pose6D object_in_actor() const { return scene.box.pose.inverse().compose(true_box); }
};

// Renders a decoded ground-truth vehicle from randomized viewpoints, ray-casts
// LiDAR sweeps and applies the configured noise. Images are quantized to 8
// bits and masks are hard.
Fixture generate_fixture(const ShapeSpace& space, const FixtureConfig& cfg);

// Displaces the mask contour by a smooth random field of standard deviation
// sigma pixels, clipped to 3 sigma. sigma = 0 returns the input.
Image perturb_mask(const Image& mask, double sigma, std::uint64_t seed);

}  // namespace cadtwin
