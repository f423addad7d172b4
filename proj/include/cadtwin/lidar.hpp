#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "cadtwin/mesh.hpp"
#include "cadtwin/rotation.hpp"

namespace cadtwin {

// Spinning sensor: one ray per (beam, azimuth step) per frame. Frame poses map
// the sensor frame (x forward, z up) into the world.
struct LidarPattern {
  std::vector<double> beams;  // elevation angles in radians, ascending
  double azimuth_step = 0.0;  // radians
  double max_range = 120.0;   // meters
  std::vector<Pose6D> frames;

  std::size_t azimuth_count() const;
  // Sensor-frame unit direction of (beam, azimuth index).
  Vec3 direction(std::size_t beam, std::size_t azimuth) const;
  // Throws ArgumentError on unsorted beams, a step outside (0, 2pi) or a non-positive range.
  void validate() const;
};

nlohmann::json to_json(const LidarPattern& p);
LidarPattern pattern_from_json(const nlohmann::json& j);
LidarPattern load_pattern(const std::filesystem::path& path);

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<double> intensity;  // empty or one per point, in [0, 1]
  std::vector<Vec3> ray_origin;   // empty or one per point
  std::vector<int> frame;         // empty or one per point

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_intensity() const { return !intensity.empty(); }
  bool has_origins() const { return !ray_origin.empty(); }
  // Throws NumericError on non-finite data or intensity outside [0, 1], ArgumentError on size mismatch.
  void validate() const;
  void append(const PointCloud& other, std::size_t index);
};

// Binary PLY with x, y, z and, when present, intensity, ox, oy, oz, frame.
void write_cloud(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_cloud(const std::filesystem::path& path);
PointCloud transform_cloud(const PointCloud& cloud, const Pose6D& pose);

struct RayHit {
  double t = 0.0;
  int face = -1;
  Vec3 barycentric = Vec3::Zero();
};

// Watertight ray/triangle test (two-sided). Returns a hit with t in (0, max_t].
std::optional<RayHit> intersect_triangle(const Vec3& origin, const Vec3& direction, const Vec3& a, const Vec3& b,
                                         const Vec3& c, double max_t);

// Bounding-volume hierarchy over a mesh's triangles, median split on the
// longest centroid axis. Ties in t resolve to the lower face index.
class Bvh {
 public:
  struct Node {
    Eigen::AlignedBox3d box;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range into face_order
    bool leaf() const { return left < 0; }
  };

  explicit Bvh(const TriMesh& mesh, int leaf_size = 4);
  std::optional<RayHit> cast(const Vec3& origin, const Vec3& direction, double max_range) const;
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<int>& face_order() const { return order_; }
  const TriMesh& mesh() const { return mesh_; }

 private:
  int build(int begin, int end);
  TriMesh mesh_;
  std::vector<Node> nodes_;
  std::vector<int> order_;
  std::vector<Eigen::AlignedBox3d> face_boxes_;
  int leaf_size_;
};

inline std::optional<RayHit> cast_ray(const Bvh& bvh, const Vec3& origin, const Vec3& direction, double max_range) {
  return bvh.cast(origin, direction, max_range);
}
// Reference intersection over every triangle.
std::optional<RayHit> cast_ray_brute_force(const TriMesh& mesh, const Vec3& origin, const Vec3& direction,
                                           double max_range);

inline constexpr double kOcclusionMargin = 0.05;

// Ray-casts the pattern against mesh placed by pose. Background points whose
// ray hits the actor closer than their own range minus kOcclusionMargin are
// dropped; survivors keep their order and the actor returns follow in
// (frame, beam, azimuth) order. vertex_intensity, when given, is interpolated
// at each hit.
PointCloud simulate_sweep(const TriMesh& mesh, const Pose6D& pose, const LidarPattern& pattern,
                          const PointCloud* background = nullptr, const std::vector<double>* vertex_intensity = nullptr);

// Mean intensity of the 10 nearest cloud points (all points when fewer).
std::vector<double> retrieve_intensity(const TriMesh& mesh, const PointCloud& cloud, std::size_t neighbors = 10);

struct VoxelDownsample {
  PointCloud cloud;                 // one centroid per occupied voxel, in first-seen order
  std::vector<std::size_t> kept;    // first input index of each voxel
  std::vector<std::size_t> held_out;  // every other input index, ascending
};
VoxelDownsample voxel_downsample(const PointCloud& cloud, double resolution);

}  // namespace cadtwin
