#pragma once

#include <cstdint>
#include <vector>

#include "cadtwin/appearance.hpp"
#include "cadtwin/camera.hpp"
#include "cadtwin/image.hpp"
#include "cadtwin/mesh.hpp"

namespace cadtwin {

struct RenderOptions {
  // Silhouette softness in pixels. 0 gives the hard coverage indicator.
  double softness = 1.0;
  bool specular = true;
  // Skip shading when only the mask is needed.
  bool shade = true;
};

// Soft coverage falls back to the hard value beyond this many softness units
// from the nearest outline edge (sigmoid(12) is within 6.2e-6 of 1).
inline constexpr double kSoftBandWidth = 12.0;

struct RenderOutput {
  Image color;  // 3 channels, zero where nothing is hit
  Image mask;   // soft coverage in [0, 1]
  Image depth;  // camera-frame z in meters, 0 on a miss
};

// Per-pixel visibility plus the silhouette data the backward pass needs.
struct Rasterization {
  int width = 0;
  int height = 0;
  std::vector<int> face;        // -1 on a miss
  std::vector<Vec3> barycentric;
  std::vector<double> ray_t;    // hit = center + ray_t * world ray direction
  std::vector<double> depth;
  std::vector<std::uint8_t> hard;
  std::vector<double> coverage;
  // Outline edges: silhouette edges whose outer side is not covered by any
  // front-facing triangle.
  std::vector<std::array<int, 2>> outline_edges;  // vertex ids, ordered so the covered side is on the left
  std::vector<int> nearest_edge;  // per pixel index into outline_edges, -1 when outside the soft band
  std::vector<double> edge_distance;
  std::vector<Vec3> camera_vertices;
  std::vector<Vec2> screen_vertices;
  std::vector<std::uint8_t> front_facing;
  double softness = 0.0;

  std::size_t pixel(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

// Z-buffered visibility of front-facing triangles at pixel centers and the
// sigmoid-softened coverage sigmoid(+-d / softness), where d is the screen
// distance to the nearest outline edge and the sign is + inside.
Rasterization rasterize(const TriMesh& mesh, const Adjacency& adjacency, const Camera& camera, double softness);

RenderOutput render(const TriMesh& mesh, const Adjacency& adjacency, const AppearanceParams& app,
                    const Camera& camera, const RenderOptions& options, Rasterization* cache = nullptr);

struct RenderGrad {
  std::vector<Vec3> vertices;  // world frame
  PoseGrad camera;
  Texture kd;   // same shape as app.kd
  Texture orm;  // same shape as app.orm
  std::vector<Vec3> radiance;
};

// Backpropagates dL/dcolor (3 per pixel) and dL/dmask (1 per pixel) through a
// forward pass whose rasterization was cached. Either gradient image may be
// empty. Accumulation order is fixed, so results do not depend on threads.
RenderGrad render_backward(const Rasterization& raster, const TriMesh& mesh, const AppearanceParams& app,
                           const Camera& camera, const RenderOptions& options, const Image& grad_color,
                           const Image& grad_mask);

}  // namespace cadtwin
