#pragma once

#include <limits>
#include <vector>

#include <nlohmann/json.hpp>

#include "cadtwin/image.hpp"
#include "cadtwin/lidar.hpp"
#include "cadtwin/mesh.hpp"

namespace cadtwin {

struct ImageMetrics {
  double mse = 0.0;
  double psnr = 0.0;  // +infinity when mse is 0
  double ssim = 1.0;
};

// PSNR peak value; images are normalized to [0, 1].
inline constexpr double kPsnrPeak = 1.0;

// MSE and PSNR over foreground pixels (mask > 0.5) and all channels. SSIM uses
// an 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2, windows
// centered on foreground pixels and truncated at the image border with
// renormalized weights; averaged over centers and channels.
// Throws ArgumentError on shape mismatch or an empty mask.
ImageMetrics masked_image_metrics(const Image& sim, const Image& real, const Image& mask);

struct LidarMetrics {
  double l2_error = 0.0;  // mean |t_sim - t_real| over hit rays, meters
  double hit_rate = 0.0;
  double chamfer = 0.0;    // symmetric mean squared Chamfer, m^2
  double hausdorff = 0.0;  // meters
  std::size_t rays = 0;
  std::size_t hits = 0;
};

// Casts a ray from each held-out point's origin toward the point against mesh
// (already placed in the cloud's frame). Chamfer and Hausdorff compare the
// simulated hit points with reference; both are infinite when nothing is hit.
LidarMetrics lidar_eval(const TriMesh& mesh, const PointCloud& held_out, const PointCloud& reference,
                        double max_range = 120.0);

// Mean over both directions of the mean squared nearest distance.
double symmetric_chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b);
double hausdorff(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

// Report JSON with the perceptual metrics present as "n/a".
nlohmann::json metrics_json(const ImageMetrics& m);
nlohmann::json metrics_json(const LidarMetrics& m);

}  // namespace cadtwin
