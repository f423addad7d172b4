#include "cadtwin/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "cadtwin/error.hpp"
#include "cadtwin/kdtree.hpp"
#include "cadtwin/parallel.hpp"

namespace cadtwin {
namespace {
constexpr int kRadius = 5;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
}  // namespace

ImageMetrics masked_image_metrics(const Image& sim, const Image& real, const Image& mask) {
  if (!sim.same_shape(real)) throw ArgumentError("image metrics: images differ in shape");
  if (mask.width != sim.width || mask.height != sim.height) throw ArgumentError("image metrics: mask shape differs");
  const int w = sim.width, h = sim.height, ch = sim.channels;
  std::vector<std::size_t> fg;
  for (std::size_t i = 0; i < mask.pixel_count(); ++i) {
    if (mask.data[i * mask.channels] > 0.5) fg.push_back(i);
  }
  if (fg.empty()) throw ArgumentError("image metrics: empty foreground mask");

  ImageMetrics m;
  double se = 0.0;
  for (std::size_t i : fg) {
    for (int c = 0; c < ch; ++c) {
      const double d = sim.data[i * ch + c] - real.data[i * ch + c];
      se += d * d;
    }
  }
  m.mse = se / static_cast<double>(fg.size() * ch);
  m.psnr = m.mse > 0.0 ? 10.0 * std::log10(kPsnrPeak * kPsnrPeak / m.mse) : std::numeric_limits<double>::infinity();

  double g1[2 * kRadius + 1];
  for (int k = -kRadius; k <= kRadius; ++k) g1[k + kRadius] = std::exp(-0.5 * k * k / (kSigma * kSigma));

  std::vector<double> partial(chunk_count(fg.size(), 256), 0.0);
  parallel_chunks(fg.size(), 256, [&](std::size_t chunk, std::size_t b, std::size_t e) {
    double acc = 0.0;
    for (std::size_t n = b; n < e; ++n) {
      const int cx = static_cast<int>(fg[n] % w), cy = static_cast<int>(fg[n] / w);
      for (int c = 0; c < ch; ++c) {
        double wsum = 0.0, mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
        for (int dy = -kRadius; dy <= kRadius; ++dy) {
          const int y = cy + dy;
          if (y < 0 || y >= h) continue;
          for (int dx = -kRadius; dx <= kRadius; ++dx) {
            const int x = cx + dx;
            if (x < 0 || x >= w) continue;
            const double wt = g1[dy + kRadius] * g1[dx + kRadius];
            const double a = sim.at(x, y, c), r = real.at(x, y, c);
            wsum += wt;
            mx += wt * a;
            my += wt * r;
            sxx += wt * a * a;
            syy += wt * r * r;
            sxy += wt * a * r;
          }
        }
        mx /= wsum;
        my /= wsum;
        const double vx = sxx / wsum - mx * mx;
        const double vy = syy / wsum - my * my;
        const double cxy = sxy / wsum - mx * my;
        acc += ((2 * mx * my + kC1) * (2 * cxy + kC2)) / ((mx * mx + my * my + kC1) * (vx + vy + kC2));
      }
    }
    partial[chunk] = acc;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  m.ssim = total / static_cast<double>(fg.size() * ch);
  return m;
}

double symmetric_chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) return std::numeric_limits<double>::infinity();
  const KdTree ta(a), tb(b);
  double sa = 0.0, sb = 0.0;
  for (const auto& p : a) sa += tb.nearest(p).dist2;
  for (const auto& p : b) sb += ta.nearest(p).dist2;
  return 0.5 * (sa / static_cast<double>(a.size()) + sb / static_cast<double>(b.size()));
}

double hausdorff(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) return std::numeric_limits<double>::infinity();
  const KdTree ta(a), tb(b);
  double best = 0.0;
  for (const auto& p : a) best = std::max(best, tb.nearest(p).dist2);
  for (const auto& p : b) best = std::max(best, ta.nearest(p).dist2);
  return std::sqrt(best);
}

LidarMetrics lidar_eval(const TriMesh& mesh, const PointCloud& held_out, const PointCloud& reference,
                        double max_range) {
  if (!held_out.empty() && !held_out.has_origins()) throw ArgumentError("lidar_eval: held-out points need ray origins");
  const Bvh bvh(mesh);
  const std::size_t n = held_out.size();
  std::vector<std::optional<RayHit>> hits(n);
  std::vector<double> ranges(n, 0.0);
  std::vector<Vec3> dirs(n);
  parallel_chunks(n, 512, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const Vec3 d = held_out.points[i] - held_out.ray_origin[i];
      ranges[i] = d.norm();
      if (!(ranges[i] > 0.0)) continue;
      dirs[i] = d / ranges[i];
      hits[i] = bvh.cast(held_out.ray_origin[i], dirs[i], max_range);
    }
  });
  LidarMetrics m;
  m.rays = n;
  std::vector<Vec3> sim;
  double err = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!hits[i]) continue;
    ++m.hits;
    err += std::abs(hits[i]->t - ranges[i]);
    sim.push_back(held_out.ray_origin[i] + hits[i]->t * dirs[i]);
  }
  m.hit_rate = n > 0 ? static_cast<double>(m.hits) / static_cast<double>(n) : 0.0;
  m.l2_error = m.hits > 0 ? err / static_cast<double>(m.hits) : 0.0;
  m.chamfer = symmetric_chamfer(sim, reference.points);
  m.hausdorff = hausdorff(sim, reference.points);
  return m;
}

nlohmann::json metrics_json(const ImageMetrics& m) {
  nlohmann::json j;
  j["mse"] = m.mse;
  if (std::isinf(m.psnr)) {
    j["psnr"] = "inf";
  } else {
    j["psnr"] = m.psnr;
  }
  j["ssim"] = m.ssim;
  j["lpips"] = "n/a";
  j["fid"] = "n/a";
  return j;
}

nlohmann::json metrics_json(const LidarMetrics& m) {
  auto num = [](double v) -> nlohmann::json { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json("inf"); };
  return {{"l2_error_m", m.l2_error}, {"hit_rate", m.hit_rate},        {"chamfer_m2", num(m.chamfer)},
          {"hausdorff_m", num(m.hausdorff)}, {"rays", m.rays},         {"hits", m.hits},
          {"chamfer_convention", "mean of squared nearest distances, averaged over both directions"}};
}

}  // namespace cadtwin
