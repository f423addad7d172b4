#include "cadtwin/energy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cadtwin/error.hpp"
#include "cadtwin/kdtree.hpp"
#include "cadtwin/shading.hpp"

namespace cadtwin {

void EnergyWeights::validate() const {
  for (double w : {lambda_mask, lambda_lidar, lambda_shape, lambda_sym, lambda_app, lambda_mat, lambda_light}) {
    if (!(w >= 0.0)) throw ArgumentError("energy weights must be non-negative");
  }
  if (!(trim_fraction > 0.0 && trim_fraction <= 1.0)) throw ArgumentError("trim fraction must lie in (0, 1]");
  if (sample_count < 1) throw ArgumentError("sample count must be at least 1");
  if (!(huber_delta > 0.0)) throw ArgumentError("huber delta must be positive");
}

double huber(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

double huber_derivative(double r, double delta) { return std::clamp(r, -delta, delta); }

ColorTerm e_color(const RenderOutput& render, const Image& image, const Image& mask, double delta, Image* grad) {
  if (!render.color.same_shape(image) || render.depth.width != mask.width || render.depth.height != mask.height) {
    throw ArgumentError("e_color: render, image and mask dimensions differ");
  }
  ColorTerm out;
  std::vector<std::size_t> pixels;
  for (std::size_t i = 0; i < mask.data.size(); ++i) {
    if (mask.data[i] > 0.5 && render.depth.data[i] > 0.0) pixels.push_back(i);
  }
  if (grad) *grad = Image(image.width, image.height, 3);
  out.pixels = pixels.size();
  if (pixels.empty()) return out;
  const double norm = 1.0 / (3.0 * static_cast<double>(pixels.size()));
  double sum = 0.0;
  for (std::size_t i : pixels) {
    for (int c = 0; c < 3; ++c) {
      const double r = render.color.data[i * 3 + c] - image.data[i * 3 + c];
      sum += huber(r, delta);
      if (grad) grad->data[i * 3 + c] = huber_derivative(r, delta) * norm;
    }
  }
  out.value = sum * norm;
  return out;
}

double e_mask(const Image& rendered, const Image& mask, Image* grad) {
  if (!rendered.same_shape(mask)) throw ArgumentError("e_mask: mask dimensions differ");
  const double norm = 1.0 / static_cast<double>(mask.data.size());
  if (grad) *grad = Image(mask.width, mask.height, 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < mask.data.size(); ++i) {
    const double r = rendered.data[i] - mask.data[i];
    sum += r * r;
    if (grad) grad->data[i] = 2.0 * r * norm;
  }
  return sum * norm;
}

double e_lidar(const std::vector<Vec3>& cloud, const std::vector<Vec3>& samples, double trim,
               std::vector<Vec3>* grad_samples) {
  if (cloud.empty() || samples.empty()) throw ArgumentError("e_lidar: empty point set");
  if (!(trim > 0.0 && trim <= 1.0)) throw ArgumentError("e_lidar: trim fraction must lie in (0, 1]");
  const KdTree tree(samples);
  std::vector<KdTree::Hit> match(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) match[i] = tree.nearest(cloud[i]);
  std::vector<std::size_t> order(cloud.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return match[a].dist2 < match[b].dist2 || (match[a].dist2 == match[b].dist2 && a < b);
  });
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(trim * static_cast<double>(cloud.size()) + 1e-9)));
  if (grad_samples) grad_samples->assign(samples.size(), Vec3::Zero());
  double sum = 0.0;
  const double norm = 1.0 / static_cast<double>(keep);
  for (std::size_t r = 0; r < keep; ++r) {
    const std::size_t i = order[r];
    sum += match[i].dist2;
    if (grad_samples) (*grad_samples)[match[i].index] += 2.0 * norm * (samples[match[i].index] - cloud[i]);
  }
  return sum * norm;
}

double sobel_l1(const std::vector<double>& texels, int w, int h, int channel, std::vector<double>* grad,
                double scale) {
  static constexpr int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  auto at = [&](int x, int y) { return (static_cast<std::size_t>(y) * w + x) * 3 + channel; };
  double sum = 0.0;
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      double gx = 0.0, gy = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const double v = texels[at(x + dx, y + dy)];
          gx += kx[dy + 1][dx + 1] * v;
          gy += kx[dx + 1][dy + 1] * v;
        }
      }
      sum += std::abs(gx) + std::abs(gy);
      if (!grad) continue;
      const double sx = (gx > 0.0) - (gx < 0.0);
      const double sy = (gy > 0.0) - (gy < 0.0);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          (*grad)[at(x + dx, y + dy)] += scale * (sx * kx[dy + 1][dx + 1] + sy * kx[dx + 1][dy + 1]);
        }
      }
    }
  }
  return sum;
}

AppearanceEnergy e_app(const AppearanceParams& app, double lambda_mat, double lambda_light, AppearanceGrad* grad) {
  AppearanceEnergy out;
  if (grad) {
    grad->kd = Texture(app.kd.width, app.kd.height);
    grad->orm = Texture(app.orm.width, app.orm.height);
    grad->radiance.assign(app.env.size(), Vec3::Zero());
  }
  if (!app.kd.empty()) {
    if (app.kd.width < 3 || app.kd.height < 3) throw ArgumentError("e_app: textures must be at least 3x3");
    for (int c = 0; c < 3; ++c) {
      out.material += sobel_l1(app.kd.texels, app.kd.width, app.kd.height, c, grad ? &grad->kd.texels : nullptr,
                               lambda_mat);
    }
    // Specular color (1 - m) 0.04 + m kd, materialized on the kd grid.
    const bool has_orm = !app.orm.empty();
    if (has_orm && (app.orm.width != app.kd.width || app.orm.height != app.kd.height)) {
      throw ArgumentError("e_app: kd and orm textures must share dimensions");
    }
    std::vector<double> ks(app.kd.texels.size());
    for (std::size_t t = 0; t < ks.size() / 3; ++t) {
      const double m = has_orm ? app.orm.texels[t * 3 + 2] : 0.0;
      for (int c = 0; c < 3; ++c) ks[t * 3 + c] = (1.0 - m) * 0.04 + m * app.kd.texels[t * 3 + c];
    }
    std::vector<double> gks(grad ? ks.size() : 0, 0.0);
    for (int c = 0; c < 3; ++c) {
      out.material += sobel_l1(ks, app.kd.width, app.kd.height, c, grad ? &gks : nullptr, lambda_mat);
    }
    if (grad) {
      for (std::size_t t = 0; t < ks.size() / 3; ++t) {
        const double m = has_orm ? app.orm.texels[t * 3 + 2] : 0.0;
        for (int c = 0; c < 3; ++c) {
          grad->kd.texels[t * 3 + c] += m * gks[t * 3 + c];
          if (has_orm) grad->orm.texels[t * 3 + 2] += (app.kd.texels[t * 3 + c] - 0.04) * gks[t * 3 + c];
        }
      }
    }
  }
  for (std::size_t e = 0; e < app.env.size(); ++e) {
    const Vec3& c = app.env.radiance[e];
    const double mean = c.mean();
    Vec3 s;
    for (int ch = 0; ch < 3; ++ch) {
      const double d = c[ch] - mean;
      out.light += std::abs(d);
      s[ch] = (d > 0.0) - (d < 0.0);
    }
    // d|c_k - mean| / dc_j = s_k (delta_kj - 1/3)
    if (grad) grad->radiance[e] += lambda_light * (s - Vec3::Constant(s.sum() / 3.0));
  }
  return out;
}

double e_sym(const std::vector<Vec3>& points, const Vec3& axis, std::vector<Vec3>* grad) {
  if (points.empty()) {
    if (grad) grad->clear();
    return 0.0;
  }
  const double an = axis.norm();
  if (!(an > 0.0)) throw ArgumentError("e_sym: symmetry axis must be non-zero");
  const Vec3 a = axis / an;
  const Mat3 m = Mat3::Identity() - 2.0 * a * a.transpose();
  std::vector<Vec3> mirrored(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) mirrored[i] = m * points[i];
  const KdTree to_mirrored(mirrored);
  const KdTree to_points(points);
  const double norm = 1.0 / static_cast<double>(points.size());
  if (grad) grad->assign(points.size(), Vec3::Zero());
  double sum_a = 0.0, sum_b = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto h = to_mirrored.nearest(points[i]);
    sum_a += h.dist2;
    if (grad) {
      const Vec3 d = points[i] - mirrored[h.index];
      (*grad)[i] += norm * d;  // 0.5 * 2 from the averaging and the square
      (*grad)[h.index] -= norm * (m * d);
    }
  }
  for (std::size_t j = 0; j < points.size(); ++j) {
    const auto h = to_points.nearest(mirrored[j]);
    sum_b += h.dist2;
    if (grad) {
      const Vec3 d = mirrored[j] - points[h.index];
      (*grad)[j] += norm * (m * d);
      (*grad)[h.index] -= norm * d;
    }
  }
  return 0.5 * (sum_a + sum_b) * norm;
}

}  // namespace cadtwin
