#include "cadtwin/appearance.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cadtwin/error.hpp"

namespace cadtwin {

Texture::Texture(int w, int h, const Vec3& fill) : width(w), height(h), texels(static_cast<std::size_t>(w) * h * 3) {
  for (std::size_t i = 0; i < texels.size(); i += 3) {
    texels[i] = fill.x();
    texels[i + 1] = fill.y();
    texels[i + 2] = fill.z();
  }
}

Vec3 Texture::at(int x, int y) const {
  const std::size_t i = index(x, y);
  return {texels[i], texels[i + 1], texels[i + 2]};
}

void Texture::set(int x, int y, const Vec3& c) {
  const std::size_t i = index(x, y);
  texels[i] = c.x();
  texels[i + 1] = c.y();
  texels[i + 2] = c.z();
}

BilinearFootprint bilinear_footprint(const Texture& tex, const Vec2& uv) {
  BilinearFootprint fp;
  if (tex.empty()) return fp;
  double x = uv.x() * tex.width - 0.5;
  double y = uv.y() * tex.height - 0.5;
  double dxdu = tex.width, dydv = tex.height;
  if (!(x > 0.0)) {
    x = 0.0;
    dxdu = 0.0;
  } else if (x >= tex.width - 1) {
    x = tex.width - 1;
    dxdu = 0.0;
  }
  if (!(y > 0.0)) {
    y = 0.0;
    dydv = 0.0;
  } else if (y >= tex.height - 1) {
    y = tex.height - 1;
    dydv = 0.0;
  }
  const int x0 = std::min(static_cast<int>(x), tex.width - 1);
  const int y0 = std::min(static_cast<int>(y), tex.height - 1);
  const int x1 = std::min(x0 + 1, tex.width - 1);
  const int y1 = std::min(y0 + 1, tex.height - 1);
  const double fx = x - x0, fy = y - y0;
  fp.offsets = {static_cast<int>(tex.index(x0, y0)), static_cast<int>(tex.index(x1, y0)),
                static_cast<int>(tex.index(x0, y1)), static_cast<int>(tex.index(x1, y1))};
  fp.weights = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  fp.dweight_du = {-dxdu * (1 - fy), dxdu * (1 - fy), -dxdu * fy, dxdu * fy};
  fp.dweight_dv = {-dydv * (1 - fx), -dydv * fx, dydv * (1 - fx), dydv * fx};
  return fp;
}

Vec3 sample(const Texture& tex, const BilinearFootprint& fp) {
  Vec3 c = Vec3::Zero();
  if (tex.empty()) return c;
  for (int i = 0; i < 4; ++i) {
    const double* t = &tex.texels[fp.offsets[i]];
    c += fp.weights[i] * Vec3(t[0], t[1], t[2]);
  }
  return c;
}

double EnvLight::solid_angle_weight() const {
  return directions.empty() ? 0.0 : 4.0 * std::numbers::pi / static_cast<double>(directions.size());
}

EnvLight make_uniform_env(std::size_t count, const Vec3& radiance) {
  EnvLight env;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < count; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / static_cast<double>(count);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * static_cast<double>(i);
    env.directions.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
    env.radiance.push_back(radiance);
  }
  return env;
}

void AppearanceParams::clamp_to_valid() {
  for (double& v : kd.texels) v = std::clamp(v, 0.0, 1.0);
  for (std::size_t i = 0; i < orm.texels.size(); i += 3) {
    orm.texels[i] = std::clamp(orm.texels[i], 0.0, 1.0);
    orm.texels[i + 1] = std::clamp(orm.texels[i + 1], kMinRoughness, 1.0);
    orm.texels[i + 2] = std::clamp(orm.texels[i + 2], 0.0, 1.0);
  }
  for (Vec3& r : env.radiance) r = r.cwiseMax(0.0);
}

void AppearanceParams::validate() const {
  for (double v : kd.texels) {
    if (!std::isfinite(v)) throw NumericError("appearance: non-finite diffuse texel");
  }
  for (double v : orm.texels) {
    if (!std::isfinite(v)) throw NumericError("appearance: non-finite orm texel");
  }
  if (env.radiance.size() != env.directions.size()) throw ArgumentError("appearance: radiance/direction count mismatch");
  for (const Vec3& r : env.radiance) {
    if (!r.allFinite() || (r.array() < 0.0).any()) throw NumericError("appearance: radiance must be finite and non-negative");
  }
}

}  // namespace cadtwin
