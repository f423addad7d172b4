#pragma once

#include <array>
#include <vector>

#include "cadtwin/types.hpp"

namespace cadtwin {

// Row-major RGB texture of doubles. Texel (x, y) covers
// uv in [x/W, (x+1)/W] x [y/H, (y+1)/H]; sampling is bilinear with clamped
// coordinates.
struct Texture {
  int width = 0;
  int height = 0;
  std::vector<double> texels;  // width * height * 3

  Texture() = default;
  Texture(int w, int h, const Vec3& fill = Vec3::Zero());

  bool empty() const { return texels.empty(); }
  std::size_t index(int x, int y) const { return (static_cast<std::size_t>(y) * width + x) * 3; }
  Vec3 at(int x, int y) const;
  void set(int x, int y, const Vec3& c);
};

// Four texels and weights touched by one bilinear lookup.
struct BilinearFootprint {
  std::array<int, 4> offsets{};  // element offsets into Texture::texels (channel 0)
  std::array<double, 4> weights{};
  // d(weight_i)/du and d(weight_i)/dv; zero along clamped axes.
  std::array<double, 4> dweight_du{};
  std::array<double, 4> dweight_dv{};
};

BilinearFootprint bilinear_footprint(const Texture& tex, const Vec2& uv);
Vec3 sample(const Texture& tex, const BilinearFootprint& fp);
inline Vec3 sample_bilinear(const Texture& tex, const Vec2& uv) { return sample(tex, bilinear_footprint(tex, uv)); }

// Distant lighting as a finite set of directional samples. Each sample carries
// an equal solid-angle weight of 4*pi / count.
struct EnvLight {
  std::vector<Vec3> directions;  // unit, pointing from the surface toward the light
  std::vector<Vec3> radiance;    // RGB, non-negative

  std::size_t size() const { return directions.size(); }
  double solid_angle_weight() const;
};

// Spherical Fibonacci directions with uniform radiance.
EnvLight make_uniform_env(std::size_t count, const Vec3& radiance);

// Diffuse color, (unused, roughness, metalness) texture and lighting.
struct AppearanceParams {
  Texture kd;
  Texture orm;
  EnvLight env;

  // Clamps roughness to [0.02, 1], metalness and kd to [0, 1], radiance to >= 0.
  void clamp_to_valid();
  // Throws NumericError on non-finite texels or negative radiance.
  void validate() const;
};

constexpr double kMinRoughness = 0.02;

}  // namespace cadtwin
