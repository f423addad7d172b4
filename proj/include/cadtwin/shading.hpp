#pragma once

#include <vector>

#include "cadtwin/appearance.hpp"
#include "cadtwin/types.hpp"

namespace cadtwin {

// Surface point description for shading. normal and view are unit vectors in
// the lighting frame; view points from the surface toward the camera.
struct ShadeInput {
  Vec3 normal;
  Vec3 view;
  Vec3 kd;
  double roughness = 1.0;
  double metalness = 0.0;
};

struct ShadeGrad {
  Vec3 normal = Vec3::Zero();
  Vec3 view = Vec3::Zero();
  Vec3 kd = Vec3::Zero();
  double roughness = 0.0;
  double metalness = 0.0;
};

// Specular color of the metalness workflow: (1 - m) * 0.04 + m * kd.
Vec3 specular_color(const Vec3& kd, double metalness);

// Sum over light directions of [(1 - m) kd / pi + GGX(F0 = specular_color)]
// * radiance * max(n.l, 0) * solid-angle weight. The GGX lobe uses
// alpha = roughness^2, separable Smith masking and Schlick Fresnel.
Vec3 shade(const ShadeInput& in, const EnvLight& env, bool specular = true);

// Vector-Jacobian product of shade. grad_radiance, when non-null, must hold
// env.size() entries and is accumulated into.
ShadeGrad shade_backward(const ShadeInput& in, const EnvLight& env, bool specular, const Vec3& grad_rgb,
                         std::vector<Vec3>* grad_radiance);

}  // namespace cadtwin
