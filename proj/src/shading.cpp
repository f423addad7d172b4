#include "cadtwin/shading.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cadtwin {
namespace {

constexpr double kInvPi = 1.0 / std::numbers::pi;
constexpr double kMinCos = 1e-4;

// Smith-GGX masking for one direction and its partials.
struct Masking {
  double value, d_cos, d_alpha2;
};

Masking smith_g1(double cos_theta, double alpha2) {
  const double k = std::sqrt(alpha2 + (1.0 - alpha2) * cos_theta * cos_theta);
  const double denom = cos_theta + k;
  Masking m;
  m.value = 2.0 * cos_theta / denom;
  const double dk_dcos = (1.0 - alpha2) * cos_theta / k;
  const double dk_da2 = (1.0 - cos_theta * cos_theta) / (2.0 * k);
  m.d_cos = 2.0 / denom - 2.0 * cos_theta * (1.0 + dk_dcos) / (denom * denom);
  m.d_alpha2 = -2.0 * cos_theta * dk_da2 / (denom * denom);
  return m;
}

double clamp_roughness(double r) { return std::clamp(r, kMinRoughness, 1.0); }

}  // namespace

Vec3 specular_color(const Vec3& kd, double metalness) {
  return Vec3::Constant(0.04 * (1.0 - metalness)) + metalness * kd;
}

Vec3 shade(const ShadeInput& in, const EnvLight& env, bool specular) {
  const double w = env.solid_angle_weight();
  const double m = std::clamp(in.metalness, 0.0, 1.0);
  const double r = clamp_roughness(in.roughness);
  const double alpha2 = std::pow(r, 4.0);
  const Vec3 diffuse = (1.0 - m) * kInvPi * in.kd;
  const Vec3 f0 = specular_color(in.kd, m);
  const double nv = std::max(in.normal.dot(in.view), kMinCos);
  const Masking gv = smith_g1(nv, alpha2);
  Vec3 out = Vec3::Zero();
  for (std::size_t i = 0; i < env.size(); ++i) {
    const Vec3& l = env.directions[i];
    const double nl = in.normal.dot(l);
    if (nl <= 0.0) continue;
    Vec3 brdf = diffuse;
    if (specular) {
      const Vec3 h = (l + in.view).normalized();
      const double nh = std::max(in.normal.dot(h), 0.0);
      const double vh = std::max(in.view.dot(h), 0.0);
      const double den = nh * nh * (alpha2 - 1.0) + 1.0;
      const double d = alpha2 * kInvPi / (den * den);
      const double g = smith_g1(nl, alpha2).value * gv.value;
      const double f5 = std::pow(1.0 - vh, 5.0);
      const Vec3 fresnel = f0 * (1.0 - f5) + Vec3::Constant(f5);
      brdf += d * g / (4.0 * nl * nv) * fresnel;
    }
    out += env.radiance[i].cwiseProduct(brdf) * (nl * w);
  }
  return out;
}

ShadeGrad shade_backward(const ShadeInput& in, const EnvLight& env, bool specular, const Vec3& grad_rgb,
                         std::vector<Vec3>* grad_radiance) {
  ShadeGrad g;
  const double w = env.solid_angle_weight();
  const bool m_free = in.metalness >= 0.0 && in.metalness <= 1.0;
  const double m = std::clamp(in.metalness, 0.0, 1.0);
  const bool r_free = in.roughness >= kMinRoughness && in.roughness <= 1.0;
  const double r = clamp_roughness(in.roughness);
  const double alpha2 = std::pow(r, 4.0);
  const Vec3 diffuse = (1.0 - m) * kInvPi * in.kd;
  const Vec3 f0 = specular_color(in.kd, m);
  const double nv_raw = in.normal.dot(in.view);
  const bool nv_free = nv_raw > kMinCos;
  const double nv = std::max(nv_raw, kMinCos);
  const Masking gv = smith_g1(nv, alpha2);

  double g_m = 0.0, g_alpha2 = 0.0, g_nv = 0.0;
  for (std::size_t i = 0; i < env.size(); ++i) {
    const Vec3& l = env.directions[i];
    const double nl = in.normal.dot(l);
    if (nl <= 0.0) continue;
    const Vec3& radiance = env.radiance[i];

    Vec3 brdf = diffuse;
    // Specular intermediates.
    Vec3 h = Vec3::Zero(), hvec = Vec3::Zero(), fresnel = Vec3::Zero();
    double nh = 0, vh = 0, den = 0, d = 0, f5 = 0, s = 0;
    Masking gl{0, 0, 0};
    bool nh_free = false, vh_free = false;
    if (specular) {
      hvec = l + in.view;
      h = hvec.normalized();
      const double nh_raw = in.normal.dot(h);
      const double vh_raw = in.view.dot(h);
      nh_free = nh_raw > 0.0;
      vh_free = vh_raw > 0.0;
      nh = std::max(nh_raw, 0.0);
      vh = std::max(vh_raw, 0.0);
      den = nh * nh * (alpha2 - 1.0) + 1.0;
      d = alpha2 * kInvPi / (den * den);
      gl = smith_g1(nl, alpha2);
      f5 = std::pow(1.0 - vh, 5.0);
      fresnel = f0 * (1.0 - f5) + Vec3::Constant(f5);
      s = d * gl.value * gv.value / (4.0 * nl * nv);
      brdf += s * fresnel;
    }

    if (grad_radiance) (*grad_radiance)[i] += grad_rgb.cwiseProduct(brdf) * (nl * w);
    const Vec3 g_brdf = grad_rgb.cwiseProduct(radiance) * (nl * w);
    double g_nl = grad_rgb.cwiseProduct(radiance).dot(brdf) * w;

    g.kd += g_brdf * ((1.0 - m) * kInvPi);
    g_m -= g_brdf.dot(in.kd) * kInvPi;

    if (specular) {
      const double g_s = g_brdf.dot(fresnel);
      const Vec3 g_fresnel = g_brdf * s;
      const Vec3 g_f0 = g_fresnel * (1.0 - f5);
      const double g_f5 = g_fresnel.dot(Vec3::Ones() - f0);
      g_m += g_f0.dot(in.kd - Vec3::Constant(0.04));
      g.kd += m * g_f0;
      const double g_vh = vh_free ? -5.0 * std::pow(1.0 - vh, 4.0) * g_f5 : 0.0;

      const double inv4 = 1.0 / (4.0 * nl * nv);
      const double g_d = g_s * gl.value * gv.value * inv4;
      const double g_gl = g_s * d * gv.value * inv4;
      const double g_gv = g_s * d * gl.value * inv4;
      g_nl += -g_s * s / nl;
      g_nv += -g_s * s / nv;

      g_nl += g_gl * gl.d_cos;
      g_alpha2 += g_gl * gl.d_alpha2;
      g_nv += g_gv * gv.d_cos;
      g_alpha2 += g_gv * gv.d_alpha2;

      const double den3 = den * den * den;
      g_alpha2 += g_d * (kInvPi / (den * den) - 2.0 * alpha2 * kInvPi * nh * nh / den3);
      const double g_nh = nh_free ? g_d * (-2.0 * alpha2 * kInvPi / den3) * (2.0 * nh * (alpha2 - 1.0)) : 0.0;

      g.normal += g_nh * h;
      g.view += g_vh * h;
      const Vec3 g_h = g_nh * in.normal + g_vh * in.view;
      const double hn = hvec.norm();
      g.view += (g_h - h * h.dot(g_h)) / hn;
    }
    g.normal += g_nl * l;
  }
  if (nv_free) {
    g.normal += g_nv * in.view;
    g.view += g_nv * in.normal;
  }
  g.metalness = m_free ? g_m : 0.0;
  g.roughness = r_free ? g_alpha2 * 4.0 * r * r * r : 0.0;
  return g;
}

}  // namespace cadtwin
