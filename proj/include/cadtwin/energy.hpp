#pragma once

#include <vector>

#include "cadtwin/appearance.hpp"
#include "cadtwin/image.hpp"
#include "cadtwin/renderer.hpp"
#include "cadtwin/types.hpp"

namespace cadtwin {

struct EnergyWeights {
  double lambda_mask = 0.5;
  double lambda_lidar = 0.5;
  double lambda_shape = 0.1;
  double lambda_sym = 0.5;
  double lambda_app = 1.0;
  double lambda_mat = 1e-9;
  double lambda_light = 1e-2;
  double trim_fraction = 0.95;
  int sample_count = 10000;
  double huber_delta = 0.1;

  // Throws ArgumentError on negative weights, trim outside (0, 1] or no samples.
  void validate() const;
};

double huber(double residual, double delta);
double huber_derivative(double residual, double delta);

struct ColorTerm {
  double value = 0.0;
  std::size_t pixels = 0;  // evaluated pixels; 0 means the term was skipped
};

// Mean Huber loss over pixels that are foreground in the observed mask and hit
// by the render, averaged over the three channels. grad, when non-null,
// receives dE/dcolor with the render's color layout.
ColorTerm e_color(const RenderOutput& render, const Image& image, const Image& mask, double delta,
                  Image* grad = nullptr);

// Mean squared difference between the soft rendered mask and the observed mask.
double e_mask(const Image& rendered_mask, const Image& mask, Image* grad = nullptr);

// Trimmed asymmetric Chamfer: each cloud point is matched to its nearest
// sample, the max(1, floor(trim * |cloud|)) smallest squared distances are kept
// and averaged. grad_samples receives the gradient per sample.
double e_lidar(const std::vector<Vec3>& cloud, const std::vector<Vec3>& samples, double trim,
               std::vector<Vec3>* grad_samples = nullptr);

struct AppearanceGrad {
  Texture kd;
  Texture orm;
  std::vector<Vec3> radiance;
};

struct AppearanceEnergy {
  double material = 0.0;  // Sobel L1 of kd plus that of the derived specular color
  double light = 0.0;     // sum over directions and channels of |c - mean(c)|
};

// Unweighted terms; grad receives d(lambda_mat * material + lambda_light * light).
AppearanceEnergy e_app(const AppearanceParams& app, double lambda_mat, double lambda_light,
                       AppearanceGrad* grad = nullptr);

// Sum of |Gx| + |Gy| of the 3x3 Sobel responses over the texture interior, one
// channel of an interleaved 3-channel buffer.
double sobel_l1(const std::vector<double>& texels, int width, int height, int channel,
                std::vector<double>* grad = nullptr, double scale = 1.0);

// Bidirectional Chamfer between the points and their mirror images across the
// plane through the origin normal to axis: (A + B) / 2 with A, B the two
// directed mean squared nearest distances.
double e_sym(const std::vector<Vec3>& points, const Vec3& axis, std::vector<Vec3>* grad = nullptr);

}  // namespace cadtwin
