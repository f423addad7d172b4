#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cadtwin/asset.hpp"
#include "cadtwin/energy.hpp"
#include "cadtwin/error.hpp"
#include "cadtwin/optimizer.hpp"
#include "cadtwin/scene.hpp"
#include "cadtwin/shape_space.hpp"

namespace cadtwin {

// Every free variable of the fit. Vertices use the shape space's merged
// body + wheel-template layout in the vehicle frame.
struct FitState {
  Eigen::VectorXd z;
  std::vector<Vec3> vertices;
  WheelParams wheel;
  std::vector<Pose6D> cameras;  // actor frame -> camera, one per scene frame
  Pose6D object;                // vehicle frame -> actor frame
  AppearanceParams appearance;
};

struct FitGradient {
  Eigen::VectorXd z;
  std::vector<Vec3> vertices;
  WheelParamsGrad wheel;
  std::vector<PoseGrad> cameras;
  PoseGrad object;
  AppearanceGrad appearance;
};

// Which terms enter the energy. latent decodes the geometry from z instead of
// reading FitState::vertices.
struct StageFlags {
  bool latent = false;
  bool color = true;
  bool mask = true;
  bool lidar = true;
  bool shape = true;
  bool sym = true;
  bool appearance = true;
  double softness = 1.0;
};

struct EnergyReport {
  double color = 0.0;
  double mask = 0.0;
  double lidar = 0.0;
  double normal = 0.0;
  double edge = 0.0;
  double app_mat = 0.0;
  double app_light = 0.0;
  double sym = 0.0;
  double total = 0.0;
  bool color_enabled = false;
  bool color_empty = false;  // no view had foreground pixels under the render

  // Term values only; color is omitted when the stage disables it.
  nlohmann::json to_json() const;
};

struct FitOptions {
  bool specular = true;
  int texture_size = 64;
  int env_directions = 32;
};

// Shape space and actor-frame observations plus topology caches.
class FitProblem {
 public:
  FitProblem(const ShapeSpace& space, const SceneObservations& obs, FitOptions options = {});

  // z = 0, mean vertices, rig wheel defaults, observed cameras, identity object
  // pose, gray textures under uniform white light.
  FitState initial_state() const;
  VehicleMesh vehicle(const FitState& state, bool latent) const;

  // Weighted energy and, when grad is non-null, its gradient for every
  // variable group. Throws NumericError naming the first non-finite term.
  EnergyReport evaluate(const FitState& state, const EnergyWeights& weights, const StageFlags& flags,
                        std::uint64_t sample_seed, FitGradient* grad = nullptr) const;

  const ShapeSpace& space() const { return *space_; }
  const SceneObservations& observations() const { return *obs_; }
  const Adjacency& assembled_adjacency() const { return adjacency_; }
  const PartSplit& split() const { return split_; }
  const FitOptions& options() const { return options_; }

  // Reuses these (face, barycentric) pairs instead of drawing fresh LiDAR
  // samples; positions follow the current mesh. Finite-difference checks use
  // this to keep the sample layout fixed. An empty vector restores sampling.
  void freeze_samples(std::vector<SurfaceSample> samples) { frozen_samples_ = std::move(samples); }

 private:
  const ShapeSpace* space_;
  const SceneObservations* obs_;
  FitOptions options_;
  PartSplit split_;
  Adjacency adjacency_;
  std::size_t body_count_ = 0;
  std::vector<SurfaceSample> frozen_samples_;
};

struct CurriculumConfig {
  int stage1_iters = 200;
  int stage2_iters = 500;
  int stage3_iters = 500;
  OptimizerConfig latent = OptimizerConfig::adam(3e-2);
  OptimizerConfig vertices = OptimizerConfig::adam_uniform(3e-2);
  OptimizerConfig wheel = OptimizerConfig::adam(3e-2);
  OptimizerConfig appearance = OptimizerConfig::adam(3e-2);
  OptimizerConfig camera = OptimizerConfig::adam(1e-4);
  OptimizerConfig object = OptimizerConfig::adam(1e-2);
  // Stage 3 decays every non-pose learning rate exponentially over the stage.
  double stage3_lr_start = 0.03;
  double stage3_lr_end = 0.01;
  double reparam_lambda = 19.0;
  double softness = 1.0;
  // Softness halves this many times at evenly spaced points of stage 3.
  int softness_halvings = 2;
  bool optimize_cameras = true;
  bool optimize_object = true;
  int checkpoint_every = 100;
  std::filesystem::path checkpoint_dir;  // empty disables checkpoint files
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const CurriculumConfig& c, const EnergyWeights& w);
// Reads {"curriculum": {...}, "weights": {...}}; absent keys keep defaults.
void config_from_json(const nlohmann::json& j, CurriculumConfig& c, EnergyWeights& w);

struct TraceEntry {
  int stage = 0;
  int iteration = 0;  // within the stage
  double softness = 0.0;
  EnergyReport report;
};

void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceEntry>& trace);
std::string trace_digest(const std::vector<TraceEntry>& trace);

// Raised when a fit diverges or produces non-finite values. Carries the trace
// so far and the last checkpoint written, if any.
class FitError : public NumericError {
 public:
  FitError(const std::string& what, std::vector<TraceEntry> trace, std::filesystem::path checkpoint)
      : NumericError(what), trace_(std::move(trace)), checkpoint_(std::move(checkpoint)) {}
  const std::vector<TraceEntry>& trace() const { return trace_; }
  const std::filesystem::path& checkpoint() const { return checkpoint_; }

 private:
  std::vector<TraceEntry> trace_;
  std::filesystem::path checkpoint_;
};

struct Stage1Result {
  Eigen::VectorXd z;
  std::vector<TraceEntry> trace;
};

// Latent initialization: minimizes lambda_mask E_mask + lambda_lidar E_lidar +
// lambda_shape E_shape over z alone. Throws FitError when the energy exceeds
// ten times its initial value.
Stage1Result run_stage1_init(const FitProblem& problem, const EnergyWeights& weights, const CurriculumConfig& cfg);

struct FitResult {
  FitState state;
  FittedAsset asset;
  std::vector<TraceEntry> trace;
  EnergyReport final_report;
};

// Stages 2 and 3 from the decoded z: free vertices through the smooth
// reparameterization, wheel parameters and poses, then color and appearance.
FitResult run_full_fit(const FitProblem& problem, const Eigen::VectorXd& z, const EnergyWeights& weights,
                       const CurriculumConfig& cfg);

// Stage 1 followed by run_full_fit; the returned trace covers all stages.
FitResult fit_scene(const FitProblem& problem, const EnergyWeights& weights, const CurriculumConfig& cfg);

FittedAsset make_asset(const FitProblem& problem, const FitState& state, const Provenance& provenance);

}  // namespace cadtwin
