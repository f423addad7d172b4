#pragma once

#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <nlohmann/json.hpp>

#include "cadtwin/types.hpp"

namespace cadtwin {

struct LrSchedule {
  enum class Kind { kConstant, kExponential };
  Kind kind = Kind::kConstant;
  double start = 3e-2;
  double end = 3e-2;
  int steps = 1;

  static LrSchedule constant(double lr) { return {Kind::kConstant, lr, lr, 1}; }
  // start * (end / start)^(step / steps), held at end afterwards.
  static LrSchedule exponential(double start, double end, int steps) { return {Kind::kExponential, start, end, steps}; }
  double at(int step) const;
};

enum class OptimizerKind { kAdam, kAdamUniform };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  LrSchedule schedule;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // AdamUniform shares its second moment over consecutive blocks of this many
  // coordinates; 0 means the whole parameter vector.
  int block_size = 0;

  static OptimizerConfig adam(double lr) { return {OptimizerKind::kAdam, LrSchedule::constant(lr)}; }
  static OptimizerConfig adam_uniform(double lr) { return {OptimizerKind::kAdamUniform, LrSchedule::constant(lr)}; }
  // Throws ArgumentError unless 0 <= beta < 1, lr > 0 and eps > 0.
  void validate() const;
};

nlohmann::json to_json(const OptimizerConfig& c);
OptimizerConfig optimizer_from_json(const nlohmann::json& j, OptimizerConfig defaults);

// Bias-corrected Adam, or its uniform variant where each block divides by the
// square root of the largest bias-corrected second moment in the block.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t size, OptimizerConfig config);

  // Throws NumericError on a non-finite gradient; params are left untouched then.
  void step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad);
  // Same with an explicit learning rate instead of the schedule.
  void step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad, double lr);
  int steps() const { return t_; }
  const OptimizerConfig& config() const { return config_; }
  // Restarts the learning-rate schedule without clearing moments.
  void set_schedule(const LrSchedule& s, int offset);

 private:
  OptimizerConfig config_;
  Eigen::VectorXd m_, v_;
  int t_ = 0;
  int schedule_offset_ = 0;
};

// Smooth reparameterization u = (I + lambda L) V over an N x 3 vertex array.
// Vertices and gradients are recovered by solving with the same SPD system.
class SmoothReparam {
 public:
  SmoothReparam(const Eigen::SparseMatrix<double>& laplacian, double lambda);

  Eigen::MatrixXd to_latent(const std::vector<Vec3>& vertices) const;
  std::vector<Vec3> push(const Eigen::MatrixXd& latent) const;
  // Gradient with respect to u given the gradient with respect to V.
  Eigen::MatrixXd pullback(const std::vector<Vec3>& grad_vertices) const;
  double lambda() const { return lambda_; }
  const Eigen::SparseMatrix<double>& system() const { return system_; }

 private:
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;
  double lambda_;
  Eigen::SparseMatrix<double> system_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
};

Eigen::MatrixXd to_matrix(const std::vector<Vec3>& v);
std::vector<Vec3> to_points(const Eigen::MatrixXd& m);

}  // namespace cadtwin
