#include "cadtwin/optimizer.hpp"

#include <cmath>

#include "cadtwin/error.hpp"

namespace cadtwin {

double LrSchedule::at(int step) const {
  if (kind == Kind::kConstant || steps <= 0) return start;
  const double f = std::min(1.0, static_cast<double>(std::max(step, 0)) / steps);
  return start * std::pow(end / start, f);
}

void OptimizerConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw ArgumentError("optimizer betas must lie in [0, 1)");
  }
  if (!(schedule.start > 0.0 && schedule.end > 0.0)) throw ArgumentError("learning rate must be positive");
  if (!(eps > 0.0)) throw ArgumentError("optimizer eps must be positive");
  if (block_size < 0) throw ArgumentError("block size must be non-negative");
}

nlohmann::json to_json(const OptimizerConfig& c) {
  nlohmann::json j;
  j["kind"] = c.kind == OptimizerKind::kAdam ? "adam" : "adam_uniform";
  j["lr"] = c.schedule.start;
  if (c.schedule.kind == LrSchedule::Kind::kExponential) {
    j["schedule"] = {{"kind", "exponential"}, {"end", c.schedule.end}, {"steps", c.schedule.steps}};
  }
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["eps"] = c.eps;
  j["block_size"] = c.block_size;
  return j;
}

OptimizerConfig optimizer_from_json(const nlohmann::json& j, OptimizerConfig c) {
  if (j.contains("kind")) {
    const auto k = j["kind"].get<std::string>();
    if (k == "adam") {
      c.kind = OptimizerKind::kAdam;
    } else if (k == "adam_uniform") {
      c.kind = OptimizerKind::kAdamUniform;
    } else {
      throw FormatError("unknown optimizer kind '" + k + "'");
    }
  }
  if (j.contains("lr")) c.schedule = LrSchedule::constant(j["lr"].get<double>());
  if (j.contains("schedule")) {
    const auto& s = j["schedule"];
    if (s.value("kind", "constant") == "exponential") {
      c.schedule = LrSchedule::exponential(c.schedule.start, s.at("end").get<double>(), s.at("steps").get<int>());
    }
  }
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.block_size = j.value("block_size", c.block_size);
  c.validate();
  return c;
}

Adam::Adam(std::size_t size, OptimizerConfig config)
    : config_(config), m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size))), v_(m_) {
  config_.validate();
}

void Adam::set_schedule(const LrSchedule& s, int offset) {
  config_.schedule = s;
  schedule_offset_ = offset;
}

void Adam::step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad) {
  step(params, grad, config_.schedule.at(t_ - schedule_offset_));
}

void Adam::step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw ArgumentError("optimizer size mismatch");
  if (!grad.allFinite()) throw NumericError("optimizer received a non-finite gradient");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  m_ = b1 * m_ + (1.0 - b1) * grad;
  v_ = b2 * v_ + (1.0 - b2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(b1, t_);
  const double c2 = 1.0 - std::pow(b2, t_);
  const Eigen::Index n = m_.size();
  if (config_.kind == OptimizerKind::kAdam) {
    for (Eigen::Index i = 0; i < n; ++i) params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + config_.eps);
    return;
  }
  const Eigen::Index block = config_.block_size > 0 ? config_.block_size : std::max<Eigen::Index>(n, 1);
  for (Eigen::Index b = 0; b < n; b += block) {
    const Eigen::Index len = std::min(block, n - b);
    const double denom = std::sqrt(v_.segment(b, len).maxCoeff() / c2) + config_.eps;
    for (Eigen::Index i = b; i < b + len; ++i) params[i] -= lr * (m_[i] / c1) / denom;
  }
}

Eigen::MatrixXd to_matrix(const std::vector<Vec3>& v) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
  return m;
}

std::vector<Vec3> to_points(const Eigen::MatrixXd& m) {
  std::vector<Vec3> v(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) v[static_cast<std::size_t>(i)] = m.row(i).transpose();
  return v;
}

SmoothReparam::SmoothReparam(const Eigen::SparseMatrix<double>& laplacian, double lambda) : lambda_(lambda) {
  if (!(lambda >= 0.0)) throw ArgumentError("reparameterization stiffness must be non-negative");
  Eigen::SparseMatrix<double> id(laplacian.rows(), laplacian.cols());
  id.setIdentity();
  system_ = id + lambda * laplacian;
  system_.makeCompressed();
  solver_.compute(system_);
  if (solver_.info() != Eigen::Success) throw NumericError("factorization of I + lambda L failed");
}

Eigen::MatrixXd SmoothReparam::solve(const Eigen::MatrixXd& rhs) const {
  Eigen::MatrixXd x = solver_.solve(rhs);
  if (solver_.info() != Eigen::Success) throw NumericError("smooth reparameterization solve failed");
  const double scale = std::max(rhs.norm(), 1e-300);
  double residual = (system_ * x - rhs).norm() / scale;
  if (residual > 1e-10) {
    x += solver_.solve(Eigen::MatrixXd(rhs - system_ * x));
    residual = (system_ * x - rhs).norm() / scale;
  }
  if (residual > 1e-10) {
    throw NumericError("smooth reparameterization residual " + std::to_string(residual) + " exceeds 1e-10");
  }
  return x;
}

Eigen::MatrixXd SmoothReparam::to_latent(const std::vector<Vec3>& vertices) const {
  return system_ * to_matrix(vertices);
}

std::vector<Vec3> SmoothReparam::push(const Eigen::MatrixXd& latent) const { return to_points(solve(latent)); }

Eigen::MatrixXd SmoothReparam::pullback(const std::vector<Vec3>& grad_vertices) const {
  return solve(to_matrix(grad_vertices));
}

}  // namespace cadtwin
