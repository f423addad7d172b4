#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <iterator>

#include "cadtwin/error.hpp"
#include "cadtwin/fit.hpp"
#include "cadtwin/optimizer.hpp"
#include "cadtwin/shape_energy.hpp"
#include "support.hpp"

namespace cadtwin {
namespace {

TEST(Adam, ZeroGradientLeavesParameters) {
  Adam a(3, OptimizerConfig::adam(0.1));
  Eigen::VectorXd x(3);
  x << 1, 2, 3;
  const Eigen::VectorXd x0 = x;
  a.step(x, Eigen::VectorXd::Zero(3));
  EXPECT_EQ(x, x0);
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  Adam a(4, OptimizerConfig::adam(0.03));
  Eigen::VectorXd x = Eigen::VectorXd::Zero(4), g(4);
  g << 5, -0.001, 1e3, -2;
  a.step(x, g);
  // Exact up to eps: lr * |g| / (|g| + eps).
  for (int i = 0; i < 4; ++i)
    EXPECT_NEAR(x[i], -0.03 * g[i] / (std::abs(g[i]) + 1e-8), 1e-15);
}

// Scalar textbook Adam as the reference.
TEST(Adam, MatchesReferenceOnQuadratic) {
  const double lr = 0.03, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Eigen::VectorXd x(3);
  x << 1.0, -0.5, 0.25;
  Eigen::VectorXd ref = x, m = Eigen::VectorXd::Zero(3), v = Eigen::VectorXd::Zero(3);
  Adam a(3, OptimizerConfig::adam(lr));
  const double initial = x.norm();
  std::vector<double> norms;
  for (int t = 1; t <= 100; ++t) {
    a.step(x, 2 * x);
    for (int i = 0; i < 3; ++i) {
      const double g = 2 * ref[i];
      m[i] = b1 * m[i] + (1 - b1) * g;
      v[i] = b2 * v[i] + (1 - b2) * g * g;
      const double mh = m[i] / (1 - std::pow(b1, t)), vh = v[i] / (1 - std::pow(b2, t));
      ref[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
    EXPECT_NEAR((x - ref).norm(), 0.0, 1e-14);
    norms.push_back(x.norm());
  }
  // Monotone decrease after warm-up, ending well below the start.
  for (std::size_t i = 1; i < 20; ++i) EXPECT_LT(norms[i], norms[i - 1]);
  EXPECT_LT(norms.back(), 0.1 * initial);
}

TEST(Adam, NonFiniteGradientThrowsAndKeepsParameters) {
  Adam a(2, OptimizerConfig::adam(0.1));
  Eigen::VectorXd x(2);
  x << 1, 2;
  Eigen::VectorXd g(2);
  g << 1, std::nan("");
  EXPECT_THROW(a.step(x, g), NumericError);
  EXPECT_EQ(x[0], 1.0);
  EXPECT_EQ(x[1], 2.0);
}

TEST(Adam, ConfigValidation) {
  OptimizerConfig c = OptimizerConfig::adam(0.1);
  c.beta1 = 1.0;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = OptimizerConfig::adam(0.0);
  EXPECT_THROW(c.validate(), ArgumentError);
}

TEST(AdamUniform, PreservesDirection) {
  Adam a(3, OptimizerConfig::adam_uniform(0.05));
  Eigen::VectorXd x = Eigen::VectorXd::Zero(3), g(3);
  g << 0.0, 2.0, 0.0;
  a.step(x, g);
  EXPECT_EQ(x[0], 0.0);
  EXPECT_EQ(x[2], 0.0);
  EXPECT_LT(x[1], 0.0);
  Adam b(3, OptimizerConfig::adam_uniform(0.05));
  Eigen::VectorXd y = Eigen::VectorXd::Zero(3), h(3);
  h << 0.3, -1.2, 0.7;
  b.step(y, h);
  EXPECT_NEAR(std::abs(y.normalized().dot(-h.normalized())), 1.0, 1e-12);
}

TEST(AdamUniform, RatioOneThousandToOne) {
  Eigen::VectorXd g(2);
  g << 1.0, 1e-3;
  Adam u(2, OptimizerConfig::adam_uniform(0.01));
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  u.step(x, g);
  EXPECT_NEAR(x[0] / x[1], 1000.0, 1e-3);
  Adam a(2, OptimizerConfig::adam(0.01));
  Eigen::VectorXd y = Eigen::VectorXd::Zero(2);
  a.step(y, g);
  EXPECT_NEAR(y[0] / y[1], 1.0, 1e-2);
}

TEST(AdamUniform, ZeroGradientUnchanged) {
  Adam u(4, OptimizerConfig::adam_uniform(0.01));
  Eigen::VectorXd x = Eigen::VectorXd::Constant(4, 0.5);
  u.step(x, Eigen::VectorXd::Zero(4));
  EXPECT_EQ(x, Eigen::VectorXd::Constant(4, 0.5));
}

TEST(AdamUniform, BlocksAreIndependent) {
  OptimizerConfig c = OptimizerConfig::adam_uniform(0.01);
  c.block_size = 2;
  Adam u(4, c);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(4), g(4);
  g << 1.0, 0.5, 1e-3, 1e-3;
  u.step(x, g);
  EXPECT_NEAR(x[1] / x[0], 0.5, 1e-9);
  EXPECT_NEAR(x[2], -0.01, 1e-6);  // second block normalized by its own moment
}

TEST(LrSchedule, ExponentialEndpoints) {
  const LrSchedule s = LrSchedule::exponential(0.03, 0.01, 500);
  EXPECT_DOUBLE_EQ(s.at(0), 0.03);
  EXPECT_NEAR(s.at(500), 0.01, 1e-15);
  EXPECT_NEAR(s.at(250), std::sqrt(0.03 * 0.01), 1e-15);
  EXPECT_NEAR(s.at(900), 0.01, 1e-15);
  EXPECT_EQ(LrSchedule::constant(0.2).at(77), 0.2);
}

TEST(SmoothReparam, ZeroStiffnessIsIdentity) {
  const TriMesh m = testing::jittered_grid(4, 4, 1);
  const SmoothReparam r(graph_laplacian(m), 0.0);
  const Eigen::MatrixXd u = r.to_latent(m.vertices);
  EXPECT_EQ(u, to_matrix(m.vertices));
  const auto back = r.push(u);
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_NEAR((back[i] - m.vertices[i]).norm(), 0.0, 1e-14);
  const auto pb = r.pullback(m.vertices);
  EXPECT_NEAR((pb - to_matrix(m.vertices)).norm(), 0.0, 1e-12);
}

TEST(SmoothReparam, RoundTripAndDenseOracle) {
  const TriMesh m = testing::jittered_grid(5, 4, 2);
  const Eigen::SparseMatrix<double> l = graph_laplacian(m);
  const SmoothReparam r(l, 19.0);
  const auto back = r.push(r.to_latent(m.vertices));
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_NEAR((back[i] - m.vertices[i]).norm(), 0.0, 1e-9);

  const Eigen::Index n = l.rows();
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) + 19.0 * Eigen::MatrixXd(l);
  // Spike gradient on an interior vertex.
  const std::size_t spike = 13;
  std::vector<Vec3> g(static_cast<std::size_t>(n), Vec3::Zero());
  g[spike] = Vec3(0, 0, 1);
  const Eigen::MatrixXd pulled = r.pullback(g);
  const Eigen::MatrixXd oracle = a.partialPivLu().solve(to_matrix(g));
  EXPECT_NEAR((pulled - oracle).norm(), 0.0, 1e-12);
  const Adjacency adj = build_adjacency(m);
  for (int nb : adj.one_ring[spike]) EXPECT_GT(pulled(nb, 2), 0.0);
  EXPECT_LT(pulled(static_cast<Eigen::Index>(spike), 2), 1.0);
  // Row sums of (I + lambda L) are one, so the inverse keeps total mass.
  EXPECT_NEAR(pulled.col(2).sum(), 1.0, 1e-12);
}

// One pulled-back step on a spike gradient roughens a flat patch less than a
// raw step of equal norm.
TEST(SmoothReparam, SmoothingBias) {
  const TriMesh flat = make_grid(6, 6);
  const Adjacency adj = build_adjacency(flat);
  const SmoothReparam r(graph_laplacian(flat), 19.0);
  std::vector<Vec3> g(flat.vertex_count(), Vec3::Zero());
  g[24] = Vec3(0, 0, 1);
  const Eigen::MatrixXd u = r.to_latent(flat.vertices);
  const Eigen::MatrixXd pulled = r.pullback(g);
  const auto smooth_dir = r.push(pulled);
  double norm = 0;
  for (const auto& d : smooth_dir) norm += d.squaredNorm();
  norm = std::sqrt(norm);
  const double step = 0.3;
  TriMesh a = flat, b = flat;
  for (std::size_t i = 0; i < flat.vertex_count(); ++i) {
    a.vertices[i] += step * smooth_dir[i] / norm;
    b.vertices[i] += step * g[i];
  }
  EXPECT_LT(e_shape(a, adj).normal, e_shape(b, adj).normal);
  (void)u;
}

// ---------------------------------------------------------------------------
// Curriculum

struct FitSetup {
  ShapeSpace space;
  Fixture fx;
  SceneObservations obs;
};

FitSetup& fit_setup() {
  static FitSetup s = [] {
    FitSetup g;
    g.space = testing::small_space();
    g.fx = generate_fixture(g.space, testing::small_fixture_config(41, 4, 48, 1000));
    g.obs = to_actor_frame(g.fx.scene);
    return g;
  }();
  return s;
}

FitOptions small_options() {
  FitOptions o;
  o.texture_size = 8;
  o.env_directions = 8;
  return o;
}

CurriculumConfig short_curriculum(int s1, int s2, int s3) {
  CurriculumConfig c;
  c.stage1_iters = s1;
  c.stage2_iters = s2;
  c.stage3_iters = s3;
  return c;
}

TEST(Curriculum, Defaults) {
  const CurriculumConfig c;
  EXPECT_EQ(c.stage1_iters, 200);
  EXPECT_EQ(c.stage2_iters, 500);
  EXPECT_EQ(c.stage3_iters, 500);
  EXPECT_EQ(c.latent.schedule.start, 3e-2);
  EXPECT_EQ(c.vertices.kind, OptimizerKind::kAdamUniform);
  EXPECT_EQ(c.vertices.schedule.start, 3e-2);
  EXPECT_EQ(c.camera.schedule.start, 1e-4);
  EXPECT_EQ(c.stage3_lr_start, 0.03);
  EXPECT_EQ(c.stage3_lr_end, 0.01);
  EXPECT_EQ(c.reparam_lambda, 19.0);
}

TEST(Curriculum, JsonRoundTrip) {
  CurriculumConfig c = short_curriculum(3, 4, 5);
  c.camera = OptimizerConfig::adam(2e-4);
  EnergyWeights w;
  w.lambda_sym = 0.25;
  CurriculumConfig c2;
  EnergyWeights w2;
  config_from_json(to_json(c, w), c2, w2);
  EXPECT_EQ(to_json(c, w), to_json(c2, w2));
  EXPECT_EQ(c2.stage3_iters, 5);
  EXPECT_EQ(w2.lambda_sym, 0.25);
  CurriculumConfig bad;
  bad.stage1_iters = -1;
  EXPECT_THROW(bad.validate(), ArgumentError);
}

TEST(Stage1, ZeroIterationsKeepsZeroLatent) {
  FitSetup& s = fit_setup();
  FitProblem p(s.space, s.obs, small_options());
  const Stage1Result r = run_stage1_init(p, EnergyWeights{}, short_curriculum(0, 0, 0));
  EXPECT_EQ(r.z, Eigen::VectorXd::Zero(s.space.k()));
  ASSERT_EQ(r.trace.size(), 1u);
}

StageFlags stage1_flags() {
  StageFlags f;
  f.latent = true;
  f.color = false;
  f.sym = false;
  f.appearance = false;
  return f;
}

TEST(Stage1, RecoversDataEnergyOfGroundTruthCode) {
  FitSetup& s = fit_setup();
  FitProblem p(s.space, s.obs, small_options());
  // The shape prior pulls the code away from the data optimum; switch it off.
  EnergyWeights w;
  w.lambda_shape = 0.0;
  const Stage1Result r = run_stage1_init(p, w, short_curriculum(300, 0, 0));
  for (const auto& t : r.trace) {
    EXPECT_EQ(t.stage, 1);
    EXPECT_FALSE(t.report.color_enabled);
  }
  // Data energy at the recovered code against the ground-truth code, same
  // wheel defaults and poses.
  FitState at = p.initial_state();
  at.object = s.fx.object_in_actor();
  FitState fit = p.initial_state();
  fit.z = r.z;
  at.z = s.fx.z_gt;
  const double e_fit = p.evaluate(fit, w, stage1_flags(), 5).total;
  const double e_gt = p.evaluate(at, w, stage1_flags(), 5).total;
  EXPECT_LT(e_fit, 1.05 * e_gt) << "fit " << e_fit << " gt " << e_gt;
}

TEST(Stage1, LidarOnlyTraceDescends) {
  FitSetup& s = fit_setup();
  FitProblem p(s.space, s.obs, small_options());
  EnergyWeights w;
  w.lambda_mask = 0.0;
  const Stage1Result r = run_stage1_init(p, w, short_curriculum(120, 0, 0));
  // Moving average over windows of 10 never increases.
  std::vector<double> avg;
  for (std::size_t i = 0; i + 10 <= r.trace.size(); i += 10) {
    double a = 0;
    for (std::size_t j = i; j < i + 10; ++j) a += r.trace[j].report.total;
    avg.push_back(a / 10);
  }
  for (std::size_t i = 1; i < avg.size(); ++i) EXPECT_LE(avg[i], avg[i - 1] * (1 + 1e-3));
  EXPECT_LT(avg.back(), avg.front());
}

TEST(Stage1, DivergenceRaisesFitErrorWithTrace) {
  FitSetup& s = fit_setup();
  FitProblem p(s.space, s.obs, small_options());
  CurriculumConfig c = short_curriculum(50, 0, 0);
  c.latent = OptimizerConfig::adam(50.0);
  try {
    run_stage1_init(p, EnergyWeights{}, c);
    FAIL() << "expected divergence";
  } catch (const FitError& e) {
    EXPECT_FALSE(e.trace().empty());
  }
}

TEST(FullFit, RegularizerOnlySmoothsMonotonically) {
  FitSetup& s = fit_setup();
  FitProblem p(s.space, s.obs, small_options());
  EnergyWeights w;
  w.lambda_mask = w.lambda_lidar = w.lambda_sym = w.lambda_app = 0.0;
  CurriculumConfig c = short_curriculum(0, 100, 0);
  c.optimize_cameras = c.optimize_object = false;
  // Small steps: at the default rate sign-like vertex updates oscillate.
  c.latent = OptimizerConfig::adam(3e-3);
  c.vertices = OptimizerConfig::adam_uniform(3e-3);
  c.wheel = OptimizerConfig::adam(3e-3);
  // Start from a rough shape.
  Eigen::VectorXd z = 2.0 * s.space.codes.col(0);
  const FitResult r = run_full_fit(p, z, w, c);
  std::vector<double> avg;
  for (std::size_t i = 0; i + 10 <= r.trace.size(); i += 10) {
    double a = 0;
    for (std::size_t j = i; j < i + 10; ++j) a += r.trace[j].report.normal;
    avg.push_back(a / 10);
  }
  for (std::size_t i = 1; i < avg.size(); ++i) EXPECT_LT(avg[i], avg[i - 1]);
}

TEST(FullFit, StageIsolationAndDeterminism) {
  FitSetup& s = fit_setup();
  FitProblem p(s.space, s.obs, small_options());
  const CurriculumConfig c = short_curriculum(10, 10, 10);
  const FitResult a = fit_scene(p, EnergyWeights{}, c);
  const FitResult b = fit_scene(p, EnergyWeights{}, c);
  ASSERT_EQ(a.trace.size(), 31u);  // stage 1 also records its final evaluation
  for (const auto& t : a.trace) {
    if (t.stage <= 2) {
      EXPECT_FALSE(t.report.color_enabled);
      EXPECT_FALSE(t.report.to_json().contains("color"));
    } else {
      EXPECT_TRUE(t.report.color_enabled);
    }
  }
  EXPECT_EQ(trace_digest(a.trace), trace_digest(b.trace));
  const auto dir = testing::scratch_dir("fitdet");
  save_asset(dir / "a.cta", a.asset);
  save_asset(dir / "b.cta", b.asset);
  std::ifstream fa(dir / "a.cta", std::ios::binary), fb(dir / "b.cta", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_EQ(sa, sb);
  EXPECT_NO_THROW(assemble(a.asset.vehicle).validate());
}

TEST(FullFit, PoseFlagsFreezePoses) {
  FitSetup& s = fit_setup();
  FitProblem p(s.space, s.obs, small_options());
  CurriculumConfig c = short_curriculum(0, 5, 5);
  c.optimize_cameras = false;
  c.optimize_object = false;
  const FitResult r = run_full_fit(p, Eigen::VectorXd::Zero(s.space.k()), EnergyWeights{}, c);
  const FitState init = p.initial_state();
  for (std::size_t i = 0; i < init.cameras.size(); ++i) {
    EXPECT_EQ(r.state.cameras[i].rot6, init.cameras[i].rot6);
    EXPECT_EQ(r.state.cameras[i].translation, init.cameras[i].translation);
  }
  EXPECT_EQ(r.state.object.translation, init.object.translation);
}

TEST(FullFit, CheckpointsWritten) {
  FitSetup& s = fit_setup();
  FitProblem p(s.space, s.obs, small_options());
  CurriculumConfig c = short_curriculum(0, 6, 4);
  c.checkpoint_every = 5;
  c.checkpoint_dir = testing::scratch_dir("ckpt");
  run_full_fit(p, Eigen::VectorXd::Zero(s.space.k()), EnergyWeights{}, c);
  EXPECT_TRUE(std::filesystem::exists(c.checkpoint_dir / "checkpoint_00005.cta"));
  EXPECT_TRUE(std::filesystem::exists(c.checkpoint_dir / "checkpoint_00010.cta"));
  EXPECT_NO_THROW(load_asset(c.checkpoint_dir / "checkpoint_00010.cta"));
}

TEST(FullFit, SoftnessHalvesDuringStageThree) {
  FitSetup& s = fit_setup();
  FitProblem p(s.space, s.obs, small_options());
  const FitResult r = run_full_fit(p, Eigen::VectorXd::Zero(s.space.k()), EnergyWeights{}, short_curriculum(0, 3, 9));
  std::vector<double> taus;
  for (const auto& t : r.trace) taus.push_back(t.softness);
  EXPECT_EQ(taus.front(), 1.0);
  EXPECT_EQ(taus.back(), 0.25);
  for (std::size_t i = 1; i < taus.size(); ++i) EXPECT_LE(taus[i], taus[i - 1]);
}

}  // namespace
}  // namespace cadtwin
