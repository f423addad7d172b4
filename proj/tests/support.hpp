// Shared fixtures and oracles for the test suites and the acceptance runner.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "cadtwin/fit.hpp"
#include "cadtwin/fixture.hpp"
#include "cadtwin/image.hpp"
#include "cadtwin/lidar.hpp"
#include "cadtwin/mesh.hpp"
#include "cadtwin/rng.hpp"

namespace cadtwin::testing {

inline std::filesystem::path data_dir() { return CADTWIN_DATA_DIR; }

inline std::filesystem::path default_pattern_path() { return data_dir() / "lidar_pattern_64.json"; }
inline LidarPattern default_pattern() { return load_pattern(default_pattern_path()); }

// Fresh scratch directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("cadtwin_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Vec3 random_vec(CounterRng& rng, double scale = 1.0) {
  return {scale * rng.normal(), scale * rng.normal(), scale * rng.normal()};
}

inline Pose6D random_pose(CounterRng& rng, double translation_scale = 1.0) {
  const Vec3 axis = random_vec(rng).normalized();
  return Pose6D::from_rt(rotation_about_axis(axis, rng.uniform(-3.0, 3.0)), random_vec(rng, translation_scale));
}

// (nx+1) x (ny+1) grid with jittered interior heights.
inline TriMesh jittered_grid(int nx, int ny, std::uint64_t seed, double jitter = 0.1) {
  TriMesh m = make_grid(nx, ny);
  CounterRng rng(seed);
  for (auto& v : m.vertices) v.z() = jitter * rng.normal();
  return m;
}

inline std::vector<Vec3> random_points(CounterRng& rng, std::size_t n, double scale = 1.0) {
  std::vector<Vec3> p(n);
  for (auto& x : p) x = random_vec(rng, scale);
  return p;
}

// Small shape space built from coarse synthetic exemplars.
inline ShapeSpace small_space(int exemplars = 6, int subdivisions = 3, int wheel_segments = 8, std::uint64_t seed = 5) {
  const ExemplarSet set = make_synthetic_exemplars(exemplars, seed, subdivisions, wheel_segments);
  return build_shape_space(set.meshes, set.labels, set.rig, exemplars);
}

inline FixtureConfig small_fixture_config(std::uint64_t seed, int views = 3, int size = 48, std::size_t points = 300) {
  FixtureConfig c;
  c.seed = seed;
  c.view_count = views;
  c.heldout_views = 0;
  c.lidar_points = points;
  c.lidar_frames = 2;
  c.image_size = size;
  c.texture_size = 8;
  c.env_directions = 8;
  c.pattern = default_pattern();
  return c;
}

// Brute-force trimmed asymmetric Chamfer: cloud -> samples.
inline double brute_trimmed_chamfer(const std::vector<Vec3>& cloud, const std::vector<Vec3>& samples, double trim) {
  std::vector<double> d(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : samples) best = std::min(best, (cloud[i] - s).squaredNorm());
    d[i] = best;
  }
  std::sort(d.begin(), d.end());
  const std::size_t keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(trim * cloud.size() + 1e-9)));
  double sum = 0.0;
  for (std::size_t i = 0; i < keep; ++i) sum += d[i];
  return sum / static_cast<double>(keep);
}

inline double brute_directed(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  double sum = 0.0;
  for (const auto& p : a) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b) best = std::min(best, (p - q).squaredNorm());
    sum += best;
  }
  return sum / static_cast<double>(a.size());
}

struct NaiveMetrics {
  double mse, psnr, ssim;
};

// Reference image metrics, two-pass: explicit 2D Gaussian, centered second moments.
inline NaiveMetrics naive_image_metrics(const Image& a, const Image& b, const Image& mask) {
  double se = 0;
  long n = 0;
  double ssim = 0;
  long windows = 0;
  const double s2 = 1.5 * 1.5, c1 = 1e-4, c2 = 9e-4;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      if (mask.at(x, y) <= 0.5) continue;
      for (int c = 0; c < a.channels; ++c) {
        const double d = a.at(x, y, c) - b.at(x, y, c);
        se += d * d;
        ++n;
        double ws = 0, ma = 0, mb = 0;
        for (int v = y - 5; v <= y + 5; ++v)
          for (int u = x - 5; u <= x + 5; ++u) {
            if (u < 0 || v < 0 || u >= a.width || v >= a.height) continue;
            const double wt = std::exp(-((u - x) * (u - x) + (v - y) * (v - y)) / (2 * s2));
            ws += wt;
            ma += wt * a.at(u, v, c);
            mb += wt * b.at(u, v, c);
          }
        ma /= ws;
        mb /= ws;
        double va = 0, vb = 0, cov = 0;
        for (int v = y - 5; v <= y + 5; ++v)
          for (int u = x - 5; u <= x + 5; ++u) {
            if (u < 0 || v < 0 || u >= a.width || v >= a.height) continue;
            const double wt = std::exp(-((u - x) * (u - x) + (v - y) * (v - y)) / (2 * s2)) / ws;
            const double da = a.at(u, v, c) - ma, db = b.at(u, v, c) - mb;
            va += wt * da * da;
            vb += wt * db * db;
            cov += wt * da * db;
          }
        ssim += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++windows;
      }
    }
  }
  const double mse = se / n;
  return {mse, 10 * std::log10(1.0 / mse), ssim / windows};
}

// ---------------------------------------------------------------------------
// Finite-difference gradient suite over FitProblem::evaluate.

enum class Term { kColor, kMask, kLidar, kShape, kApp, kSym };
enum class Group { kVertices, kLatent, kWheel, kObject, kCamera, kKd, kOrm, kEnv };

inline const char* term_name(Term t) {
  switch (t) {
    case Term::kColor: return "color";
    case Term::kMask: return "mask";
    case Term::kLidar: return "lidar";
    case Term::kShape: return "shape";
    case Term::kApp: return "app";
    case Term::kSym: return "sym";
  }
  return "?";
}

inline const char* group_name(Group g) {
  switch (g) {
    case Group::kVertices: return "vertices";
    case Group::kLatent: return "z";
    case Group::kWheel: return "wheel";
    case Group::kObject: return "object_pose";
    case Group::kCamera: return "camera_pose";
    case Group::kKd: return "kd";
    case Group::kOrm: return "orm";
    case Group::kEnv: return "env";
  }
  return "?";
}

inline constexpr Term kAllTerms[] = {Term::kColor, Term::kMask, Term::kLidar, Term::kShape, Term::kApp, Term::kSym};
inline constexpr Group kAllGroups[] = {Group::kVertices, Group::kLatent, Group::kWheel, Group::kObject,
                                       Group::kCamera,   Group::kKd,     Group::kOrm,   Group::kEnv};

inline void isolate(Term t, StageFlags& f, EnergyWeights& w) {
  f.color = t == Term::kColor;
  f.mask = t == Term::kMask;
  f.lidar = t == Term::kLidar;
  f.shape = t == Term::kShape;
  f.appearance = t == Term::kApp;
  f.sym = t == Term::kSym;
  w.lambda_mask = w.lambda_lidar = w.lambda_shape = w.lambda_sym = w.lambda_app = 1.0;
  // Raise the material weight so the Sobel term is visible next to the light term.
  w.lambda_mat = 1e-2;
  w.lambda_light = 1e-2;
}

// Flat views of one variable group: read the coordinates of a state and
// write them back.
inline std::vector<double> get_group(const FitState& s, Group g, std::size_t camera) {
  std::vector<double> x;
  auto push3 = [&](const Vec3& v) { x.insert(x.end(), {v.x(), v.y(), v.z()}); };
  switch (g) {
    case Group::kVertices:
      for (const auto& v : s.vertices) push3(v);
      break;
    case Group::kLatent:
      x.assign(s.z.data(), s.z.data() + s.z.size());
      break;
    case Group::kWheel:
      x = {s.wheel.radius, s.wheel.thickness, s.wheel.steer};
      push3(s.wheel.front_offset);
      push3(s.wheel.back_offset);
      break;
    case Group::kObject:
    case Group::kCamera: {
      const Pose6D& p = g == Group::kObject ? s.object : s.cameras[camera];
      x.assign(p.rot6.data(), p.rot6.data() + 6);
      push3(p.translation);
      break;
    }
    case Group::kKd: x = s.appearance.kd.texels; break;
    case Group::kOrm: x = s.appearance.orm.texels; break;
    case Group::kEnv:
      for (const auto& c : s.appearance.env.radiance) push3(c);
      break;
  }
  return x;
}

inline void set_group(FitState& s, Group g, std::size_t camera, const std::vector<double>& x) {
  auto v3 = [&](std::size_t i) { return Vec3(x[i], x[i + 1], x[i + 2]); };
  switch (g) {
    case Group::kVertices:
      for (std::size_t i = 0; i < s.vertices.size(); ++i) s.vertices[i] = v3(3 * i);
      break;
    case Group::kLatent:
      for (Eigen::Index i = 0; i < s.z.size(); ++i) s.z[i] = x[static_cast<std::size_t>(i)];
      break;
    case Group::kWheel:
      s.wheel.radius = x[0];
      s.wheel.thickness = x[1];
      s.wheel.steer = x[2];
      s.wheel.front_offset = v3(3);
      s.wheel.back_offset = v3(6);
      break;
    case Group::kObject:
    case Group::kCamera: {
      Pose6D& p = g == Group::kObject ? s.object : s.cameras[camera];
      for (int i = 0; i < 6; ++i) p.rot6[i] = x[i];
      p.translation = v3(6);
      break;
    }
    case Group::kKd: s.appearance.kd.texels = x; break;
    case Group::kOrm: s.appearance.orm.texels = x; break;
    case Group::kEnv:
      for (std::size_t i = 0; i < s.appearance.env.radiance.size(); ++i) s.appearance.env.radiance[i] = v3(3 * i);
      break;
  }
}

inline std::vector<double> grad_group(const FitGradient& g, Group grp, std::size_t camera) {
  std::vector<double> x;
  auto push3 = [&](const Vec3& v) { x.insert(x.end(), {v.x(), v.y(), v.z()}); };
  switch (grp) {
    case Group::kVertices:
      for (const auto& v : g.vertices) push3(v);
      break;
    case Group::kLatent:
      x.assign(g.z.data(), g.z.data() + g.z.size());
      break;
    case Group::kWheel:
      x = {g.wheel.radius, g.wheel.thickness, g.wheel.steer};
      push3(g.wheel.front_offset);
      push3(g.wheel.back_offset);
      break;
    case Group::kObject:
    case Group::kCamera: {
      const PoseGrad& p = grp == Group::kObject ? g.object : g.cameras[camera];
      x.assign(p.rot6.data(), p.rot6.data() + 6);
      push3(p.translation);
      break;
    }
    case Group::kKd: x = g.appearance.kd.texels; break;
    case Group::kOrm: x = g.appearance.orm.texels; break;
    case Group::kEnv:
      for (const auto& c : g.appearance.radiance) push3(c);
      break;
  }
  return x;
}

struct GradCheck {
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

// Directional derivative check with central differences. Three step sizes are
// tried and the best agreement kept: a step that straddles a pixel's
// visibility flip shows up as a jump at the larger sizes only.
inline GradCheck check_direction(const FitProblem& problem, const FitState& state, const EnergyWeights& w,
                                 const StageFlags& flags, Group g, std::size_t camera, const std::vector<double>& dir,
                                 double step) {
  FitGradient grad;
  problem.evaluate(state, w, flags, 11, &grad);
  const std::vector<double> ga = grad_group(grad, g, camera);
  GradCheck out;
  for (std::size_t i = 0; i < dir.size(); ++i) out.analytic += ga[i] * dir[i];
  const std::vector<double> x0 = get_group(state, g, camera);
  out.rel_error = std::numeric_limits<double>::infinity();
  for (const double h : {step, step / 4.0, step / 16.0}) {
    FitState sp = state, sm = state;
    std::vector<double> xp = x0, xm = x0;
    for (std::size_t i = 0; i < dir.size(); ++i) {
      xp[i] += h * dir[i];
      xm[i] -= h * dir[i];
    }
    set_group(sp, g, camera, xp);
    set_group(sm, g, camera, xm);
    const double fd = (problem.evaluate(sp, w, flags, 11).total - problem.evaluate(sm, w, flags, 11).total) / (2.0 * h);
    const double scale = std::max({std::abs(out.analytic), std::abs(fd), 1e-12});
    const double rel = std::abs(out.analytic - fd) / scale;
    // Both sides below the noise floor of the differences count as agreeing zeros.
    const double err = std::max(std::abs(out.analytic), std::abs(fd)) < 1e-9 ? 0.0 : rel;
    if (err < out.rel_error) {
      out.rel_error = err;
      out.numeric = fd;
    }
  }
  return out;
}

// Randomized state around the problem's initial state.
inline FitState random_state(const FitProblem& problem, CounterRng& rng) {
  FitState s = problem.initial_state();
  const ShapeSpace& space = problem.space();
  for (Eigen::Index i = 0; i < s.z.size(); ++i) {
    const double spread = space.codes.cols() > 1 ? std::sqrt(space.codes.row(i).squaredNorm() / space.codes.cols()) : 0.0;
    s.z[i] = 0.5 * spread * rng.normal();
  }
  s.vertices = space.decode_vertices(s.z);
  for (auto& v : s.vertices) v += random_vec(rng, 0.01);
  s.wheel.radius *= rng.uniform(0.9, 1.1);
  s.wheel.thickness *= rng.uniform(0.9, 1.1);
  s.wheel.steer = rng.uniform(-0.2, 0.2);
  s.wheel.front_offset = random_vec(rng, 0.02);
  s.wheel.back_offset = random_vec(rng, 0.02);
  s.object = Pose6D::from_rt(rotation_about_axis(random_vec(rng).normalized(), rng.uniform(-0.05, 0.05)),
                             random_vec(rng, 0.05));
  for (auto& c : s.cameras) {
    c.translation += random_vec(rng, 0.02);
    for (int i = 0; i < 6; ++i) c.rot6[i] += 0.005 * rng.normal();
  }
  for (double& t : s.appearance.kd.texels) t = rng.uniform(0.1, 0.9);
  for (std::size_t i = 0; i < s.appearance.orm.texels.size(); i += 3) {
    s.appearance.orm.texels[i] = 0.0;
    s.appearance.orm.texels[i + 1] = rng.uniform(0.2, 0.9);
    s.appearance.orm.texels[i + 2] = rng.uniform(0.05, 0.95);
  }
  for (auto& c : s.appearance.env.radiance) c = Vec3(rng.uniform(0.2, 1.5), rng.uniform(0.2, 1.5), rng.uniform(0.2, 1.5));
  return s;
}

struct SuiteCell {
  Term term;
  Group group;
  double worst = 0.0;
  double tolerance = 0.0;
  int checks = 0;
  double largest = 0.0;  // largest |directional derivative| seen, to spot vacuous checks
  bool pass() const { return worst < tolerance; }
};

// Every (term, group) pair over `configs` random states of a small fixture.
// Silhouette-softened mask checks use the 1e-2 tolerance, all others 1e-3.
inline std::vector<SuiteCell> run_gradient_suite(int configs, std::uint64_t seed) {
  const ShapeSpace space = small_space();
  const Fixture fx = generate_fixture(space, small_fixture_config(seed));
  const SceneObservations obs = to_actor_frame(fx.scene);
  FitOptions opt;
  opt.texture_size = 8;
  opt.env_directions = 8;
  FitProblem problem(space, obs, opt);
  std::vector<SuiteCell> cells;
  for (Term t : kAllTerms) {
    for (Group g : kAllGroups) cells.push_back({t, g, 0.0, t == Term::kMask ? 1e-2 : 1e-3, 0, 0.0});
  }
  CounterRng rng(seed, 99);
  for (int c = 0; c < configs; ++c) {
    const FitState state = random_state(problem, rng);
    // Freeze the LiDAR sample layout at this configuration.
    {
      TriMesh placed = assemble(problem.vehicle(state, false));
      problem.freeze_samples(sample_surface(placed, 500, counter_hash(seed, 7, static_cast<std::uint64_t>(c))));
    }
    for (auto& cell : cells) {
      StageFlags flags;
      EnergyWeights w;
      isolate(cell.term, flags, w);
      flags.latent = cell.group == Group::kLatent;
      flags.softness = 1.0;
      const std::size_t camera = static_cast<std::size_t>(rng.index(obs.frames.size()));
      const std::size_t n = get_group(state, cell.group, camera).size();
      std::vector<double> dir(n);
      for (double& d : dir) d = rng.normal();
      const bool geometric = cell.group != Group::kKd && cell.group != Group::kOrm && cell.group != Group::kEnv;
      const GradCheck r = check_direction(problem, state, w, flags, cell.group, camera, dir, geometric ? 1e-6 : 1e-5);
      cell.worst = std::max(cell.worst, r.rel_error);
      cell.largest = std::max(cell.largest, std::abs(r.analytic));
      ++cell.checks;
    }
  }
  problem.freeze_samples({});
  return cells;
}

}  // namespace cadtwin::testing
