#include "cadtwin/fixture.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include <spdlog/spdlog.h>

#include "cadtwin/error.hpp"
#include "cadtwin/mesh_io.hpp"
#include "cadtwin/pipeline.hpp"
#include "cadtwin/rng.hpp"
#include "cadtwin/serialization.hpp"

namespace cadtwin {
namespace {

constexpr double kPi = std::numbers::pi;

// RNG streams, one per consumer so configs can change independently.
enum Stream : std::uint64_t {
  kExemplarStream = 1,
  kLatentStream,
  kBoxStream,
  kViewStream,
  kHeldOutStream,
  kLidarStream,
  kSubsampleStream,
  kAppearanceStream,
  kNoiseStream,
  kMaskStream,
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct BodyShape {
  double length, width, clearance, belt, roof;
  double cabin_center, cabin_half, taper, nose_drop, roundness;
};

// Cube point pushed onto a superellipsoid so the body has no sharp creases.
Vec3 round_cube(const Vec3& p, double exponent) {
  const double n = std::pow(std::pow(std::abs(p.x()), exponent) + std::pow(std::abs(p.y()), exponent) +
                                std::pow(std::abs(p.z()), exponent),
                            1.0 / exponent);
  return p / n;
}

Vec3 shape_body_vertex(const BodyShape& s, const Vec3& cube_point) {
  const Vec3 p = round_cube(cube_point, s.roundness);
  const double a = p.x(), b = p.y(), t = 0.5 * (p.z() + 1.0);
  const double cabin = sigmoid((a - (s.cabin_center - s.cabin_half)) / 0.08) *
                       sigmoid(((s.cabin_center + s.cabin_half) - a) / 0.08);
  const double ends = std::max(0.0, std::abs(a) - 0.7) / 0.3;
  const double top = s.belt + (s.roof - s.belt) * cabin - s.nose_drop * ends * ends;
  return {a * 0.5 * s.length, b * 0.5 * s.width * (1.0 - s.taper * t * t * cabin),
          s.clearance + t * (top - s.clearance)};
}

Vec2 body_uv(const Vec3& p) {
  return {0.5 * (p.x() + 1.0), 0.85 * (0.25 * (p.z() + 1.0) + 0.25 * (p.y() + 1.0))};
}

Vec2 wheel_uv(const Vec3& p) { return {0.05 + 0.045 * p.x(), 0.95 + 0.045 * p.z()}; }

constexpr double kWheelbaseHalf = 1.35;
constexpr double kTrackHalf = 0.8;
constexpr double kWheelRadius = 0.33;
constexpr double kWheelThickness = 0.22;

WheelRig default_rig() {
  WheelRig rig;
  for (const double x : {kWheelbaseHalf, -kWheelbaseHalf}) {
    for (const double y : {kTrackHalf, -kTrackHalf}) {
      Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
      t.translation() = Vec3(x, y, kWheelRadius);
      rig.poses.push_back(t);
    }
  }
  rig.front_wheels = {0, 1};
  rig.defaults.radius = kWheelRadius;
  rig.defaults.thickness = kWheelThickness;
  return rig;
}

double luminance(const Vec3& c) { return 0.2126 * c.x() + 0.7152 * c.y() + 0.0722 * c.z(); }

Vec3 hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h * 6.0, 6.0);
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  Vec3 rgb;
  if (hp < 1) rgb = {c, x, 0};
  else if (hp < 2) rgb = {x, c, 0};
  else if (hp < 3) rgb = {0, c, x};
  else if (hp < 4) rgb = {0, x, c};
  else if (hp < 5) rgb = {x, 0, c};
  else rgb = {c, 0, x};
  return rgb + Vec3::Constant(v - c);
}

AppearanceParams ground_truth_appearance(std::uint64_t seed, int size, int env_directions) {
  CounterRng rng(seed, kAppearanceStream);
  const Vec3 paint = hsv_to_rgb(rng.uniform(), rng.uniform(0.4, 0.8), rng.uniform(0.45, 0.85));
  const double paint_rough = rng.uniform(0.25, 0.5);
  const double paint_metal = rng.uniform(0.3, 0.8);
  AppearanceParams app;
  app.kd = Texture(size, size);
  app.orm = Texture(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double u = (x + 0.5) / size, v = (y + 0.5) / size;
      Vec3 kd = paint, orm(0.0, paint_rough, paint_metal);
      const double side = std::fmod(v / 0.85, 0.5) / 0.5;  // height on the side panels
      if (v > 0.9) {
        kd = Vec3::Constant(0.06);
        orm = {0.0, 0.9, 0.0};
      } else if (side > 0.62 && side < 0.9 && u > 0.3 && u < 0.72) {
        kd = Vec3(0.08, 0.1, 0.12);  // glass band
        orm = {0.0, 0.1, 0.0};
      } else if (side < 0.2) {
        kd = 0.35 * paint;  // rocker panel
        orm = {0.0, 0.7, 0.1};
      }
      app.kd.set(x, y, kd);
      app.orm.set(x, y, orm);
    }
  }
  app.env = make_uniform_env(static_cast<std::size_t>(env_directions), Vec3::Ones());
  const double sun_az = rng.uniform(0.0, 2.0 * kPi), sun_el = rng.uniform(0.4, 1.1);
  const Vec3 sun(std::cos(sun_el) * std::cos(sun_az), std::cos(sun_el) * std::sin(sun_az), std::sin(sun_el));
  for (std::size_t i = 0; i < app.env.size(); ++i) {
    const Vec3& d = app.env.directions[i];
    const double up = 0.5 * (d.z() + 1.0);
    Vec3 sky = (1.0 - up) * Vec3(0.35, 0.3, 0.25) + up * Vec3(0.7, 0.78, 0.9);
    sky += 2.0 * std::pow(std::max(0.0, d.dot(sun)), 8.0) * Vec3(1.0, 0.95, 0.85);
    app.env.radiance[i] = sky;
  }
  return app;
}

Intrinsics fixture_intrinsics(int size) {
  Intrinsics k;
  k.width = k.height = size;
  k.fx = k.fy = 1.5 * size;
  k.cx = k.cy = 0.5 * size;
  return k;
}

// Camera around the vehicle, in the vehicle frame.
Camera vehicle_view(const Intrinsics& k, CounterRng& rng, double azimuth) {
  const double dist = rng.uniform(8.0, 11.0);
  const double height = rng.uniform(0.8, 3.0);
  const Vec3 eye(dist * std::cos(azimuth), dist * std::sin(azimuth), height);
  const Vec3 target(rng.uniform(-0.3, 0.3), rng.uniform(-0.2, 0.2), rng.uniform(0.5, 0.9));
  return look_at(k, eye, target);
}

SceneFrame render_frame(const FittedAsset& gt, const Pose6D& true_box, const Camera& vehicle_camera,
                        const std::string& id) {
  RenderOptions opt;
  opt.softness = 0.0;
  const RenderOutput r = render_asset(gt, Pose6D::identity(), vehicle_camera, opt);
  const int w = vehicle_camera.intrinsics.width, h = vehicle_camera.intrinsics.height;
  Image background(w, h, 3);
  for (int y = 0; y < h; ++y) {
    const double t = static_cast<double>(y) / std::max(1, h - 1);
    for (int x = 0; x < w; ++x) {
      background.at(x, y, 0) = 0.55 - 0.25 * t;
      background.at(x, y, 1) = 0.6 - 0.25 * t;
      background.at(x, y, 2) = 0.7 - 0.3 * t;
    }
  }
  SceneFrame f;
  f.id = id;
  f.image_path = id + ".png";
  f.mask_path = id + "_mask.png";
  f.image = composite_insert(background, r);
  for (double& v : f.image.data) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  f.mask = Image(w, h, 1);
  for (std::size_t i = 0; i < f.mask.data.size(); ++i) f.mask.data[i] = r.depth.data[i] > 0.0 ? 1.0 : 0.0;
  f.camera = vehicle_camera;
  f.camera.extrinsics = vehicle_camera.extrinsics.compose(true_box.inverse());
  return f;
}

PointCloud subsample(const PointCloud& cloud, std::size_t n, std::uint64_t seed) {
  if (cloud.size() <= n) return cloud;
  std::vector<std::size_t> idx(cloud.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  CounterRng rng(seed, kSubsampleStream);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.index(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  PointCloud out;
  for (std::size_t i : idx) out.append(cloud, i);
  return out;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

ExemplarSet make_synthetic_exemplars(int count, std::uint64_t seed, int body_subdivisions, int wheel_segments) {
  if (count < 1) throw ArgumentError("exemplar count must be positive");
  const TriMesh cube = make_subdivided_cube(body_subdivisions);
  const TriMesh cylinder = make_cylinder(wheel_segments);
  ExemplarSet set;
  set.rig = default_rig();
  for (int e = 0; e < count; ++e) {
    CounterRng rng(seed, kExemplarStream + 1000 * static_cast<std::uint64_t>(e));
    BodyShape s;
    s.length = rng.uniform(3.9, 4.9);
    s.width = rng.uniform(1.65, 1.95);
    s.clearance = rng.uniform(0.15, 0.25);
    s.belt = rng.uniform(0.8, 1.0);
    s.roof = rng.uniform(1.35, 1.7);
    s.cabin_center = rng.uniform(-0.2, 0.1);
    s.cabin_half = rng.uniform(0.3, 0.5);
    s.taper = rng.uniform(0.05, 0.2);
    s.nose_drop = rng.uniform(0.05, 0.25);
    s.roundness = rng.uniform(3.0, 5.0);
    TriMesh body = cube;
    body.uv.resize(body.vertices.size());
    for (std::size_t i = 0; i < body.vertices.size(); ++i) {
      body.uv[i] = body_uv(cube.vertices[i]);
      body.vertices[i] = shape_body_vertex(s, cube.vertices[i]);
    }
    const double dish = rng.uniform(0.0, 0.3);
    const double bulge = rng.uniform(0.97, 1.03);
    TriMesh wheel = cylinder;
    wheel.uv.resize(wheel.vertices.size());
    for (std::size_t i = 0; i < wheel.vertices.size(); ++i) {
      Vec3& v = wheel.vertices[i];
      wheel.uv[i] = wheel_uv(v);
      const bool hub = std::abs(v.x()) < 1e-12 && std::abs(v.z()) < 1e-12;
      if (hub) v.y() *= 1.0 - dish;
      else v.x() *= bulge, v.z() *= bulge;
    }
    TriMesh merged = body;
    append_mesh(merged, wheel);
    if (e == 0) {
      set.labels.assign(body.vertices.size(), kBodyPart);
      set.labels.resize(merged.vertices.size(), kWheelPart);
    }
    set.meshes.push_back(std::move(merged));
  }
  return set;
}

void write_exemplars(const std::filesystem::path& dir, const ExemplarSet& set) {
  std::filesystem::create_directories(dir);
  for (std::size_t e = 0; e < set.meshes.size(); ++e) {
    PlyData ply = mesh_to_ply(set.meshes[e]);
    ply.add("part", std::vector<double>(set.labels.begin(), set.labels.end()));
    char name[32];
    std::snprintf(name, sizeof name, "exemplar_%03zu.ply", e);
    write_ply(dir / name, ply);
  }
  std::ofstream out(dir / "rig.json");
  if (!out) throw IoError("cannot write " + (dir / "rig.json").string());
  out << to_json(set.rig).dump(2) << '\n';
}

ExemplarSet read_exemplars(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("exemplar directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".ply") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw FormatError("no .ply exemplars in " + dir.string());
  ExemplarSet set;
  for (const auto& f : files) {
    const PlyData ply = read_ply(f);
    const auto* part = ply.find("part");
    if (!part) throw FormatError(f.string() + ": missing vertex property 'part'");
    std::vector<std::uint8_t> labels(part->size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      labels[i] = (*part)[i] > 0.5 ? kWheelPart : kBodyPart;
    }
    if (set.meshes.empty()) set.labels = labels;
    else if (labels != set.labels) throw FormatError(f.string() + ": part labels differ from the first exemplar");
    set.meshes.push_back(ply_to_mesh(ply));
  }
  std::ifstream in(dir / "rig.json");
  if (!in) throw IoError("missing rig.json in " + dir.string());
  try {
    set.rig = rig_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError((dir / "rig.json").string() + ": " + e.what());
  }
  return set;
}

Image perturb_mask(const Image& mask, double sigma, std::uint64_t seed) {
  if (mask.channels != 1) throw ArgumentError("mask must have one channel");
  if (!(sigma > 0.0)) return mask;
  constexpr int kWaves = 8;
  CounterRng rng(seed, kMaskStream);
  std::array<std::array<double, 4>, 2 * kWaves> waves{};  // kx, ky, phase, amplitude
  for (auto& w : waves) {
    const double angle = rng.uniform(0.0, 2.0 * kPi);
    const double wavelength = rng.uniform(16.0, 64.0);
    w = {std::cos(angle) * 2.0 * kPi / wavelength, std::sin(angle) * 2.0 * kPi / wavelength,
         rng.uniform(0.0, 2.0 * kPi), std::sqrt(2.0 / kWaves)};
  }
  Image out(mask.width, mask.height, 1);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      Vec2 d = Vec2::Zero();
      for (int c = 0; c < 2; ++c) {
        for (int m = 0; m < kWaves; ++m) {
          const auto& w = waves[c * kWaves + m];
          d[c] += w[3] * std::sin(w[0] * x + w[1] * y + w[2]);
        }
      }
      d *= sigma;
      if (d.norm() > 3.0 * sigma) d *= 3.0 * sigma / d.norm();
      const long sx = std::lround(x + d.x()), sy = std::lround(y + d.y());
      const bool inside = sx >= 0 && sy >= 0 && sx < mask.width && sy < mask.height;
      out.at(x, y) = inside ? mask.at(static_cast<int>(sx), static_cast<int>(sy)) : 0.0;
    }
  }
  return out;
}

Fixture generate_fixture(const ShapeSpace& space, const FixtureConfig& cfg) {
  if (cfg.view_count < 0 || cfg.heldout_views < 0 || cfg.lidar_frames < 0 || cfg.image_size < 8) {
    throw ArgumentError("fixture view counts must be non-negative and images at least 8 px");
  }
  if (cfg.lidar_points > 0) cfg.pattern.validate();
  Fixture fx;

  // Random convex combination of exemplar codes.
  CounterRng latent_rng(cfg.seed, kLatentStream);
  const Eigen::Index n = space.codes.cols();
  Eigen::VectorXd weights(n);
  for (Eigen::Index i = 0; i < n; ++i) weights[i] = -std::log(std::max(1e-12, 1.0 - latent_rng.uniform()));
  weights /= weights.sum();
  fx.z_gt = space.codes * weights;

  FittedAsset& gt = fx.ground_truth;
  gt.vehicle = decode(space, fx.z_gt);
  gt.vehicle.params.radius = space.rig.defaults.radius * latent_rng.uniform(0.95, 1.1);
  gt.vehicle.params.thickness = space.rig.defaults.thickness * latent_rng.uniform(0.9, 1.1);
  gt.appearance = ground_truth_appearance(cfg.seed, cfg.texture_size, cfg.env_directions);
  const TriMesh gt_mesh = gt.assembled();
  gt.vertex_intensity.resize(gt_mesh.vertices.size());
  for (std::size_t i = 0; i < gt_mesh.vertices.size(); ++i) {
    const Vec3 kd = gt_mesh.has_uv() ? sample_bilinear(gt.appearance.kd, gt_mesh.uv[i]) : Vec3::Constant(0.5);
    gt.vertex_intensity[i] = std::clamp(0.1 + 0.8 * luminance(kd), 0.0, 1.0);
  }
  gt.object_pose = Pose6D::identity();
  gt.latent = fx.z_gt;
  gt.provenance = {cfg.scene_id, hex64(counter_hash(cfg.seed, 0, 0)), "ground-truth"};

  CounterRng box_rng(cfg.seed, kBoxStream);
  const double yaw = box_rng.uniform(0.0, 2.0 * kPi);
  const Vec3 center(box_rng.uniform(-20.0, 20.0), box_rng.uniform(-20.0, 20.0), 0.0);
  fx.true_box = Pose6D::from_rt(rotation_about_axis(Vec3::UnitZ(), yaw), center);

  SceneObservations& s = fx.scene;
  s.scene_id = cfg.scene_id;
  Eigen::AlignedBox3d bounds;
  for (const auto& v : gt_mesh.vertices) bounds.extend(v);
  s.box.dimensions = bounds.sizes();
  CounterRng noise_rng(cfg.seed, kNoiseStream);
  Vec3 offset;
  for (int a = 0; a < 3; ++a) offset[a] = cfg.noise.pose_sigma * noise_rng.normal();
  s.box.pose = fx.true_box;
  s.box.pose.translation += offset;

  const Intrinsics k = fixture_intrinsics(cfg.image_size);
  char id[32];
  CounterRng view_rng(cfg.seed, kViewStream);
  for (int i = 0; i < cfg.view_count; ++i) {
    const double step = 2.0 * kPi / cfg.view_count;
    const double az = step * i + view_rng.uniform(-0.3, 0.3) * step;
    std::snprintf(id, sizeof id, "view_%03d", i);
    SceneFrame f = render_frame(gt, fx.true_box, vehicle_view(k, view_rng, az), id);
    f.mask = perturb_mask(f.mask, cfg.noise.mask_sigma, counter_hash(cfg.seed, kMaskStream, i));
    s.frames.push_back(std::move(f));
  }
  CounterRng held_rng(cfg.seed, kHeldOutStream);
  for (int i = 0; i < cfg.heldout_views; ++i) {
    const double step = 2.0 * kPi / cfg.heldout_views;
    const double az = step * (i + 0.5) + held_rng.uniform(-0.2, 0.2) * step;
    std::snprintf(id, sizeof id, "heldout_%03d", i);
    fx.held_out.push_back(render_frame(gt, fx.true_box, vehicle_view(k, held_rng, az), id));
  }

  if (cfg.lidar_points > 0 && cfg.lidar_frames > 0) {
    LidarPattern pattern = cfg.pattern;
    pattern.frames.clear();
    CounterRng lidar_rng(cfg.seed, kLidarStream);
    for (int i = 0; i < cfg.lidar_frames; ++i) {
      const double az = 2.0 * kPi * (i + lidar_rng.uniform(0.0, 0.8)) / cfg.lidar_frames;
      const double dist = lidar_rng.uniform(6.0, 12.0);
      const Pose6D local = Pose6D::from_rt(rotation_about_axis(Vec3::UnitZ(), lidar_rng.uniform(0.0, 2.0 * kPi)),
                                           Vec3(dist * std::cos(az), dist * std::sin(az), 1.8));
      pattern.frames.push_back(fx.true_box.compose(local));
    }
    const PointCloud sweep = simulate_sweep(gt_mesh, fx.true_box, pattern, nullptr, &gt.vertex_intensity);
    if (sweep.size() < cfg.lidar_points) {
      spdlog::warn("fixture sweep returned {} points, fewer than the requested {}", sweep.size(), cfg.lidar_points);
    }
    s.cloud = subsample(sweep, cfg.lidar_points, cfg.seed);
  }

  nlohmann::json z = nlohmann::json::array();
  for (Eigen::Index i = 0; i < fx.z_gt.size(); ++i) z.push_back(fx.z_gt[i]);
  s.metadata = {{"generator", "cadtwin synthetic fixture"},
                {"seed", cfg.seed},
                {"pose_sigma", cfg.noise.pose_sigma},
                {"mask_sigma", cfg.noise.mask_sigma},
                {"true_box", to_json(fx.true_box)},
                {"z_gt", z}};
  s.validate();
  return fx;
}

}  // namespace cadtwin
