// cadtwin command-line front end.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cadtwin/asset.hpp"
#include "cadtwin/error.hpp"
#include "cadtwin/fit.hpp"
#include "cadtwin/fixture.hpp"
#include "cadtwin/metrics.hpp"
#include "cadtwin/parallel.hpp"
#include "cadtwin/pipeline.hpp"
#include "cadtwin/serialization.hpp"
#include "cadtwin/shape_space.hpp"

namespace fs = std::filesystem;
using namespace cadtwin;

namespace {

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Accepts either a bare pose object or {"pose": {...}}.
Pose6D read_pose(const fs::path& path) {
  const nlohmann::json j = read_json(path);
  return pose_from_json(j.contains("pose") ? j["pose"] : j);
}

fs::path default_pattern() {
#ifdef CADTWIN_DATA_DIR
  return fs::path(CADTWIN_DATA_DIR) / "lidar_pattern_64.json";
#else
  return "data/lidar_pattern_64.json";
#endif
}

// --- build-shape-space ----------------------------------------------------

struct BuildSpaceArgs {
  fs::path exemplars, out;
  int k = 25;
  std::vector<double> axis{0.0, 1.0, 0.0};
};

void cmd_build_space(const BuildSpaceArgs& a) {
  const ExemplarSet set = read_exemplars(a.exemplars);
  const ShapeSpace space = build_shape_space(set.meshes, set.labels, set.rig, a.k, Vec3(a.axis[0], a.axis[1], a.axis[2]));
  save_shape_space(a.out, space);
  spdlog::info("shape space: {} exemplars, k = {}, {} vertices -> {}", set.meshes.size(), space.k(),
               space.vertex_count(), a.out.string());
}

// --- generate-exemplars ---------------------------------------------------

struct ExemplarArgs {
  fs::path out;
  int count = 12;
  int subdivisions = 8;
  int wheel_segments = 16;
};

void cmd_generate_exemplars(const ExemplarArgs& a, std::uint64_t seed) {
  write_exemplars(a.out, make_synthetic_exemplars(a.count, seed, a.subdivisions, a.wheel_segments));
  spdlog::info("wrote {} exemplars to {}", a.count, a.out.string());
}

// --- generate-fixture -----------------------------------------------------

struct FixtureArgs {
  fs::path space, out, pattern = default_pattern();
  FixtureConfig cfg;
};

void cmd_generate_fixture(FixtureArgs a, std::uint64_t seed) {
  const ShapeSpace space = load_shape_space(a.space);
  a.cfg.seed = seed;
  if (a.cfg.lidar_points > 0) a.cfg.pattern = load_pattern(a.pattern);
  const Fixture fx = generate_fixture(space, a.cfg);
  save_scene(a.out / "scene.json", fx.scene);
  if (!fx.held_out.empty()) {
    SceneObservations held;
    held.scene_id = fx.scene.scene_id + "_heldout";
    held.frames = fx.held_out;
    held.box = fx.scene.box;
    held.metadata = fx.scene.metadata;
    save_scene(a.out / "heldout" / "scene.json", held);
  }
  save_asset(a.out / "ground_truth.cta", fx.ground_truth);
  write_json(a.out / "ground_truth.json",
             {{"true_box", to_json(fx.true_box)}, {"object_in_actor", to_json(fx.object_in_actor())}});
  spdlog::info("fixture: {} views, {} held out, {} points -> {}", fx.scene.frames.size(), fx.held_out.size(),
               fx.scene.cloud.size(), a.out.string());
}

// --- fit ------------------------------------------------------------------

struct FitArgs {
  fs::path scene, space, out, config, trace_csv, trace_json, report, checkpoint_dir;
  std::optional<int> stage1, stage2, stage3;
  bool no_pose = false;
  bool no_specular = false;
};

nlohmann::json trace_json(const std::vector<TraceEntry>& trace) {
  auto arr = nlohmann::json::array();
  for (const auto& e : trace) {
    arr.push_back({{"stage", e.stage}, {"iteration", e.iteration}, {"softness", e.softness}, {"energy", e.report.to_json()}});
  }
  return arr;
}

int cmd_fit(const FitArgs& a, std::uint64_t seed) {
  const ShapeSpace space = load_shape_space(a.space);
  const SceneObservations obs = load_scene(a.scene);
  CurriculumConfig cfg;
  EnergyWeights weights;
  if (!a.config.empty()) config_from_json(read_json(a.config), cfg, weights);
  cfg.seed = seed;
  if (a.stage1) cfg.stage1_iters = *a.stage1;
  if (a.stage2) cfg.stage2_iters = *a.stage2;
  if (a.stage3) cfg.stage3_iters = *a.stage3;
  if (a.no_pose) cfg.optimize_cameras = cfg.optimize_object = false;
  if (!a.checkpoint_dir.empty()) cfg.checkpoint_dir = a.checkpoint_dir;
  FitOptions options;
  options.specular = !a.no_specular;
  const FitProblem problem(space, obs, options);
  try {
    const FitResult result = fit_scene(problem, weights, cfg);
    save_asset(a.out, result.asset);
    if (!a.trace_csv.empty()) write_trace_csv(a.trace_csv, result.trace);
    if (!a.trace_json.empty()) write_json(a.trace_json, trace_json(result.trace));
    if (!a.report.empty()) {
      write_json(a.report, {{"scene_id", obs.scene_id},
                            {"config", to_json(cfg, weights)},
                            {"final", result.final_report.to_json()},
                            {"provenance",
                             {{"config_hash", result.asset.provenance.config_hash},
                              {"trace_digest", result.asset.provenance.trace_digest}}}});
    }
    spdlog::info("fit done: total {:.6g}, mask {:.6g} -> {}", result.final_report.total, result.final_report.mask,
                 a.out.string());
    return 0;
  } catch (const FitError& e) {
    if (!a.trace_csv.empty()) write_trace_csv(a.trace_csv, e.trace());
    spdlog::error("fit failed: {}", e.what());
    return 3;
  }
}

// --- render ---------------------------------------------------------------

struct RenderArgs {
  fs::path asset, scene, camera, out_dir;
  double softness = 0.0;
  bool no_specular = false;
};

void write_render(const fs::path& dir, const std::string& id, const RenderOutput& r) {
  fs::create_directories(dir);
  write_png(dir / (id + ".png"), r.color);
  write_png(dir / (id + "_mask.png"), r.mask);
  write_raw(dir / (id + ".raw"), r.color);
  write_raw(dir / (id + "_mask.raw"), r.mask);
  write_raw(dir / (id + "_depth.raw"), r.depth);
}

void cmd_render(const RenderArgs& a) {
  const FittedAsset asset = load_asset(a.asset);
  RenderOptions opt;
  opt.softness = a.softness;
  opt.specular = !a.no_specular;
  if (!a.camera.empty()) {
    const nlohmann::json j = read_json(a.camera);
    write_render(a.out_dir, a.camera.stem().string(), render_asset(asset, Pose6D::identity(), camera_from_json(j), opt));
    return;
  }
  if (a.scene.empty()) throw ArgumentError("render needs --scene or --camera");
  const SceneObservations obs = load_scene(a.scene);
  for (const auto& f : obs.frames) write_render(a.out_dir, f.id, render_asset(asset, Pose6D::identity(), f.camera, opt));
  spdlog::info("rendered {} views -> {}", obs.frames.size(), a.out_dir.string());
}

// --- simulate-lidar -------------------------------------------------------

struct LidarArgs {
  fs::path asset, pose, pattern = default_pattern(), background, out;
};

void cmd_simulate_lidar(const LidarArgs& a) {
  const FittedAsset asset = load_asset(a.asset);
  const Pose6D pose = a.pose.empty() ? Pose6D::identity() : read_pose(a.pose);
  LidarPattern pattern = load_pattern(a.pattern);
  if (pattern.frames.empty()) pattern.frames.push_back(Pose6D::identity());
  std::optional<PointCloud> background;
  if (!a.background.empty()) background = read_cloud(a.background);
  const std::vector<double>* intensity = asset.vertex_intensity.empty() ? nullptr : &asset.vertex_intensity;
  const PointCloud sweep = simulate_sweep(asset.placed(), pose, pattern, background ? &*background : nullptr, intensity);
  write_cloud(a.out, sweep);
  fs::path sidecar = a.out;
  sidecar.replace_extension(".json");
  write_json(sidecar, {{"pattern", to_json(pattern)}, {"pose", to_json(pose)}, {"points", sweep.size()},
                       {"background_points", background ? background->size() : 0}});
  spdlog::info("sweep: {} points -> {}", sweep.size(), a.out.string());
}

// --- evaluate -------------------------------------------------------------

struct EvalArgs {
  fs::path asset, scene, out, csv;
  double voxel = 0.0;
};

std::string csv_number(double v) {
  if (std::isinf(v)) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void cmd_evaluate(const EvalArgs& a) {
  const FittedAsset asset = load_asset(a.asset);
  const SceneObservations obs = load_scene(a.scene);
  RenderOptions opt;
  opt.softness = 0.0;
  nlohmann::json report = {{"scene_id", obs.scene_id}};
  auto frames = nlohmann::json::array();
  std::vector<std::pair<std::string, ImageMetrics>> rows;
  ImageMetrics mean{0.0, 0.0, 0.0};
  for (const auto& f : obs.frames) {
    const RenderOutput r = render_asset(asset, Pose6D::identity(), f.camera, opt);
    const ImageMetrics m = masked_image_metrics(r.color, f.image, f.mask);
    nlohmann::json j = metrics_json(m);
    j["id"] = f.id;
    frames.push_back(j);
    rows.emplace_back(f.id, m);
    mean.mse += m.mse / obs.frames.size();
    mean.psnr += m.psnr / obs.frames.size();
    mean.ssim += m.ssim / obs.frames.size();
  }
  report["frames"] = frames;
  if (!obs.frames.empty()) report["mean"] = metrics_json(mean);
  if (!obs.cloud.empty()) {
    PointCloud held = obs.cloud;
    if (a.voxel > 0.0) {
      const VoxelDownsample ds = voxel_downsample(obs.cloud, a.voxel);
      held = PointCloud();
      for (std::size_t i : ds.held_out) held.append(obs.cloud, i);
    }
    if (!held.has_origins()) throw FormatError("evaluation cloud has no ray origins");
    report["lidar"] = metrics_json(lidar_eval(asset.placed(), held, held));
  }
  write_json(a.out, report);
  if (!a.csv.empty()) {
    std::ofstream out(a.csv);
    if (!out) throw IoError("cannot write " + a.csv.string());
    out << "frame,mse,psnr,ssim,lpips,fid\n";
    for (const auto& [id, m] : rows) {
      out << id << ',' << csv_number(m.mse) << ',' << csv_number(m.psnr) << ',' << csv_number(m.ssim) << ",n/a,n/a\n";
    }
  }
  spdlog::info("evaluated {} views -> {}", rows.size(), a.out.string());
}

// --- transfer-texture -----------------------------------------------------

struct TransferArgs {
  fs::path src, dst, out;
};

void cmd_transfer(const TransferArgs& a) { save_asset(a.out, transfer_texture(load_asset(a.src), load_asset(a.dst))); }

// --- insert ---------------------------------------------------------------

struct InsertArgs {
  fs::path asset, scene, pose, pattern, out_dir;
};

void cmd_insert(const InsertArgs& a) {
  const FittedAsset asset = load_asset(a.asset);
  const SceneObservations world = read_scene(a.scene);
  const Pose6D placement = a.pose.empty() ? world.box.pose : read_pose(a.pose);
  fs::create_directories(a.out_dir);
  RenderOptions opt;
  opt.softness = 0.0;
  for (const auto& f : world.frames) {
    // Shade in the actor frame, matching the fit.
    Camera cam = f.camera;
    cam.extrinsics = f.camera.extrinsics.compose(placement);
    const RenderOutput r = render_asset(asset, Pose6D::identity(), cam, opt);
    write_png(a.out_dir / (f.id + ".png"), composite_insert(f.image, r));
  }
  if (!a.pattern.empty()) {
    const LidarPattern pattern = load_pattern(a.pattern);
    const std::vector<double>* intensity = asset.vertex_intensity.empty() ? nullptr : &asset.vertex_intensity;
    write_cloud(a.out_dir / "cloud.ply", simulate_sweep(asset.placed(), placement, pattern, &world.cloud, intensity));
  }
  spdlog::info("inserted into {} views -> {}", world.frames.size(), a.out_dir.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cadtwin: vehicle asset reconstruction and sensor re-simulation"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  int threads = 1;
  std::string log_level = "info";
  app.add_option("--seed", seed, "random seed")->capture_default_str();
  app.add_option("--threads", threads, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off")->capture_default_str();

  BuildSpaceArgs bs;
  auto* c_bs = app.add_subcommand("build-shape-space", "PCA shape space from an exemplar directory");
  c_bs->add_option("--exemplars", bs.exemplars)->required()->check(CLI::ExistingDirectory);
  c_bs->add_option("--k", bs.k)->capture_default_str();
  c_bs->add_option("--out", bs.out)->required();
  c_bs->add_option("--symmetry-axis", bs.axis)->expected(3);

  ExemplarArgs ex;
  auto* c_ex = app.add_subcommand("generate-exemplars", "procedural exemplar directory");
  c_ex->add_option("--out", ex.out)->required();
  c_ex->add_option("--count", ex.count)->capture_default_str();
  c_ex->add_option("--subdivisions", ex.subdivisions)->capture_default_str();
  c_ex->add_option("--wheel-segments", ex.wheel_segments)->capture_default_str();

  FixtureArgs fx;
  auto* c_fx = app.add_subcommand("generate-fixture", "synthetic scene with ground truth");
  c_fx->add_option("--space", fx.space)->required()->check(CLI::ExistingFile);
  c_fx->add_option("--out", fx.out)->required();
  c_fx->add_option("--pattern", fx.pattern)->capture_default_str();
  c_fx->add_option("--views", fx.cfg.view_count)->capture_default_str();
  c_fx->add_option("--heldout", fx.cfg.heldout_views)->capture_default_str();
  c_fx->add_option("--lidar-points", fx.cfg.lidar_points)->capture_default_str();
  c_fx->add_option("--lidar-frames", fx.cfg.lidar_frames)->capture_default_str();
  c_fx->add_option("--image-size", fx.cfg.image_size)->capture_default_str();
  c_fx->add_option("--pose-sigma", fx.cfg.noise.pose_sigma)->capture_default_str();
  c_fx->add_option("--mask-sigma", fx.cfg.noise.mask_sigma)->capture_default_str();
  c_fx->add_option("--scene-id", fx.cfg.scene_id)->capture_default_str();

  FitArgs ft;
  auto* c_ft = app.add_subcommand("fit", "reconstruct an asset from a scene");
  c_ft->add_option("--scene", ft.scene)->required()->check(CLI::ExistingFile);
  c_ft->add_option("--space", ft.space)->required()->check(CLI::ExistingFile);
  c_ft->add_option("--out", ft.out)->required();
  c_ft->add_option("--config", ft.config, "JSON with curriculum and weights")->check(CLI::ExistingFile);
  c_ft->add_option("--trace", ft.trace_csv, "per-iteration energy CSV");
  c_ft->add_option("--trace-json", ft.trace_json, "per-iteration energy JSON");
  c_ft->add_option("--report", ft.report, "final energy and provenance JSON");
  c_ft->add_option("--checkpoint-dir", ft.checkpoint_dir);
  c_ft->add_option("--stage1-iters", ft.stage1);
  c_ft->add_option("--stage2-iters", ft.stage2);
  c_ft->add_option("--stage3-iters", ft.stage3);
  c_ft->add_flag("--no-pose-opt", ft.no_pose, "keep camera and object poses fixed");
  c_ft->add_flag("--no-specular", ft.no_specular);

  RenderArgs rd;
  auto* c_rd = app.add_subcommand("render", "render an asset into scene or explicit cameras");
  c_rd->add_option("--asset", rd.asset)->required()->check(CLI::ExistingFile);
  c_rd->add_option("--scene", rd.scene, "manifest whose cameras are used (actor frame)")->check(CLI::ExistingFile);
  c_rd->add_option("--camera", rd.camera, "single camera JSON in the actor frame")->check(CLI::ExistingFile);
  c_rd->add_option("--softness", rd.softness)->capture_default_str();
  c_rd->add_flag("--no-specular", rd.no_specular);
  c_rd->add_option("--out-dir", rd.out_dir)->required();

  LidarArgs ld;
  auto* c_ld = app.add_subcommand("simulate-lidar", "ray-cast a sweep against an asset");
  c_ld->add_option("--asset", ld.asset)->required()->check(CLI::ExistingFile);
  c_ld->add_option("--pose", ld.pose, "actor frame -> world pose JSON")->check(CLI::ExistingFile);
  c_ld->add_option("--pattern", ld.pattern)->capture_default_str();
  c_ld->add_option("--background", ld.background, "recorded cloud for occlusion editing")->check(CLI::ExistingFile);
  c_ld->add_option("--out", ld.out)->required();

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "masked image and LiDAR metrics");
  c_ev->add_option("--asset", ev.asset)->required()->check(CLI::ExistingFile);
  c_ev->add_option("--scene", ev.scene)->required()->check(CLI::ExistingFile);
  c_ev->add_option("--voxel", ev.voxel, "evaluate LiDAR on points dropped by this voxel grid");
  c_ev->add_option("--out", ev.out)->required();
  c_ev->add_option("--csv", ev.csv);

  TransferArgs tt;
  auto* c_tt = app.add_subcommand("transfer-texture", "copy appearance between assets of one shape space");
  c_tt->add_option("--src", tt.src)->required()->check(CLI::ExistingFile);
  c_tt->add_option("--dst", tt.dst)->required()->check(CLI::ExistingFile);
  c_tt->add_option("--out", tt.out)->required();

  InsertArgs in;
  auto* c_in = app.add_subcommand("insert", "composite an asset into recorded views and LiDAR");
  c_in->add_option("--asset", in.asset)->required()->check(CLI::ExistingFile);
  c_in->add_option("--scene", in.scene)->required()->check(CLI::ExistingFile);
  c_in->add_option("--pose", in.pose, "actor frame -> world placement, default the scene box")->check(CLI::ExistingFile);
  c_in->add_option("--pattern", in.pattern, "LiDAR pattern with sensor frames")->check(CLI::ExistingFile);
  c_in->add_option("--out-dir", in.out_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    spdlog::set_level(spdlog::level::from_str(log_level));
    set_thread_count(threads);
    if (*c_bs) cmd_build_space(bs);
    else if (*c_ex) cmd_generate_exemplars(ex, seed);
    else if (*c_fx) cmd_generate_fixture(fx, seed);
    else if (*c_ft) return cmd_fit(ft, seed);
    else if (*c_rd) cmd_render(rd);
    else if (*c_ld) cmd_simulate_lidar(ld);
    else if (*c_ev) cmd_evaluate(ev);
    else if (*c_tt) cmd_transfer(tt);
    else if (*c_in) cmd_insert(in);
  } catch (const cadtwin::Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("unexpected failure: {}", e.what());
    return 1;
  }
  return 0;
}
