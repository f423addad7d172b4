#include "cadtwin/fit.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <utility>

#include <spdlog/spdlog.h>
#include <zlib.h>

#include "cadtwin/rng.hpp"
#include "cadtwin/shape_energy.hpp"

namespace cadtwin {
namespace {

Eigen::VectorXd pack(const Pose6D& p) {
  Eigen::VectorXd v(9);
  v << p.rot6, p.translation;
  return v;
}

Pose6D unpack_pose(const Eigen::VectorXd& v) {
  Pose6D p;
  p.rot6 = v.head<6>();
  p.translation = v.tail<3>();
  return p;
}

Eigen::VectorXd pack(const PoseGrad& g) {
  Eigen::VectorXd v(9);
  v << g.rot6, g.translation;
  return v;
}

Eigen::VectorXd pack(const WheelParams& w) {
  Eigen::VectorXd v(9);
  v << w.radius, w.thickness, w.front_offset, w.back_offset, w.steer;
  return v;
}

Eigen::VectorXd pack(const WheelParamsGrad& w) {
  Eigen::VectorXd v(9);
  v << w.radius, w.thickness, w.front_offset, w.back_offset, w.steer;
  return v;
}

WheelParams unpack_wheel(const Eigen::VectorXd& v) {
  WheelParams w;
  w.radius = std::max(v[0], 1e-3);
  w.thickness = std::max(v[1], 1e-3);
  w.front_offset = v.segment<3>(2);
  w.back_offset = v.segment<3>(5);
  w.steer = v[8];
  return w;
}

Eigen::Map<Eigen::VectorXd> as_vector(std::vector<double>& v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

Eigen::Map<const Eigen::VectorXd> as_vector(const std::vector<double>& v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

Eigen::VectorXd radiance_vector(const std::vector<Vec3>& r) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(r.size() * 3));
  for (std::size_t i = 0; i < r.size(); ++i) v.segment<3>(static_cast<Eigen::Index>(3 * i)) = r[i];
  return v;
}

void check_finite(double v, const char* term) {
  if (!std::isfinite(v)) throw NumericError(std::string("energy term '") + term + "' is not finite");
}

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08x", v);
  return buf;
}

std::string crc_hex(const std::string& s) {
  return hex32(static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size()))));
}

}  // namespace

nlohmann::json EnergyReport::to_json() const {
  nlohmann::json j = {{"mask", mask},       {"lidar", lidar},         {"normal", normal},
                      {"edge", edge},       {"app_mat", app_mat},     {"app_light", app_light},
                      {"sym", sym},         {"total", total}};
  if (color_enabled) j["color"] = color;
  return j;
}

FitProblem::FitProblem(const ShapeSpace& space, const SceneObservations& obs, FitOptions options)
    : space_(&space), obs_(&obs), options_(options) {
  if (!obs.actor_frame) throw ArgumentError("fit problems need actor-frame observations");
  obs.validate();
  split_ = split_parts(space.faces, space.part_labels);
  const VehicleMesh vm = from_part_mesh(space.mean_mesh(), space.part_labels, space.rig);
  body_count_ = vm.body.vertices.size();
  adjacency_ = build_adjacency(assemble(vm));
}

FitState FitProblem::initial_state() const {
  FitState s;
  s.z = Eigen::VectorXd::Zero(space_->k());
  s.vertices = space_->decode_vertices(s.z);
  s.wheel = space_->rig.defaults;
  for (const auto& f : obs_->frames) s.cameras.push_back(f.camera.extrinsics);
  s.appearance.kd = Texture(options_.texture_size, options_.texture_size, Vec3::Constant(0.5));
  s.appearance.orm = Texture(options_.texture_size, options_.texture_size, Vec3(0.0, 0.7, 0.0));
  s.appearance.env = make_uniform_env(static_cast<std::size_t>(options_.env_directions), Vec3::Ones());
  return s;
}

VehicleMesh FitProblem::vehicle(const FitState& state, bool latent) const {
  TriMesh merged;
  merged.vertices = latent ? space_->decode_vertices(state.z) : state.vertices;
  merged.faces = space_->faces;
  merged.uv = space_->uv;
  VehicleMesh vm = from_part_mesh(merged, space_->part_labels, space_->rig);
  vm.params = state.wheel;
  return vm;
}

EnergyReport FitProblem::evaluate(const FitState& state, const EnergyWeights& w, const StageFlags& flags,
                                  std::uint64_t sample_seed, FitGradient* grad) const {
  w.validate();
  const VehicleMesh vm = vehicle(state, flags.latent);
  const TriMesh object_mesh = assemble(vm);
  const Mat3 r_obj = state.object.rotation();
  TriMesh actor_mesh = object_mesh;
  for (auto& v : actor_mesh.vertices) v = r_obj * v + state.object.translation;
  const std::size_t na = actor_mesh.vertices.size();

  EnergyReport rep;
  rep.color_enabled = flags.color;
  std::vector<Vec3> g_actor(na, Vec3::Zero());
  if (grad) {
    grad->cameras.assign(obs_->frames.size(), PoseGrad{});
    grad->appearance.kd = Texture(state.appearance.kd.width, state.appearance.kd.height);
    grad->appearance.orm = Texture(state.appearance.orm.width, state.appearance.orm.height);
    grad->appearance.radiance.assign(state.appearance.env.size(), Vec3::Zero());
  }

  const std::size_t nviews = obs_->frames.size();
  if ((flags.mask || flags.color) && nviews > 0) {
    if (state.cameras.size() != nviews) throw ArgumentError("camera count differs from the frame count");
    RenderOptions opts;
    opts.softness = flags.softness;
    opts.specular = options_.specular;
    opts.shade = flags.color;
    const double inv_n = 1.0 / static_cast<double>(nviews);
    std::size_t empty_views = 0;
    for (std::size_t v = 0; v < nviews; ++v) {
      const SceneFrame& frame = obs_->frames[v];
      Camera cam{frame.camera.intrinsics, state.cameras[v]};
      Rasterization raster;
      const RenderOutput out = render(actor_mesh, adjacency_, state.appearance, cam, opts, &raster);
      Image gm, gc;
      if (flags.mask) rep.mask += inv_n * e_mask(out.mask, frame.mask, grad ? &gm : nullptr);
      if (flags.color) {
        const ColorTerm c = e_color(out, frame.image, frame.mask, w.huber_delta, grad ? &gc : nullptr);
        rep.color += inv_n * c.value;
        if (c.pixels == 0) ++empty_views;
      }
      if (!grad) continue;
      for (double& x : gm.data) x *= w.lambda_mask * inv_n;
      for (double& x : gc.data) x *= inv_n;
      const RenderGrad rg = render_backward(raster, actor_mesh, state.appearance, cam, opts, gc, gm);
      for (std::size_t i = 0; i < na; ++i) g_actor[i] += rg.vertices[i];
      grad->cameras[v] += rg.camera;
      if (flags.color) {
        as_vector(grad->appearance.kd.texels) += as_vector(rg.kd.texels);
        as_vector(grad->appearance.orm.texels) += as_vector(rg.orm.texels);
        for (std::size_t e = 0; e < rg.radiance.size(); ++e) grad->appearance.radiance[e] += rg.radiance[e];
      }
    }
    if (flags.color && empty_views == nviews) {
      rep.color_empty = true;
      spdlog::warn("e_color: no foreground pixel is covered by the render in any view; term set to 0");
    }
  }

  if (flags.lidar && !obs_->cloud.empty()) {
    const auto samples = frozen_samples_.empty()
                             ? sample_surface(actor_mesh, static_cast<std::size_t>(w.sample_count), sample_seed)
                             : frozen_samples_;
    std::vector<Vec3> positions(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Face& f = actor_mesh.faces[samples[i].face_index];
      const Vec3& b = samples[i].barycentric;
      positions[i] = b[0] * actor_mesh.vertices[f[0]] + b[1] * actor_mesh.vertices[f[1]] + b[2] * actor_mesh.vertices[f[2]];
    }
    std::vector<Vec3> gs;
    rep.lidar = e_lidar(obs_->cloud.points, positions, w.trim_fraction, grad ? &gs : nullptr);
    if (grad) {
      for (std::size_t i = 0; i < samples.size(); ++i) {
        if (gs[i].isZero(0.0)) continue;
        const Face& f = actor_mesh.faces[samples[i].face_index];
        for (int k = 0; k < 3; ++k) g_actor[f[k]] += w.lambda_lidar * samples[i].barycentric[k] * gs[i];
      }
    }
  }

  // Actor frame back to the vehicle frame through the object pose.
  std::vector<Vec3> g_object(na, Vec3::Zero());
  if (grad) {
    Mat3 g_rot = Mat3::Zero();
    Vec3 g_t = Vec3::Zero();
    for (std::size_t i = 0; i < na; ++i) {
      g_object[i] = r_obj.transpose() * g_actor[i];
      g_rot += g_actor[i] * object_mesh.vertices[i].transpose();
      g_t += g_actor[i];
    }
    grad->object.rot6 = rot6d_backward(state.object.rot6, g_rot);
    grad->object.translation = g_t;
  }

  if (flags.shape) {
    std::vector<Vec3> gsh;
    const ShapeEnergy se = e_shape(object_mesh, adjacency_, grad ? &gsh : nullptr);
    rep.normal = se.normal;
    rep.edge = se.edge;
    if (grad) {
      for (std::size_t i = 0; i < na; ++i) g_object[i] += w.lambda_shape * gsh[i];
    }
  }

  if (flags.sym) {
    const std::vector<Vec3> body(object_mesh.vertices.begin(),
                                 object_mesh.vertices.begin() + static_cast<std::ptrdiff_t>(body_count_));
    std::vector<Vec3> gsy;
    rep.sym = e_sym(body, space_->symmetry_axis, grad ? &gsy : nullptr);
    if (grad) {
      for (std::size_t i = 0; i < body_count_; ++i) g_object[i] += w.lambda_sym * gsy[i];
    }
  }

  if (flags.appearance) {
    AppearanceGrad ga;
    const AppearanceEnergy ae = e_app(state.appearance, w.lambda_mat, w.lambda_light, grad ? &ga : nullptr);
    rep.app_mat = ae.material;
    rep.app_light = ae.light;
    if (grad) {
      as_vector(grad->appearance.kd.texels) += w.lambda_app * as_vector(ga.kd.texels);
      as_vector(grad->appearance.orm.texels) += w.lambda_app * as_vector(ga.orm.texels);
      for (std::size_t e = 0; e < ga.radiance.size(); ++e) grad->appearance.radiance[e] += w.lambda_app * ga.radiance[e];
    }
  }

  check_finite(rep.color, "color");
  check_finite(rep.mask, "mask");
  check_finite(rep.lidar, "lidar");
  check_finite(rep.normal, "normal");
  check_finite(rep.edge, "edge");
  check_finite(rep.app_mat, "app_mat");
  check_finite(rep.app_light, "app_light");
  check_finite(rep.sym, "sym");
  rep.total = rep.color + w.lambda_mask * rep.mask + w.lambda_lidar * rep.lidar +
              w.lambda_shape * (rep.normal + rep.edge) +
              w.lambda_app * (w.lambda_mat * rep.app_mat + w.lambda_light * rep.app_light) + w.lambda_sym * rep.sym;

  if (grad) {
    const AssembleGrad ag = assemble_backward(vm, g_object);
    grad->vertices.assign(space_->vertex_count(), Vec3::Zero());
    for (std::size_t i = 0; i < split_.body_vertices.size(); ++i) grad->vertices[split_.body_vertices[i]] = ag.body[i];
    for (std::size_t i = 0; i < split_.wheel_vertices.size(); ++i) {
      grad->vertices[split_.wheel_vertices[i]] = ag.wheel_template[i];
    }
    grad->wheel = ag.params;
    grad->z = flags.latent ? space_->pullback(grad->vertices) : Eigen::VectorXd();
  }
  return rep;
}

void CurriculumConfig::validate() const {
  if (stage1_iters < 0 || stage2_iters < 0 || stage3_iters < 0) throw ArgumentError("iteration counts must be >= 0");
  for (const auto* o : {&latent, &vertices, &wheel, &appearance, &camera, &object}) o->validate();
  if (!(stage3_lr_start > 0.0 && stage3_lr_end > 0.0)) throw ArgumentError("stage 3 learning rates must be positive");
  if (!(reparam_lambda >= 0.0)) throw ArgumentError("reparam lambda must be non-negative");
  if (!(softness >= 0.0)) throw ArgumentError("softness must be non-negative");
  if (softness_halvings < 0) throw ArgumentError("softness halvings must be non-negative");
}

nlohmann::json to_json(const CurriculumConfig& c, const EnergyWeights& w) {
  nlohmann::json cur = {{"stage1_iters", c.stage1_iters},
                        {"stage2_iters", c.stage2_iters},
                        {"stage3_iters", c.stage3_iters},
                        {"latent", to_json(c.latent)},
                        {"vertices", to_json(c.vertices)},
                        {"wheel", to_json(c.wheel)},
                        {"appearance", to_json(c.appearance)},
                        {"camera", to_json(c.camera)},
                        {"object", to_json(c.object)},
                        {"stage3_lr_start", c.stage3_lr_start},
                        {"stage3_lr_end", c.stage3_lr_end},
                        {"reparam_lambda", c.reparam_lambda},
                        {"softness", c.softness},
                        {"softness_halvings", c.softness_halvings},
                        {"optimize_cameras", c.optimize_cameras},
                        {"optimize_object", c.optimize_object},
                        {"checkpoint_every", c.checkpoint_every},
                        {"seed", c.seed}};
  nlohmann::json wj = {{"lambda_mask", w.lambda_mask},   {"lambda_lidar", w.lambda_lidar},
                       {"lambda_shape", w.lambda_shape}, {"lambda_sym", w.lambda_sym},
                       {"lambda_app", w.lambda_app},     {"lambda_mat", w.lambda_mat},
                       {"lambda_light", w.lambda_light}, {"trim_fraction", w.trim_fraction},
                       {"sample_count", w.sample_count}, {"huber_delta", w.huber_delta}};
  return {{"curriculum", cur}, {"weights", wj}};
}

void config_from_json(const nlohmann::json& j, CurriculumConfig& c, EnergyWeights& w) {
  try {
    if (j.contains("curriculum")) {
      const auto& cj = j["curriculum"];
      c.stage1_iters = cj.value("stage1_iters", c.stage1_iters);
      c.stage2_iters = cj.value("stage2_iters", c.stage2_iters);
      c.stage3_iters = cj.value("stage3_iters", c.stage3_iters);
      const std::pair<const char*, OptimizerConfig*> groups[] = {{"latent", &c.latent},   {"vertices", &c.vertices},
                                                                {"wheel", &c.wheel},     {"appearance", &c.appearance},
                                                                {"camera", &c.camera},   {"object", &c.object}};
      for (const auto& [name, cfg] : groups) {
        if (cj.contains(name)) *cfg = optimizer_from_json(cj[name], *cfg);
      }
      c.stage3_lr_start = cj.value("stage3_lr_start", c.stage3_lr_start);
      c.stage3_lr_end = cj.value("stage3_lr_end", c.stage3_lr_end);
      c.reparam_lambda = cj.value("reparam_lambda", c.reparam_lambda);
      c.softness = cj.value("softness", c.softness);
      c.softness_halvings = cj.value("softness_halvings", c.softness_halvings);
      c.optimize_cameras = cj.value("optimize_cameras", c.optimize_cameras);
      c.optimize_object = cj.value("optimize_object", c.optimize_object);
      c.checkpoint_every = cj.value("checkpoint_every", c.checkpoint_every);
      c.seed = cj.value("seed", c.seed);
    }
    if (j.contains("weights")) {
      const auto& wj = j["weights"];
      w.lambda_mask = wj.value("lambda_mask", w.lambda_mask);
      w.lambda_lidar = wj.value("lambda_lidar", w.lambda_lidar);
      w.lambda_shape = wj.value("lambda_shape", w.lambda_shape);
      w.lambda_sym = wj.value("lambda_sym", w.lambda_sym);
      w.lambda_app = wj.value("lambda_app", w.lambda_app);
      w.lambda_mat = wj.value("lambda_mat", w.lambda_mat);
      w.lambda_light = wj.value("lambda_light", w.lambda_light);
      w.trim_fraction = wj.value("trim_fraction", w.trim_fraction);
      w.sample_count = wj.value("sample_count", w.sample_count);
      w.huber_delta = wj.value("huber_delta", w.huber_delta);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("fit config: ") + e.what());
  }
  c.validate();
  w.validate();
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceEntry>& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "stage,iteration,softness,color,mask,lidar,normal,edge,app_mat,app_light,sym,total\n";
  out.precision(17);
  for (const auto& t : trace) {
    const auto& r = t.report;
    out << t.stage << ',' << t.iteration << ',' << t.softness << ',';
    if (r.color_enabled) out << r.color;
    out << ',' << r.mask << ',' << r.lidar << ',' << r.normal << ',' << r.edge << ',' << r.app_mat << ','
        << r.app_light << ',' << r.sym << ',' << r.total << '\n';
  }
}

std::string trace_digest(const std::vector<TraceEntry>& trace) {
  std::ostringstream s;
  s.precision(17);
  for (const auto& t : trace) s << t.stage << ' ' << t.iteration << ' ' << t.report.total << '\n';
  return crc_hex(s.str());
}

Stage1Result run_stage1_init(const FitProblem& problem, const EnergyWeights& weights, const CurriculumConfig& cfg) {
  cfg.validate();
  EnergyWeights w = weights;
  w.lambda_app = 0.0;
  StageFlags flags;
  flags.latent = true;
  flags.color = false;
  flags.sym = false;
  flags.appearance = false;
  flags.softness = cfg.softness;

  FitState state = problem.initial_state();
  Stage1Result out;
  Adam opt(static_cast<std::size_t>(state.z.size()), cfg.latent);
  double initial = 0.0;
  for (int it = 0; it <= cfg.stage1_iters; ++it) {
    FitGradient g;
    const bool last = it == cfg.stage1_iters;
    EnergyReport rep;
    try {
      rep = problem.evaluate(state, w, flags, counter_hash(cfg.seed, 1, static_cast<std::uint64_t>(it)),
                             last ? nullptr : &g);
    } catch (const NumericError& e) {
      throw FitError(std::string("stage 1 iteration ") + std::to_string(it) + ": " + e.what(), out.trace, {});
    }
    out.trace.push_back({1, it, flags.softness, rep});
    if (it == 0) initial = rep.total;
    if (rep.total > 10.0 * initial) {
      throw FitError("stage 1 diverged at iteration " + std::to_string(it) + ": energy " + std::to_string(rep.total) +
                         " exceeds ten times the initial " + std::to_string(initial),
                     out.trace, {});
    }
    if (last) break;
    opt.step(state.z, g.z);
    spdlog::debug("stage 1 iter {} total {:.6g}", it, rep.total);
  }
  out.z = state.z;
  return out;
}

FitResult run_full_fit(const FitProblem& problem, const Eigen::VectorXd& z, const EnergyWeights& weights,
                       const CurriculumConfig& cfg) {
  cfg.validate();
  const ShapeSpace& space = problem.space();
  FitState state = problem.initial_state();
  state.z = z;
  state.vertices = space.decode_vertices(z);

  TriMesh merged{state.vertices, space.faces, space.uv};
  const SmoothReparam reparam(graph_laplacian(merged), cfg.reparam_lambda);
  Eigen::MatrixXd u = reparam.to_latent(state.vertices);
  auto u_vec = [&]() { return Eigen::Map<Eigen::VectorXd>(u.data(), u.size()); };

  Adam opt_u(static_cast<std::size_t>(u.size()), cfg.vertices);
  Adam opt_wheel(9, cfg.wheel);
  Adam opt_object(9, cfg.object);
  std::vector<Adam> opt_cam(state.cameras.size(), Adam(9, cfg.camera));
  Adam opt_kd(state.appearance.kd.texels.size(), cfg.appearance);
  Adam opt_orm(state.appearance.orm.texels.size(), cfg.appearance);
  Adam opt_env(state.appearance.env.size() * 3, cfg.appearance);

  FitResult result;
  std::filesystem::path last_checkpoint;
  int global = 0;
  const Provenance prov{problem.observations().scene_id, "checkpoint", ""};

  auto fail = [&](const std::string& what) -> FitError {
    return FitError(what + (last_checkpoint.empty() ? std::string(" (no checkpoint written)")
                                                    : " (last good checkpoint: " + last_checkpoint.string() + ")"),
                    result.trace, last_checkpoint);
  };

  auto run_stage = [&](int stage, int iters, StageFlags flags) {
    for (int it = 0; it < iters; ++it) {
      if (stage == 3 && cfg.softness_halvings > 0) {
        const int h = (it * (cfg.softness_halvings + 1)) / std::max(iters, 1);
        flags.softness = cfg.softness * std::pow(0.5, std::min(h, cfg.softness_halvings));
      }
      FitGradient g;
      EnergyReport rep;
      try {
        rep = problem.evaluate(state, weights, flags,
                               counter_hash(cfg.seed, static_cast<std::uint64_t>(stage), static_cast<std::uint64_t>(it)),
                               &g);
      } catch (const NumericError& e) {
        throw fail("stage " + std::to_string(stage) + " iteration " + std::to_string(it) + ": " + e.what());
      }
      result.trace.push_back({stage, it, flags.softness, rep});
      try {
        auto uv = u_vec();
        opt_u.step(uv, Eigen::Map<const Eigen::VectorXd>(reparam.pullback(g.vertices).data(), u.size()));
        Eigen::VectorXd wv = pack(state.wheel);
        opt_wheel.step(wv, pack(g.wheel));
        state.wheel = unpack_wheel(wv);
        if (cfg.optimize_object) {
          Eigen::VectorXd o = pack(state.object);
          opt_object.step(o, pack(g.object));
          state.object = unpack_pose(o);
        }
        if (cfg.optimize_cameras) {
          for (std::size_t c = 0; c < state.cameras.size(); ++c) {
            Eigen::VectorXd p = pack(state.cameras[c]);
            opt_cam[c].step(p, pack(g.cameras[c]));
            state.cameras[c] = unpack_pose(p);
          }
        }
        if (flags.appearance || flags.color) {
          opt_kd.step(as_vector(state.appearance.kd.texels), as_vector(std::as_const(g.appearance.kd.texels)));
          opt_orm.step(as_vector(state.appearance.orm.texels), as_vector(std::as_const(g.appearance.orm.texels)));
          Eigen::VectorXd rad = radiance_vector(state.appearance.env.radiance);
          opt_env.step(rad, radiance_vector(g.appearance.radiance));
          for (std::size_t e = 0; e < state.appearance.env.size(); ++e) {
            state.appearance.env.radiance[e] = rad.segment<3>(static_cast<Eigen::Index>(3 * e));
          }
          state.appearance.clamp_to_valid();
        }
        state.vertices = reparam.push(u);
      } catch (const NumericError& e) {
        throw fail("stage " + std::to_string(stage) + " iteration " + std::to_string(it) + ": " + e.what());
      }
      ++global;
      if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() && global % cfg.checkpoint_every == 0) {
        char name[32];
        std::snprintf(name, sizeof(name), "checkpoint_%05d.cta", global);
        std::filesystem::create_directories(cfg.checkpoint_dir);
        last_checkpoint = cfg.checkpoint_dir / name;
        save_asset(last_checkpoint, make_asset(problem, state, prov));
      }
      spdlog::debug("stage {} iter {} total {:.6g}", stage, it, rep.total);
    }
    return flags;
  };

  StageFlags s2;
  s2.color = false;
  s2.appearance = false;
  s2.softness = cfg.softness;
  run_stage(2, cfg.stage2_iters, s2);

  StageFlags s3;
  s3.softness = cfg.softness;
  const LrSchedule decay = LrSchedule::exponential(cfg.stage3_lr_start, cfg.stage3_lr_end, cfg.stage3_iters);
  for (Adam* o : {&opt_u, &opt_wheel, &opt_kd, &opt_orm, &opt_env}) o->set_schedule(decay, o->steps());
  const StageFlags final_flags = run_stage(3, cfg.stage3_iters, s3);

  StageFlags report_flags = cfg.stage3_iters > 0 ? final_flags : s2;
  if (cfg.stage3_iters > 0 && cfg.softness_halvings > 0) {
    report_flags.softness = cfg.softness * std::pow(0.5, cfg.softness_halvings);
  }
  try {
    result.final_report = problem.evaluate(state, weights, report_flags, counter_hash(cfg.seed, 4, 0), nullptr);
  } catch (const NumericError& e) {
    throw fail(std::string("final evaluation: ") + e.what());
  }
  result.state = state;
  Provenance p{problem.observations().scene_id, crc_hex(to_json(cfg, weights).dump()), trace_digest(result.trace)};
  result.asset = make_asset(problem, state, p);
  return result;
}

FitResult fit_scene(const FitProblem& problem, const EnergyWeights& weights, const CurriculumConfig& cfg) {
  Stage1Result s1 = run_stage1_init(problem, weights, cfg);
  FitResult r = run_full_fit(problem, s1.z, weights, cfg);
  s1.trace.insert(s1.trace.end(), r.trace.begin(), r.trace.end());
  r.trace = std::move(s1.trace);
  r.asset.provenance.trace_digest = trace_digest(r.trace);
  return r;
}

FittedAsset make_asset(const FitProblem& problem, const FitState& state, const Provenance& provenance) {
  FittedAsset a;
  a.vehicle = problem.vehicle(state, false);
  a.appearance = state.appearance;
  a.object_pose = state.object;
  a.latent = state.z;
  a.provenance = provenance;
  if (a.provenance.scene_id.empty()) a.provenance.scene_id = "unnamed";
  const PointCloud& cloud = problem.observations().cloud;
  if (!cloud.empty() && cloud.has_intensity()) {
    const PointCloud local = transform_cloud(cloud, state.object.inverse());
    a.vertex_intensity = retrieve_intensity(a.assembled(), local);
  }
  return a;
}

}  // namespace cadtwin
