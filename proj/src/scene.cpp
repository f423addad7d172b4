#include "cadtwin/scene.hpp"

#include <fstream>
#include <sstream>

#include "cadtwin/error.hpp"
#include "cadtwin/serialization.hpp"

namespace cadtwin {
namespace {

Image first_channel(const Image& img) {
  if (img.channels == 1) return img;
  Image out(img.width, img.height, 1);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = img.data[i * img.channels];
  return out;
}

Image as_rgb(const Image& img) {
  if (img.channels == 3) return img;
  Image out(img.width, img.height, 3);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) out.data[i * 3 + c] = img.data[i * img.channels + (img.channels == 1 ? 0 : c)];
  }
  return out;
}

void check_version(const std::string& v, const std::string& where) {
  int major = 0, minor = 0;
  char dot = 0;
  std::istringstream in(v);
  if (!(in >> major >> dot >> minor) || dot != '.') throw FormatError(where + ": malformed version '" + v + "'");
  if (major != kSceneSchemaMajor) {
    throw FormatError(where + ": unsupported manifest version " + v + " (expected " +
                      std::to_string(kSceneSchemaMajor) + ".x)");
  }
}

}  // namespace

void SceneObservations::validate() const {
  if (frames.empty() && cloud.empty()) throw ArgumentError("scene has neither frames nor LiDAR points");
  for (const auto& f : frames) {
    if (f.mask.width != f.image.width || f.mask.height != f.image.height) {
      throw FormatError("frame " + f.id + ": mask is " + std::to_string(f.mask.width) + "x" +
                        std::to_string(f.mask.height) + " but image is " + std::to_string(f.image.width) + "x" +
                        std::to_string(f.image.height));
    }
    if (f.camera.intrinsics.width != f.image.width || f.camera.intrinsics.height != f.image.height) {
      throw FormatError("frame " + f.id + ": camera resolution differs from the image");
    }
  }
  cloud.validate();
}

SceneObservations read_scene(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open scene manifest " + manifest.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  const std::string where = manifest.string();
  const auto dir = manifest.parent_path();
  SceneObservations s;
  try {
    check_version(j.at("version").get<std::string>(), where);
    s.scene_id = j.value("scene_id", manifest.stem().string());
    for (const auto& fj : j.at("frames")) {
      SceneFrame f;
      f.id = fj.at("id").get<std::string>();
      f.image_path = fj.at("image").get<std::string>();
      f.mask_path = fj.at("mask").get<std::string>();
      for (const auto& p : {f.image_path, f.mask_path}) {
        if (!std::filesystem::exists(dir / p)) throw IoError("frame " + f.id + ": missing file " + (dir / p).string());
      }
      f.image = as_rgb(read_png(dir / f.image_path));
      f.mask = first_channel(read_png(dir / f.mask_path));
      f.camera = camera_from_json(fj.at("camera"));
      f.camera.validate();
      s.frames.push_back(std::move(f));
    }
    if (j.contains("cloud") && !j["cloud"].is_null()) {
      const auto path = dir / j["cloud"].get<std::string>();
      if (!std::filesystem::exists(path)) throw IoError("missing cloud file " + path.string());
      s.cloud = read_cloud(path);
    }
    const auto& box = j.at("object_box");
    s.box.pose = pose_from_json(box.at("pose"));
    s.box.dimensions = vec3_from_json(box.at("dimensions"));
    if (j.contains("metadata")) s.metadata = j["metadata"];
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
  s.validate();
  return s;
}

SceneObservations to_actor_frame(const SceneObservations& world) {
  if (world.actor_frame) return world;
  SceneObservations s = world;
  const Pose6D to_actor = world.box.pose.inverse();
  for (auto& f : s.frames) f.camera.extrinsics = f.camera.extrinsics.compose(world.box.pose);
  s.cloud = transform_cloud(world.cloud, to_actor);
  s.actor_frame = true;
  return s;
}

SceneObservations load_scene(const std::filesystem::path& manifest) { return to_actor_frame(read_scene(manifest)); }

void save_scene(const std::filesystem::path& manifest, const SceneObservations& s) {
  if (s.actor_frame) throw ArgumentError("save_scene expects world-frame observations");
  s.validate();
  const auto dir = manifest.parent_path();
  nlohmann::json j;
  j["version"] = std::to_string(kSceneSchemaMajor) + "." + std::to_string(kSceneSchemaMinor);
  j["scene_id"] = s.scene_id;
  auto frames = nlohmann::json::array();
  for (const auto& f : s.frames) {
    for (const auto& p : {f.image_path, f.mask_path}) {
      if (p.empty()) throw ArgumentError("frame " + f.id + " has no file name");
      std::filesystem::create_directories((dir / p).parent_path());
    }
    write_png(dir / f.image_path, f.image);
    write_png(dir / f.mask_path, f.mask);
    frames.push_back({{"id", f.id},
                      {"image", f.image_path.generic_string()},
                      {"mask", f.mask_path.generic_string()},
                      {"camera", to_json(f.camera)}});
  }
  j["frames"] = frames;
  if (!s.cloud.empty()) {
    write_cloud(dir / "cloud.ply", s.cloud);
    j["cloud"] = "cloud.ply";
  }
  j["object_box"] = {{"pose", to_json(s.box.pose)}, {"dimensions", to_json(s.box.dimensions)}};
  j["metadata"] = s.metadata;
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot write " + manifest.string());
  out << j.dump(2) << "\n";
}

}  // namespace cadtwin
