#include "cadtwin/asset.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <spdlog/spdlog.h>
#include <zlib.h>

#include "binary_io.hpp"
#include "cadtwin/error.hpp"
#include "cadtwin/mesh_io.hpp"
#include "cadtwin/serialization.hpp"

namespace cadtwin {
namespace {

constexpr char kMagic[4] = {'C', 'T', 'A', 'R'};

std::uint32_t crc(const std::string& bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

std::string doubles_blob(const std::vector<double>& v) {
  std::ostringstream out(std::ios::binary);
  detail::put<std::uint64_t>(out, v.size());
  detail::put_array(out, v.data(), v.size());
  return out.str();
}

std::vector<double> blob_doubles(const std::string& bytes, const std::string& name) {
  std::istringstream in(bytes, std::ios::binary);
  const auto n = detail::get<std::uint64_t>(in);
  if (n * sizeof(double) + sizeof(std::uint64_t) != bytes.size()) throw FormatError(name + ": bad blob size");
  std::vector<double> v(n);
  detail::get_array(in, v.data(), n);
  return v;
}

std::string mesh_blob(const TriMesh& mesh) {
  std::ostringstream out(std::ios::binary);
  write_ply(out, mesh_to_ply(mesh));
  return out.str();
}

TriMesh blob_mesh(const std::string& bytes, const std::string& name) {
  std::istringstream in(bytes, std::ios::binary);
  return ply_to_mesh(read_ply(in, name));
}

std::vector<double> env_values(const EnvLight& env) {
  std::vector<double> v;
  for (std::size_t e = 0; e < env.size(); ++e) {
    for (int a = 0; a < 3; ++a) v.push_back(env.directions[e][a]);
    for (int a = 0; a < 3; ++a) v.push_back(env.radiance[e][a]);
  }
  return v;
}

bool same_topology(const TriMesh& a, const TriMesh& b) {
  return a.vertices.size() == b.vertices.size() && a.faces == b.faces && a.uv == b.uv;
}

}  // namespace

void FittedAsset::validate() const {
  vehicle.validate();
  assembled().validate();
  if (appearance.kd.empty() || appearance.orm.empty()) throw ArgumentError("asset has no textures");
  appearance.validate();
  if (provenance.scene_id.empty()) throw ArgumentError("asset provenance is empty");
  if (!vertex_intensity.empty() && vertex_intensity.size() != assembled().vertices.size()) {
    throw ArgumentError("asset vertex intensity count differs from the assembled vertex count");
  }
}

TriMesh FittedAsset::placed() const {
  TriMesh m = assembled();
  const Mat3 r = object_pose.rotation();
  for (auto& v : m.vertices) v = r * v + object_pose.translation;
  return m;
}

void save_asset(const std::filesystem::path& path, const FittedAsset& a) {
  a.validate();
  nlohmann::json params;
  auto poses = nlohmann::json::array();
  for (const auto& t : a.vehicle.wheel_poses) poses.push_back(to_json(t));
  params["wheel_poses"] = poses;
  params["wheel_params"] = to_json(a.vehicle.params);
  params["front_wheels"] = a.vehicle.front_wheels;
  params["spin"] = a.vehicle.spin;
  params["object_pose"] = to_json(a.object_pose);
  params["latent"] = std::vector<double>(a.latent.data(), a.latent.data() + a.latent.size());
  params["textures"] = {{"kd", {a.appearance.kd.width, a.appearance.kd.height}},
                        {"orm", {a.appearance.orm.width, a.appearance.orm.height}}};
  params["provenance"] = {{"scene_id", a.provenance.scene_id},
                          {"config_hash", a.provenance.config_hash},
                          {"trace_digest", a.provenance.trace_digest}};

  const std::vector<std::pair<std::string, std::string>> entries = {
      {"params.json", params.dump()},
      {"body.ply", mesh_blob(a.vehicle.body)},
      {"wheel.ply", mesh_blob(a.vehicle.wheel_template)},
      {"kd.f64", doubles_blob(a.appearance.kd.texels)},
      {"orm.f64", doubles_blob(a.appearance.orm.texels)},
      {"env.f64", doubles_blob(env_values(a.appearance.env))},
      {"intensity.f64", doubles_blob(a.vertex_intensity)},
  };
  std::ostringstream out(std::ios::binary);
  out.write(kMagic, 4);
  detail::put<std::uint16_t>(out, kAssetMajor);
  detail::put<std::uint16_t>(out, kAssetMinor);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, bytes] : entries) {
    detail::put_string(out, name);
    detail::put_string(out, bytes);
    detail::put<std::uint32_t>(out, crc(bytes));
  }
  std::string body = out.str();
  const std::uint32_t total = crc(body);
  body.append(reinterpret_cast<const char*>(&total), sizeof(total));

  // Write to a sibling file first so a failed write never leaves a partial archive.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot write " + tmp.string());
    f.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!f) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

FittedAsset load_asset(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string where = path.string();
  if (bytes.size() < 16 || bytes.compare(0, 4, kMagic, 4) != 0) throw FormatError(where + ": not a cadtwin asset");
  std::uint32_t stored = 0;
  std::memcpy(&stored, bytes.data() + bytes.size() - sizeof(stored), sizeof(stored));
  bytes.resize(bytes.size() - sizeof(stored));
  if (crc(bytes) != stored) throw FormatError(where + ": checksum mismatch (truncated or corrupt archive)");

  std::istringstream in(bytes, std::ios::binary);
  in.seekg(4);
  const auto major = detail::get<std::uint16_t>(in);
  const auto minor = detail::get<std::uint16_t>(in);
  if (major != kAssetMajor) {
    throw FormatError(where + ": asset version " + std::to_string(major) + "." + std::to_string(minor) +
                      " is not supported");
  }
  if (minor > kAssetMinor) {
    const std::string msg = where + ": asset minor version " + std::to_string(minor) + " is newer than " +
                            std::to_string(kAssetMinor) + "; unknown entries are ignored";
    spdlog::warn(msg);
    if (warnings) warnings->push_back(msg);
  }
  const auto count = detail::get<std::uint32_t>(in);
  std::map<std::string, std::string> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = detail::get_string(in);
    std::string data = detail::get_string(in);
    if (crc(data) != detail::get<std::uint32_t>(in)) throw FormatError(where + ": checksum mismatch in " + name);
    entries.emplace(std::move(name), std::move(data));
  }
  auto entry = [&](const std::string& name) -> const std::string& {
    auto it = entries.find(name);
    if (it == entries.end()) throw FormatError(where + ": missing entry " + name);
    return it->second;
  };

  FittedAsset a;
  try {
    const auto params = nlohmann::json::parse(entry("params.json"));
    for (const auto& t : params.at("wheel_poses")) a.vehicle.wheel_poses.push_back(isometry_from_json(t));
    a.vehicle.params = wheel_params_from_json(params.at("wheel_params"));
    a.vehicle.front_wheels = params.at("front_wheels").get<std::vector<int>>();
    a.vehicle.spin = params.at("spin").get<std::vector<double>>();
    a.object_pose = pose_from_json(params.at("object_pose"));
    const auto latent = params.at("latent").get<std::vector<double>>();
    a.latent = Eigen::Map<const Eigen::VectorXd>(latent.data(), static_cast<Eigen::Index>(latent.size()));
    const auto& tex = params.at("textures");
    a.appearance.kd = Texture(tex.at("kd")[0].get<int>(), tex.at("kd")[1].get<int>());
    a.appearance.orm = Texture(tex.at("orm")[0].get<int>(), tex.at("orm")[1].get<int>());
    const auto& prov = params.at("provenance");
    a.provenance = {prov.at("scene_id").get<std::string>(), prov.at("config_hash").get<std::string>(),
                    prov.at("trace_digest").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": params.json: " + e.what());
  }
  a.vehicle.body = blob_mesh(entry("body.ply"), "body.ply");
  a.vehicle.wheel_template = blob_mesh(entry("wheel.ply"), "wheel.ply");
  auto kd = blob_doubles(entry("kd.f64"), "kd.f64");
  auto orm = blob_doubles(entry("orm.f64"), "orm.f64");
  if (kd.size() != a.appearance.kd.texels.size() || orm.size() != a.appearance.orm.texels.size()) {
    throw FormatError(where + ": texture size disagrees with params.json");
  }
  a.appearance.kd.texels = std::move(kd);
  a.appearance.orm.texels = std::move(orm);
  const auto env = blob_doubles(entry("env.f64"), "env.f64");
  if (env.size() % 6 != 0) throw FormatError(where + ": env.f64 is not a list of direction/radiance pairs");
  for (std::size_t i = 0; i < env.size(); i += 6) {
    a.appearance.env.directions.emplace_back(env[i], env[i + 1], env[i + 2]);
    a.appearance.env.radiance.emplace_back(env[i + 3], env[i + 4], env[i + 5]);
  }
  a.vertex_intensity = blob_doubles(entry("intensity.f64"), "intensity.f64");
  a.validate();
  return a;
}

FittedAsset transfer_texture(const FittedAsset& src, const FittedAsset& dst) {
  if (!same_topology(src.vehicle.body, dst.vehicle.body) ||
      !same_topology(src.vehicle.wheel_template, dst.vehicle.wheel_template) ||
      src.vehicle.wheel_count() != dst.vehicle.wheel_count()) {
    throw MeshError("transfer_texture: assets do not share topology and uv layout");
  }
  FittedAsset out = dst;
  out.appearance = src.appearance;
  return out;
}

}  // namespace cadtwin
