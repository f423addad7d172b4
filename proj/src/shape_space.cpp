#include "cadtwin/shape_space.hpp"

#include <Eigen/SVD>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "cadtwin/error.hpp"
#include "cadtwin/serialization.hpp"

namespace cadtwin {
namespace {

constexpr char kMagic[4] = {'C', 'T', 'S', 'S'};
constexpr std::uint32_t kVersion = 1;

Eigen::VectorXd flatten(const std::vector<Vec3>& v) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size() * 3));
  for (std::size_t i = 0; i < v.size(); ++i) x.segment<3>(static_cast<Eigen::Index>(3 * i)) = v[i];
  return x;
}

std::vector<Vec3> unflatten(const Eigen::VectorXd& x) {
  std::vector<Vec3> v(static_cast<std::size_t>(x.size() / 3));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x.segment<3>(static_cast<Eigen::Index>(3 * i));
  return v;
}

}  // namespace

PartMesh to_part_mesh(const VehicleMesh& vm) {
  PartMesh pm;
  pm.mesh = vm.body;
  append_mesh(pm.mesh, vm.wheel_template);
  pm.labels.assign(vm.body.vertices.size(), kBodyPart);
  pm.labels.resize(pm.mesh.vertices.size(), kWheelPart);
  return pm;
}

PartSplit split_parts(const std::vector<Face>& faces, const std::vector<std::uint8_t>& labels) {
  PartSplit s;
  std::vector<int> local(labels.size(), -1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& list = labels[i] == kBodyPart ? s.body_vertices : s.wheel_vertices;
    local[i] = static_cast<int>(list.size());
    list.push_back(static_cast<int>(i));
  }
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Face& t = faces[f];
    const std::uint8_t part = labels[t[0]];
    if (labels[t[1]] != part || labels[t[2]] != part) {
      throw MeshError("face " + std::to_string(f) + " spans body and wheel parts");
    }
    const Face mapped{local[t[0]], local[t[1]], local[t[2]]};
    (part == kBodyPart ? s.body_faces : s.wheel_faces).push_back(mapped);
  }
  return s;
}

VehicleMesh from_part_mesh(const TriMesh& merged, const std::vector<std::uint8_t>& labels, const WheelRig& rig) {
  if (labels.size() != merged.vertices.size()) throw ArgumentError("part label count does not match vertex count");
  const PartSplit split = split_parts(merged.faces, labels);
  VehicleMesh vm;
  for (int i : split.body_vertices) {
    vm.body.vertices.push_back(merged.vertices[i]);
    if (merged.has_uv()) vm.body.uv.push_back(merged.uv[i]);
  }
  for (int i : split.wheel_vertices) {
    vm.wheel_template.vertices.push_back(merged.vertices[i]);
    if (merged.has_uv()) vm.wheel_template.uv.push_back(merged.uv[i]);
  }
  vm.body.faces = split.body_faces;
  vm.wheel_template.faces = split.wheel_faces;
  vm.wheel_poses = rig.poses;
  vm.front_wheels = rig.front_wheels;
  vm.params = rig.defaults;
  vm.spin.assign(rig.poses.size(), 0.0);
  return vm;
}

Eigen::VectorXd ShapeSpace::encode(const std::vector<Vec3>& vertices) const {
  if (vertices.size() != vertex_count()) throw ArgumentError("encode: vertex count mismatch");
  return basis.transpose() * (flatten(vertices) - mean);
}

std::vector<Vec3> ShapeSpace::decode_vertices(const Eigen::VectorXd& z) const {
  if (z.size() > basis.cols()) throw ArgumentError("decode: latent code longer than k");
  Eigen::VectorXd x = mean;
  if (z.size() > 0) x += basis.leftCols(z.size()) * z;
  return unflatten(x);
}

TriMesh ShapeSpace::decode_mesh(const Eigen::VectorXd& z) const {
  TriMesh m;
  m.vertices = decode_vertices(z);
  m.faces = faces;
  m.uv = uv;
  return m;
}

Eigen::VectorXd ShapeSpace::pullback(const std::vector<Vec3>& grad_vertices) const {
  return basis.transpose() * flatten(grad_vertices);
}

ShapeSpace build_shape_space(const std::vector<TriMesh>& exemplars, const std::vector<std::uint8_t>& labels,
                             const WheelRig& rig, int k, const Vec3& symmetry_axis) {
  if (exemplars.size() < 2) throw ArgumentError("build_shape_space: need at least two exemplars");
  const TriMesh& ref = exemplars.front();
  ref.validate();
  const std::size_t n = ref.vertices.size();
  for (std::size_t e = 1; e < exemplars.size(); ++e) {
    if (exemplars[e].vertices.size() != n || exemplars[e].faces != ref.faces) {
      throw MeshError("build_shape_space: exemplar " + std::to_string(e) + " does not share the topology of exemplar 0");
    }
  }
  if (labels.size() != n) throw ArgumentError("build_shape_space: part labels do not match vertex count");
  split_parts(ref.faces, labels);

  const auto m = static_cast<Eigen::Index>(exemplars.size());
  Eigen::MatrixXd data(static_cast<Eigen::Index>(3 * n), m);
  for (Eigen::Index e = 0; e < m; ++e) data.col(e) = flatten(exemplars[static_cast<std::size_t>(e)].vertices);

  ShapeSpace space;
  space.mean = data.rowwise().mean();
  const Eigen::MatrixXd centered = data.colwise() - space.mean;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU);
  const Eigen::Index kk = std::clamp<Eigen::Index>(k, 1, m);
  space.basis = svd.matrixU().leftCols(kk);
  // Fix the sign of each direction so repeated builds are bit-stable.
  for (Eigen::Index c = 0; c < kk; ++c) {
    Eigen::Index at = 0;
    space.basis.col(c).cwiseAbs().maxCoeff(&at);
    if (space.basis(at, c) < 0.0) space.basis.col(c) *= -1.0;
  }
  space.singular_values = svd.singularValues();
  space.codes = space.basis.transpose() * centered;
  space.faces = ref.faces;
  space.uv = ref.uv;
  space.part_labels = labels;
  space.symmetry_axis = symmetry_axis.normalized();
  space.rig = rig;
  return space;
}

VehicleMesh decode(const ShapeSpace& space, const Eigen::VectorXd& z) {
  return from_part_mesh(space.decode_mesh(z), space.part_labels, space.rig);
}

void save_shape_space(const std::filesystem::path& path, const ShapeSpace& space) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  using detail::put;
  using detail::put_array;
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, space.vertex_count());
  put<std::uint64_t>(out, space.faces.size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(space.k()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(space.codes.cols()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(space.singular_values.size()));
  put<std::uint8_t>(out, space.uv.empty() ? 0 : 1);
  put_array(out, space.mean.data(), static_cast<std::size_t>(space.mean.size()));
  put_array(out, space.basis.data(), static_cast<std::size_t>(space.basis.size()));
  put_array(out, space.codes.data(), static_cast<std::size_t>(space.codes.size()));
  put_array(out, space.singular_values.data(), static_cast<std::size_t>(space.singular_values.size()));
  put_array(out, space.part_labels.data(), space.part_labels.size());
  for (const Face& f : space.faces) {
    const std::int32_t idx[3] = {f[0], f[1], f[2]};
    put_array(out, idx, 3);
  }
  for (const Vec2& t : space.uv) put_array(out, t.data(), 2);
  nlohmann::json meta;
  meta["symmetry_axis"] = to_json(space.symmetry_axis);
  meta["canonical_frame"] = {{"forward", "+x"}, {"up", "+z"}, {"wheel_axle", "+y"}, {"units", "meters"}};
  meta["rig"] = to_json(space.rig);
  detail::put_string(out, meta.dump());
  if (!out) throw IoError("write failed for " + path.string());
}

ShapeSpace load_shape_space(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  using detail::get;
  using detail::get_array;
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kMagic, 4)) throw FormatError(path.string() + ": not a shape-space archive");
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw FormatError(path.string() + ": unsupported shape-space version " + std::to_string(version));
  const auto n = get<std::uint64_t>(in);
  const auto nf = get<std::uint64_t>(in);
  const auto k = get<std::uint32_t>(in);
  const auto m = get<std::uint32_t>(in);
  const auto ns = get<std::uint32_t>(in);
  const auto has_uv = get<std::uint8_t>(in);
  if (n > (1ULL << 28) || nf > (1ULL << 28) || k > n * 3 || m > (1U << 20)) throw FormatError(path.string() + ": corrupt header");

  ShapeSpace s;
  s.mean.resize(static_cast<Eigen::Index>(3 * n));
  s.basis.resize(static_cast<Eigen::Index>(3 * n), k);
  s.codes.resize(k, m);
  s.singular_values.resize(ns);
  get_array(in, s.mean.data(), static_cast<std::size_t>(s.mean.size()));
  get_array(in, s.basis.data(), static_cast<std::size_t>(s.basis.size()));
  get_array(in, s.codes.data(), static_cast<std::size_t>(s.codes.size()));
  get_array(in, s.singular_values.data(), ns);
  s.part_labels.resize(n);
  get_array(in, s.part_labels.data(), n);
  s.faces.resize(nf);
  for (Face& f : s.faces) {
    std::int32_t idx[3];
    get_array(in, idx, 3);
    f = {idx[0], idx[1], idx[2]};
  }
  if (has_uv) {
    s.uv.resize(n);
    for (Vec2& t : s.uv) get_array(in, t.data(), 2);
  }
  const auto meta = nlohmann::json::parse(detail::get_string(in));
  s.symmetry_axis = vec3_from_json(meta.at("symmetry_axis"));
  s.rig = rig_from_json(meta.at("rig"));
  return s;
}

}  // namespace cadtwin
