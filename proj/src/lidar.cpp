#include "cadtwin/lidar.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <unordered_map>

#include "cadtwin/error.hpp"
#include "cadtwin/kdtree.hpp"
#include "cadtwin/mesh_io.hpp"
#include "cadtwin/parallel.hpp"
#include "cadtwin/serialization.hpp"

namespace cadtwin {

std::size_t LidarPattern::azimuth_count() const {
  const double n = 2.0 * std::numbers::pi / azimuth_step;
  const double r = std::round(n);
  return static_cast<std::size_t>(std::abs(n - r) < 1e-6 ? r : std::floor(n));
}

Vec3 LidarPattern::direction(std::size_t beam, std::size_t azimuth) const {
  const double el = beams[beam];
  const double az = static_cast<double>(azimuth) * azimuth_step;
  return {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
}

void LidarPattern::validate() const {
  if (beams.empty()) throw ArgumentError("lidar pattern has no beams");
  if (!std::is_sorted(beams.begin(), beams.end())) throw ArgumentError("lidar beams must be sorted by elevation");
  if (!(azimuth_step > 0.0 && azimuth_step < 2.0 * std::numbers::pi)) {
    throw ArgumentError("lidar azimuth step must lie in (0, 2pi)");
  }
  if (!(max_range > 0.0)) throw ArgumentError("lidar max range must be positive");
}

nlohmann::json to_json(const LidarPattern& p) {
  auto frames = nlohmann::json::array();
  for (const auto& f : p.frames) frames.push_back(to_json(f));
  return {{"beams", p.beams}, {"azimuth_step", p.azimuth_step}, {"max_range", p.max_range}, {"frames", frames}};
}

LidarPattern pattern_from_json(const nlohmann::json& j) {
  LidarPattern p;
  try {
    p.beams = j.at("beams").get<std::vector<double>>();
    p.azimuth_step = j.at("azimuth_step").get<double>();
    p.max_range = j.value("max_range", 120.0);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("lidar pattern: ") + e.what());
  }
  if (j.contains("frames")) {
    for (const auto& f : j["frames"]) p.frames.push_back(pose_from_json(f));
  }
  p.validate();
  return p;
}

LidarPattern load_pattern(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return pattern_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void PointCloud::validate() const {
  const std::size_t n = points.size();
  if ((!intensity.empty() && intensity.size() != n) || (!ray_origin.empty() && ray_origin.size() != n) ||
      (!frame.empty() && frame.size() != n)) {
    throw ArgumentError("point cloud attribute sizes differ from the point count");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!points[i].allFinite()) throw NumericError("point " + std::to_string(i) + " is not finite");
    if (!intensity.empty() && !(intensity[i] >= 0.0 && intensity[i] <= 1.0)) {
      throw NumericError("intensity of point " + std::to_string(i) + " outside [0, 1]");
    }
  }
}

void PointCloud::append(const PointCloud& o, std::size_t i) {
  points.push_back(o.points[i]);
  if (o.has_intensity()) intensity.push_back(o.intensity[i]);
  if (o.has_origins()) ray_origin.push_back(o.ray_origin[i]);
  if (!o.frame.empty()) frame.push_back(o.frame[i]);
}

void write_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
  cloud.validate();
  PlyData ply;
  std::vector<double> c[3];
  for (const auto& p : cloud.points) {
    for (int a = 0; a < 3; ++a) c[a].push_back(p[a]);
  }
  ply.add("x", c[0]);
  ply.add("y", c[1]);
  ply.add("z", c[2]);
  if (cloud.has_intensity()) ply.add("intensity", cloud.intensity);
  if (cloud.has_origins()) {
    std::vector<double> o[3];
    for (const auto& p : cloud.ray_origin) {
      for (int a = 0; a < 3; ++a) o[a].push_back(p[a]);
    }
    ply.add("ox", o[0]);
    ply.add("oy", o[1]);
    ply.add("oz", o[2]);
  }
  if (!cloud.frame.empty()) ply.add("frame", std::vector<double>(cloud.frame.begin(), cloud.frame.end()));
  write_ply(path, ply);
}

PointCloud read_cloud(const std::filesystem::path& path) {
  const PlyData ply = read_ply(path);
  PointCloud cloud;
  const auto& x = ply.at("x");
  const auto& y = ply.at("y");
  const auto& z = ply.at("z");
  for (std::size_t i = 0; i < x.size(); ++i) cloud.points.emplace_back(x[i], y[i], z[i]);
  if (const auto* in = ply.find("intensity")) cloud.intensity = *in;
  if (ply.find("ox")) {
    const auto& ox = ply.at("ox");
    const auto& oy = ply.at("oy");
    const auto& oz = ply.at("oz");
    for (std::size_t i = 0; i < ox.size(); ++i) cloud.ray_origin.emplace_back(ox[i], oy[i], oz[i]);
  }
  if (const auto* f = ply.find("frame")) {
    for (double v : *f) cloud.frame.push_back(static_cast<int>(v));
  }
  cloud.validate();
  return cloud;
}

PointCloud transform_cloud(const PointCloud& cloud, const Pose6D& pose) {
  PointCloud out = cloud;
  const Mat3 r = pose.rotation();
  for (auto& p : out.points) p = r * p + pose.translation;
  for (auto& p : out.ray_origin) p = r * p + pose.translation;
  return out;
}

std::optional<RayHit> intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                                         const Vec3& c, double max_t) {
  // Shear into a frame where the ray runs along +z (Woop, Benthin, Wald 2013).
  int kz = 0;
  dir.cwiseAbs().maxCoeff(&kz);
  int kx = (kz + 1) % 3;
  int ky = (kx + 1) % 3;
  if (dir[kz] < 0.0) std::swap(kx, ky);
  const double sx = dir[kx] / dir[kz];
  const double sy = dir[ky] / dir[kz];
  const double sz = 1.0 / dir[kz];

  const Vec3 pa = a - origin, pb = b - origin, pc = c - origin;
  const double ax = pa[kx] - sx * pa[kz], ay = pa[ky] - sy * pa[kz];
  const double bx = pb[kx] - sx * pb[kz], by = pb[ky] - sy * pb[kz];
  const double cx = pc[kx] - sx * pc[kz], cy = pc[ky] - sy * pc[kz];
  const double u = cx * by - cy * bx;
  const double v = ax * cy - ay * cx;
  const double w = bx * ay - by * ax;
  if ((u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0)) return std::nullopt;
  const double det = u + v + w;
  if (det == 0.0) return std::nullopt;
  const double t_scaled = u * sz * pa[kz] + v * sz * pb[kz] + w * sz * pc[kz];
  const double t = t_scaled / det;
  if (!(t > 0.0) || !(t <= max_t)) return std::nullopt;
  RayHit hit;
  hit.t = t;
  hit.barycentric = Vec3(u, v, w) / det;
  return hit;
}

Bvh::Bvh(const TriMesh& mesh, int leaf_size) : mesh_(mesh), leaf_size_(std::max(1, leaf_size)) {
  const std::size_t nf = mesh_.faces.size();
  order_.resize(nf);
  face_boxes_.resize(nf);
  for (std::size_t f = 0; f < nf; ++f) {
    order_[f] = static_cast<int>(f);
    Eigen::AlignedBox3d box;
    for (int v : mesh_.faces[f]) box.extend(mesh_.vertices[v]);
    // Padding keeps the slab test conservative against rounding.
    const Vec3 pad = Vec3::Constant(1e-9) + 1e-9 * box.min().cwiseAbs().cwiseMax(box.max().cwiseAbs());
    face_boxes_[f] = Eigen::AlignedBox3d(box.min() - pad, box.max() + pad);
  }
  if (nf > 0) build(0, static_cast<int>(nf));
}

int Bvh::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Eigen::AlignedBox3d box, centers;
  for (int i = begin; i < end; ++i) {
    box.extend(face_boxes_[order_[i]]);
    centers.extend(face_boxes_[order_[i]].center());
  }
  nodes_[id].box = box;
  if (end - begin <= leaf_size_) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }
  int axis = 0;
  centers.sizes().maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
    const double ca = face_boxes_[a].center()[axis], cb = face_boxes_[b].center()[axis];
    return ca < cb || (ca == cb && a < b);
  });
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

namespace {

// Slab test; returns the entry distance or +inf on a miss.
double box_entry(const Eigen::AlignedBox3d& box, const Vec3& origin, const Vec3& inv_dir, double max_t) {
  double t0 = 0.0, t1 = max_t;
  for (int a = 0; a < 3; ++a) {
    double lo = (box.min()[a] - origin[a]) * inv_dir[a];
    double hi = (box.max()[a] - origin[a]) * inv_dir[a];
    if (lo > hi) std::swap(lo, hi);
    // NaN from 0 * inf means the ray lies in the slab plane; keep the interval.
    if (!std::isnan(lo)) t0 = std::max(t0, lo);
    if (!std::isnan(hi)) t1 = std::min(t1, hi);
    if (t0 > t1) return std::numeric_limits<double>::infinity();
  }
  return t0;
}

bool better(const RayHit& h, const std::optional<RayHit>& best) {
  return !best || h.t < best->t || (h.t == best->t && h.face < best->face);
}

}  // namespace

std::optional<RayHit> Bvh::cast(const Vec3& origin, const Vec3& direction, double max_range) const {
  std::optional<RayHit> best;
  if (nodes_.empty()) return best;
  const Vec3 inv_dir = direction.cwiseInverse();
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    const Node& n = nodes_[id];
    const double limit = best ? best->t : max_range;
    if (box_entry(n.box, origin, inv_dir, limit) > limit) continue;
    if (n.leaf()) {
      for (int i = n.begin; i < n.end; ++i) {
        const int f = order_[i];
        const Face& t = mesh_.faces[f];
        auto hit = intersect_triangle(origin, direction, mesh_.vertices[t[0]], mesh_.vertices[t[1]],
                                      mesh_.vertices[t[2]], max_range);
        if (!hit) continue;
        hit->face = f;
        if (better(*hit, best)) best = hit;
      }
      continue;
    }
    stack.push_back(n.right);
    stack.push_back(n.left);
  }
  return best;
}

std::optional<RayHit> cast_ray_brute_force(const TriMesh& mesh, const Vec3& origin, const Vec3& direction,
                                           double max_range) {
  std::optional<RayHit> best;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    auto hit = intersect_triangle(origin, direction, mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]],
                                  max_range);
    if (!hit) continue;
    hit->face = static_cast<int>(f);
    if (better(*hit, best)) best = hit;
  }
  return best;
}

PointCloud simulate_sweep(const TriMesh& mesh, const Pose6D& pose, const LidarPattern& pattern,
                          const PointCloud* background, const std::vector<double>* vertex_intensity) {
  pattern.validate();
  if (vertex_intensity && vertex_intensity->size() != mesh.vertices.size()) {
    throw ArgumentError("vertex intensity count differs from the mesh vertex count");
  }
  TriMesh placed = mesh;
  const Mat3 r = pose.rotation();
  for (auto& v : placed.vertices) v = r * v + pose.translation;
  const Bvh bvh(placed);

  PointCloud out;
  if (background) {
    background->validate();
    if (!background->empty() && !background->has_origins()) {
      throw ArgumentError("background cloud needs per-point ray origins for occlusion tests");
    }
    std::vector<std::uint8_t> keep(background->size(), 1);
    parallel_chunks(background->size(), 1024, [&](std::size_t, std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        const Vec3 d = background->points[i] - background->ray_origin[i];
        const double range = d.norm();
        if (!(range > 0.0)) continue;
        const auto hit = bvh.cast(background->ray_origin[i], d / range, range);
        if (hit && hit->t < range - kOcclusionMargin) keep[i] = 0;
      }
    });
    for (std::size_t i = 0; i < background->size(); ++i) {
      if (keep[i]) out.append(*background, i);
    }
  }

  const std::size_t na = pattern.azimuth_count();
  const std::size_t nb = pattern.beams.size();
  for (std::size_t fi = 0; fi < pattern.frames.size(); ++fi) {
    const Pose6D& sensor = pattern.frames[fi];
    const Mat3 sr = sensor.rotation();
    const Vec3 origin = sensor.translation;
    std::vector<std::optional<RayHit>> hits(nb * na);
    parallel_chunks(nb, 1, [&](std::size_t, std::size_t b0, std::size_t b1) {
      for (std::size_t b = b0; b < b1; ++b) {
        for (std::size_t a = 0; a < na; ++a) {
          hits[b * na + a] = bvh.cast(origin, sr * pattern.direction(b, a), pattern.max_range);
        }
      }
    });
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t a = 0; a < na; ++a) {
        const auto& h = hits[b * na + a];
        if (!h) continue;
        const Face& t = placed.faces[h->face];
        // Barycentric interpolation keeps the point on the triangle's plane.
        const Vec3 p = h->barycentric[0] * placed.vertices[t[0]] + h->barycentric[1] * placed.vertices[t[1]] +
                       h->barycentric[2] * placed.vertices[t[2]];
        out.points.push_back(p);
        out.ray_origin.push_back(origin);
        out.frame.push_back(static_cast<int>(fi));
        double intensity = 0.0;
        if (vertex_intensity) {
          for (int k = 0; k < 3; ++k) intensity += h->barycentric[k] * (*vertex_intensity)[t[k]];
        }
        out.intensity.push_back(std::clamp(intensity, 0.0, 1.0));
      }
    }
  }
  // Keep attribute columns aligned when background points lacked them.
  if (!out.intensity.empty() && out.intensity.size() != out.points.size()) {
    out.intensity.insert(out.intensity.begin(), out.points.size() - out.intensity.size(), 0.0);
  }
  if (!out.frame.empty() && out.frame.size() != out.points.size()) {
    out.frame.insert(out.frame.begin(), out.points.size() - out.frame.size(), -1);
  }
  return out;
}

std::vector<double> retrieve_intensity(const TriMesh& mesh, const PointCloud& cloud, std::size_t neighbors) {
  if (cloud.empty()) throw ArgumentError("retrieve_intensity: empty point cloud");
  if (!cloud.has_intensity()) throw ArgumentError("retrieve_intensity: cloud carries no intensity");
  const KdTree tree(cloud.points);
  const std::size_t k = std::min(neighbors, cloud.size());
  std::vector<double> out(mesh.vertices.size(), 0.0);
  parallel_chunks(out.size(), 256, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      double sum = 0.0;
      for (const auto& h : tree.knn(mesh.vertices[i], k)) sum += cloud.intensity[h.index];
      out[i] = sum / static_cast<double>(k);
    }
  });
  return out;
}

VoxelDownsample voxel_downsample(const PointCloud& cloud, double resolution) {
  if (!(resolution > 0.0)) throw ArgumentError("voxel resolution must be positive");
  using Key = std::array<std::int64_t, 3>;
  std::map<Key, std::size_t> slot;
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    Key key;
    for (int a = 0; a < 3; ++a) key[a] = static_cast<std::int64_t>(std::floor(cloud.points[i][a] / resolution));
    auto [it, inserted] = slot.emplace(key, members.size());
    if (inserted) members.emplace_back();
    members[it->second].push_back(i);
  }
  VoxelDownsample out;
  for (const auto& m : members) {
    Vec3 p = Vec3::Zero(), o = Vec3::Zero();
    double in = 0.0;
    for (std::size_t i : m) {
      p += cloud.points[i];
      if (cloud.has_origins()) o += cloud.ray_origin[i];
      if (cloud.has_intensity()) in += cloud.intensity[i];
    }
    const double n = static_cast<double>(m.size());
    out.cloud.points.push_back(p / n);
    if (cloud.has_origins()) out.cloud.ray_origin.push_back(o / n);
    if (cloud.has_intensity()) out.cloud.intensity.push_back(in / n);
    if (!cloud.frame.empty()) out.cloud.frame.push_back(cloud.frame[m.front()]);
    out.kept.push_back(m.front());
    for (std::size_t j = 1; j < m.size(); ++j) out.held_out.push_back(m[j]);
  }
  std::sort(out.held_out.begin(), out.held_out.end());
  return out;
}

}  // namespace cadtwin
