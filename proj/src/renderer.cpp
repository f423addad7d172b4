#include "cadtwin/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cadtwin/parallel.hpp"
#include "cadtwin/shading.hpp"

namespace cadtwin {
namespace {

constexpr int kTile = 8;
constexpr std::size_t kRowsPerChunk = 4;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

bool inside_triangle(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
  const double area = cross2(b - a, c - a);
  if (area == 0.0) return false;
  const double w0 = cross2(b - a, p - a);
  const double w1 = cross2(c - b, p - b);
  const double w2 = cross2(a - c, p - c);
  if (area > 0.0) return w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0;
  return w0 <= 0.0 && w1 <= 0.0 && w2 <= 0.0;
}

// Closest point parameter on segment ab to p.
double segment_param(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 <= 0.0) return 0.0;
  return std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
}

struct TileGrid {
  int tiles_x = 0, tiles_y = 0;
  std::vector<std::vector<int>> bins;

  TileGrid(int w, int h) : tiles_x((w + kTile - 1) / kTile), tiles_y((h + kTile - 1) / kTile) {
    bins.resize(static_cast<std::size_t>(tiles_x) * tiles_y);
  }

  void insert(int id, Vec2 lo, Vec2 hi) {
    const int x0 = std::max(0, static_cast<int>(std::floor(lo.x() / kTile)));
    const int y0 = std::max(0, static_cast<int>(std::floor(lo.y() / kTile)));
    const int x1 = std::min(tiles_x - 1, static_cast<int>(std::floor(hi.x() / kTile)));
    const int y1 = std::min(tiles_y - 1, static_cast<int>(std::floor(hi.y() / kTile)));
    for (int ty = y0; ty <= y1; ++ty) {
      for (int tx = x0; tx <= x1; ++tx) bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(id);
    }
  }

  const std::vector<int>* at(const Vec2& p) const {
    if (!(p.x() >= 0.0) || !(p.y() >= 0.0)) return nullptr;
    const int tx = static_cast<int>(p.x() / kTile);
    const int ty = static_cast<int>(p.y() / kTile);
    if (tx >= tiles_x || ty >= tiles_y) return nullptr;
    return &bins[static_cast<std::size_t>(ty) * tiles_x + tx];
  }
};

Vec3 face_normal(const TriMesh& mesh, int f, Vec3* e1 = nullptr, Vec3* e2 = nullptr, double* len = nullptr) {
  const Face& t = mesh.faces[f];
  const Vec3 a = mesh.vertices[t[1]] - mesh.vertices[t[0]];
  const Vec3 b = mesh.vertices[t[2]] - mesh.vertices[t[0]];
  const Vec3 c = a.cross(b);
  const double n = c.norm();
  if (e1) *e1 = a;
  if (e2) *e2 = b;
  if (len) *len = n;
  return n > 0.0 ? Vec3(c / n) : Vec3::Zero();
}

Vec2 interpolated_uv(const TriMesh& mesh, int f, const Vec3& bary) {
  if (!mesh.has_uv()) return Vec2::Zero();
  const Face& t = mesh.faces[f];
  return bary[0] * mesh.uv[t[0]] + bary[1] * mesh.uv[t[1]] + bary[2] * mesh.uv[t[2]];
}

struct SurfaceMaterial {
  Vec3 kd = Vec3::Constant(0.5);
  double roughness = 1.0;
  double metalness = 0.0;
  BilinearFootprint kd_fp, orm_fp;
};

SurfaceMaterial material_at(const AppearanceParams& app, const Vec2& uv) {
  SurfaceMaterial s;
  if (!app.kd.empty()) {
    s.kd_fp = bilinear_footprint(app.kd, uv);
    s.kd = sample(app.kd, s.kd_fp);
  }
  if (!app.orm.empty()) {
    s.orm_fp = bilinear_footprint(app.orm, uv);
    const Vec3 orm = sample(app.orm, s.orm_fp);
    s.roughness = orm.y();
    s.metalness = orm.z();
  }
  return s;
}

}  // namespace

Rasterization rasterize(const TriMesh& mesh, const Adjacency& adjacency, const Camera& camera, double softness) {
  camera.validate();
  const Intrinsics& k = camera.intrinsics;
  Rasterization r;
  r.width = k.width;
  r.height = k.height;
  r.softness = std::max(0.0, softness);
  const std::size_t npix = static_cast<std::size_t>(k.width) * k.height;
  r.face.assign(npix, -1);
  r.barycentric.assign(npix, Vec3::Zero());
  r.ray_t.assign(npix, 0.0);
  r.depth.assign(npix, 0.0);
  r.hard.assign(npix, 0);
  r.coverage.assign(npix, 0.0);
  r.nearest_edge.assign(npix, -1);
  r.edge_distance.assign(npix, 0.0);

  const Mat3 rot = camera.extrinsics.rotation();
  const std::size_t nv = mesh.vertices.size();
  r.camera_vertices.resize(nv);
  r.screen_vertices.resize(nv);
  std::vector<std::uint8_t> valid(nv, 0);
  for (std::size_t i = 0; i < nv; ++i) {
    r.camera_vertices[i] = rot * mesh.vertices[i] + camera.extrinsics.translation;
    const Projection p = project_camera_frame(k, r.camera_vertices[i]);
    r.screen_vertices[i] = p.pixel;
    valid[i] = p.valid;
  }

  const std::size_t nf = mesh.faces.size();
  r.front_facing.assign(nf, 0);
  TileGrid tris(k.width, k.height);
  for (std::size_t f = 0; f < nf; ++f) {
    const Face& t = mesh.faces[f];
    if (!valid[t[0]] || !valid[t[1]] || !valid[t[2]]) continue;
    const Vec3& p0 = r.camera_vertices[t[0]];
    const Vec3 n = (r.camera_vertices[t[1]] - p0).cross(r.camera_vertices[t[2]] - p0);
    if (!(p0.dot(n) < 0.0)) continue;
    r.front_facing[f] = 1;
    const Vec2& a = r.screen_vertices[t[0]];
    const Vec2& b = r.screen_vertices[t[1]];
    const Vec2& c = r.screen_vertices[t[2]];
    tris.insert(static_cast<int>(f), a.cwiseMin(b).cwiseMin(c), a.cwiseMax(b).cwiseMax(c));
  }

  auto covered = [&](const Vec2& p) {
    const auto* bin = tris.at(p);
    if (!bin) return false;
    for (int f : *bin) {
      const Face& t = mesh.faces[f];
      if (inside_triangle(p, r.screen_vertices[t[0]], r.screen_vertices[t[1]], r.screen_vertices[t[2]])) return true;
    }
    return false;
  };

  // Hard visibility.
  parallel_chunks(static_cast<std::size_t>(k.height), kRowsPerChunk, [&](std::size_t, std::size_t y0, std::size_t y1) {
    for (std::size_t y = y0; y < y1; ++y) {
      for (int x = 0; x < k.width; ++x) {
        const Vec2 p(x + 0.5, static_cast<double>(y) + 0.5);
        const auto* bin = tris.at(p);
        if (!bin) continue;
        const Vec3 d = camera.ray_camera(p.x(), p.y());
        double best = std::numeric_limits<double>::infinity();
        int best_face = -1;
        Vec3 best_bary = Vec3::Zero();
        for (int f : *bin) {
          const Face& t = mesh.faces[f];
          if (!inside_triangle(p, r.screen_vertices[t[0]], r.screen_vertices[t[1]], r.screen_vertices[t[2]])) continue;
          const Vec3& p0 = r.camera_vertices[t[0]];
          const Vec3& p1 = r.camera_vertices[t[1]];
          const Vec3& p2 = r.camera_vertices[t[2]];
          const Vec3 n = (p1 - p0).cross(p2 - p0);
          const double denom = n.dot(d);
          if (denom == 0.0) continue;
          const double tt = n.dot(p0) / denom;
          if (!(tt > kNearDepth) || !(tt < best)) continue;
          const Vec3 hit = tt * d;
          const double inv = 1.0 / n.squaredNorm();
          const double b0 = (p1 - hit).cross(p2 - hit).dot(n) * inv;
          const double b1 = (p2 - hit).cross(p0 - hit).dot(n) * inv;
          best = tt;
          best_face = f;
          best_bary = Vec3(b0, b1, 1.0 - b0 - b1);
        }
        if (best_face < 0) continue;
        const std::size_t i = r.pixel(x, static_cast<int>(y));
        r.face[i] = best_face;
        r.barycentric[i] = best_bary;
        r.ray_t[i] = best;
        r.depth[i] = best;  // ray direction has unit z
        r.hard[i] = 1;
        r.coverage[i] = 1.0;
      }
    }
  });

  if (r.softness <= 0.0) return r;

  // Outline edges: silhouette edges with an uncovered outer side.
  for (std::size_t e = 0; e < adjacency.edges.size(); ++e) {
    const auto [f0, f1] = adjacency.edge_faces[e];
    const bool front0 = r.front_facing[f0] != 0;
    const bool front1 = f1 >= 0 && r.front_facing[f1] != 0;
    if (front0 == front1) continue;
    const int front = front0 ? f0 : f1;
    const auto [va, vb] = adjacency.edges[e];
    const Face& t = mesh.faces[front];
    int vc = t[0];
    for (int v : t) {
      if (v != va && v != vb) vc = v;
    }
    const Vec2& a = r.screen_vertices[va];
    const Vec2& b = r.screen_vertices[vb];
    const Vec2 dir = b - a;
    const double len = dir.norm();
    if (!(len > 0.0)) continue;
    Vec2 out(dir.y() / len, -dir.x() / len);
    if ((r.screen_vertices[vc] - a).dot(out) > 0.0) out = -out;
    if (covered(0.5 * (a + b) + 0.5 * out)) continue;
    r.outline_edges.push_back({va, vb});
  }

  const double band = kSoftBandWidth * r.softness;
  TileGrid edges(k.width, k.height);
  for (std::size_t e = 0; e < r.outline_edges.size(); ++e) {
    const Vec2& a = r.screen_vertices[r.outline_edges[e][0]];
    const Vec2& b = r.screen_vertices[r.outline_edges[e][1]];
    edges.insert(static_cast<int>(e), a.cwiseMin(b).array() - band, a.cwiseMax(b).array() + band);
  }

  parallel_chunks(static_cast<std::size_t>(k.height), kRowsPerChunk, [&](std::size_t, std::size_t y0, std::size_t y1) {
    for (std::size_t y = y0; y < y1; ++y) {
      for (int x = 0; x < k.width; ++x) {
        const Vec2 p(x + 0.5, static_cast<double>(y) + 0.5);
        const auto* bin = edges.at(p);
        if (!bin) continue;
        double best = std::numeric_limits<double>::infinity();
        int best_edge = -1;
        for (int e : *bin) {
          const Vec2& a = r.screen_vertices[r.outline_edges[e][0]];
          const Vec2& b = r.screen_vertices[r.outline_edges[e][1]];
          const double u = segment_param(p, a, b);
          const double d = (a + u * (b - a) - p).norm();
          if (d < best) {
            best = d;
            best_edge = e;
          }
        }
        if (best_edge < 0 || best > band) continue;
        const std::size_t i = r.pixel(x, static_cast<int>(y));
        const double sign = r.hard[i] ? 1.0 : -1.0;
        r.nearest_edge[i] = best_edge;
        r.edge_distance[i] = best;
        r.coverage[i] = sigmoid(sign * best / r.softness);
      }
    }
  });
  return r;
}

RenderOutput render(const TriMesh& mesh, const Adjacency& adjacency, const AppearanceParams& app,
                    const Camera& camera, const RenderOptions& options, Rasterization* cache) {
  Rasterization local;
  Rasterization& r = cache ? *cache : local;
  r = rasterize(mesh, adjacency, camera, options.softness);
  const int w = r.width, h = r.height;
  RenderOutput out;
  out.color = Image(w, h, 3);
  out.mask = Image(w, h, 1);
  out.depth = Image(w, h, 1);
  std::copy(r.coverage.begin(), r.coverage.end(), out.mask.data.begin());
  std::copy(r.depth.begin(), r.depth.end(), out.depth.data.begin());
  if (!options.shade) return out;

  const Mat3 rot = camera.extrinsics.rotation();
  parallel_chunks(static_cast<std::size_t>(h), kRowsPerChunk, [&](std::size_t, std::size_t y0, std::size_t y1) {
    for (std::size_t y = y0; y < y1; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = r.pixel(x, static_cast<int>(y));
        const int f = r.face[i];
        if (f < 0) continue;
        const Vec3 ray = rot.transpose() * camera.ray_camera(x + 0.5, static_cast<double>(y) + 0.5);
        const SurfaceMaterial mat = material_at(app, interpolated_uv(mesh, f, r.barycentric[i]));
        ShadeInput in{face_normal(mesh, f), -ray.normalized(), mat.kd, mat.roughness, mat.metalness};
        const Vec3 c = shade(in, app.env, options.specular);
        for (int ch = 0; ch < 3; ++ch) out.color.data[i * 3 + ch] = c[ch];
      }
    }
  });
  return out;
}

RenderGrad render_backward(const Rasterization& r, const TriMesh& mesh, const AppearanceParams& app,
                           const Camera& camera, const RenderOptions& options, const Image& grad_color,
                           const Image& grad_mask) {
  const int w = r.width, h = r.height;
  const std::size_t npix = static_cast<std::size_t>(w) * h;
  const bool use_color = options.shade && !grad_color.data.empty();
  const bool use_mask = r.softness > 0.0 && !grad_mask.data.empty();

  RenderGrad g;
  g.vertices.assign(mesh.vertices.size(), Vec3::Zero());
  g.kd = Texture(app.kd.width, app.kd.height);
  g.orm = Texture(app.orm.width, app.orm.height);
  g.radiance.assign(app.env.size(), Vec3::Zero());

  const Mat3 rot = camera.extrinsics.rotation();
  const Vec3& trans = camera.extrinsics.translation;

  struct PixelGrad {
    bool color = false;
    bool mask = false;
    std::array<Vec3, 3> vertex{Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
    Vec3 center = Vec3::Zero();
    Vec3 ray = Vec3::Zero();
    Vec3 ray_camera = Vec3::Zero();
    Vec3 kd = Vec3::Zero();
    double roughness = 0.0, metalness = 0.0;
    Vec2 uv = Vec2::Zero();
    Vec2 edge_a = Vec2::Zero(), edge_b = Vec2::Zero();
  };
  std::vector<PixelGrad> pix(npix);
  const std::size_t chunks = chunk_count(static_cast<std::size_t>(h), kRowsPerChunk);
  std::vector<std::vector<Vec3>> chunk_radiance(use_color ? chunks : 0);

  parallel_chunks(static_cast<std::size_t>(h), kRowsPerChunk, [&](std::size_t chunk, std::size_t y0, std::size_t y1) {
    if (use_color) chunk_radiance[chunk].assign(app.env.size(), Vec3::Zero());
    for (std::size_t y = y0; y < y1; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = r.pixel(x, static_cast<int>(y));
        PixelGrad& pg = pix[i];
        const Vec2 p(x + 0.5, static_cast<double>(y) + 0.5);

        if (use_mask && r.nearest_edge[i] >= 0) {
          const double gm = grad_mask.data[i];
          const double d = r.edge_distance[i];
          if (gm != 0.0 && d > 1e-12) {
            const double m = r.coverage[i];
            const double sign = r.hard[i] ? 1.0 : -1.0;
            const double gd = gm * m * (1.0 - m) * sign / r.softness;
            const auto& e = r.outline_edges[r.nearest_edge[i]];
            const Vec2& a = r.screen_vertices[e[0]];
            const Vec2& b = r.screen_vertices[e[1]];
            const double u = segment_param(p, a, b);
            const Vec2 dir = (a + u * (b - a) - p) / d;
            pg.mask = true;
            pg.edge_a = gd * (1.0 - u) * dir;
            pg.edge_b = gd * u * dir;
          }
        }

        const int f = r.face[i];
        if (!use_color || f < 0) continue;
        const Vec3 gc(grad_color.data[i * 3], grad_color.data[i * 3 + 1], grad_color.data[i * 3 + 2]);
        if (gc.isZero(0.0)) continue;
        pg.color = true;
        const Face& t = mesh.faces[f];
        const Vec3& bary = r.barycentric[i];
        Vec3 e1, e2;
        double cross_len = 0.0;
        const Vec3 normal = face_normal(mesh, f, &e1, &e2, &cross_len);
        const Vec3 dc = camera.ray_camera(p.x(), p.y());
        const Vec3 ray = rot.transpose() * dc;
        const double ray_len = ray.norm();
        const Vec3 view = -ray / ray_len;
        pg.uv = interpolated_uv(mesh, f, bary);
        const SurfaceMaterial mat = material_at(app, pg.uv);
        const ShadeInput in{normal, view, mat.kd, mat.roughness, mat.metalness};
        const ShadeGrad sg = shade_backward(in, app.env, options.specular, gc, &chunk_radiance[chunk]);
        pg.kd = sg.kd;
        pg.roughness = sg.roughness;
        pg.metalness = sg.metalness;

        // Texture lookups move with the barycentric uv.
        Vec2 g_uv = Vec2::Zero();
        if (mesh.has_uv()) {
          for (int q = 0; q < 4; ++q) {
            if (!app.kd.empty()) {
              const double* tx = &app.kd.texels[mat.kd_fp.offsets[q]];
              const double s = sg.kd.dot(Vec3(tx[0], tx[1], tx[2]));
              g_uv += s * Vec2(mat.kd_fp.dweight_du[q], mat.kd_fp.dweight_dv[q]);
            }
            if (!app.orm.empty()) {
              const double* tx = &app.orm.texels[mat.orm_fp.offsets[q]];
              const double s = sg.roughness * tx[1] + sg.metalness * tx[2];
              g_uv += s * Vec2(mat.orm_fp.dweight_du[q], mat.orm_fp.dweight_dv[q]);
            }
          }
        }
        Vec3 g_bary = Vec3::Zero();
        if (mesh.has_uv()) {
          for (int q = 0; q < 3; ++q) g_bary[q] = mesh.uv[t[q]].dot(g_uv);
        }

        // Unit face normal.
        const Vec3 g_cross = (sg.normal - normal * normal.dot(sg.normal)) / cross_len;
        const Vec3 ge1 = e2.cross(g_cross);
        const Vec3 ge2 = g_cross.cross(e1);
        pg.vertex[1] += ge1;
        pg.vertex[2] += ge2;
        pg.vertex[0] -= ge1 + ge2;

        // View direction v = -ray / |ray|.
        Vec3 g_ray = -(sg.view - view * view.dot(sg.view)) / ray_len;
        Vec3 g_center = Vec3::Zero();

        // Ray/triangle intersection: X0 + b1 e1 + b2 e2 = C + t D.
        const Vec3 gx(g_bary[1] - g_bary[0], g_bary[2] - g_bary[0], 0.0);
        if (!gx.isZero(0.0)) {
          Mat3 a;
          a.col(0) = e1;
          a.col(1) = e2;
          a.col(2) = -ray;
          const Vec3 lambda = a.transpose().partialPivLu().solve(gx);
          for (int q = 0; q < 3; ++q) pg.vertex[q] -= bary[q] * lambda;
          g_center += lambda;
          g_ray += r.ray_t[i] * lambda;
        }
        pg.center = g_center;
        pg.ray = g_ray;
        pg.ray_camera = dc;
      }
    }
  });

  Mat3 g_rot = Mat3::Zero();
  Vec3 g_trans = Vec3::Zero();
  std::vector<Vec2> g_screen(use_mask ? mesh.vertices.size() : 0, Vec2::Zero());
  for (std::size_t i = 0; i < npix; ++i) {
    const PixelGrad& pg = pix[i];
    if (pg.mask) {
      const auto& e = r.outline_edges[r.nearest_edge[i]];
      g_screen[e[0]] += pg.edge_a;
      g_screen[e[1]] += pg.edge_b;
    }
    if (!pg.color) continue;
    const Face& t = mesh.faces[r.face[i]];
    for (int q = 0; q < 3; ++q) g.vertices[t[q]] += pg.vertex[q];
    g_rot += -trans * pg.center.transpose() + pg.ray_camera * pg.ray.transpose();
    g_trans += -(rot * pg.center);
    if (!app.kd.empty()) {
      const BilinearFootprint fp = bilinear_footprint(app.kd, pg.uv);
      for (int q = 0; q < 4; ++q) {
        for (int c = 0; c < 3; ++c) g.kd.texels[fp.offsets[q] + c] += fp.weights[q] * pg.kd[c];
      }
    }
    if (!app.orm.empty()) {
      const BilinearFootprint fp = bilinear_footprint(app.orm, pg.uv);
      for (int q = 0; q < 4; ++q) {
        g.orm.texels[fp.offsets[q] + 1] += fp.weights[q] * pg.roughness;
        g.orm.texels[fp.offsets[q] + 2] += fp.weights[q] * pg.metalness;
      }
    }
  }
  for (const auto& cr : chunk_radiance) {
    for (std::size_t e = 0; e < cr.size(); ++e) g.radiance[e] += cr[e];
  }

  const Intrinsics& k = camera.intrinsics;
  for (std::size_t v = 0; v < g_screen.size(); ++v) {
    if (g_screen[v].isZero(0.0)) continue;
    const Vec3& pc = r.camera_vertices[v];
    const double iz = 1.0 / pc.z();
    const Vec3 g_pc(k.fx * iz * g_screen[v].x(), k.fy * iz * g_screen[v].y(),
                    -(k.fx * pc.x() * g_screen[v].x() + k.fy * pc.y() * g_screen[v].y()) * iz * iz);
    g.vertices[v] += rot.transpose() * g_pc;
    g_rot += g_pc * mesh.vertices[v].transpose();
    g_trans += g_pc;
  }
  g.camera.rot6 = rot6d_backward(camera.extrinsics.rot6, g_rot);
  g.camera.translation = g_trans;
  return g;
}

}  // namespace cadtwin
