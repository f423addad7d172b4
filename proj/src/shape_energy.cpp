#include "cadtwin/shape_energy.hpp"

#include <string>

#include "cadtwin/error.hpp"

namespace cadtwin {
namespace {

struct FaceFrame {
  Vec3 e1, e2, normal;
  double cross_norm = 0.0;
};

FaceFrame face_frame(const std::vector<Vec3>& v, const Face& f, std::size_t index) {
  FaceFrame fr;
  fr.e1 = v[f[1]] - v[f[0]];
  fr.e2 = v[f[2]] - v[f[0]];
  const Vec3 c = fr.e1.cross(fr.e2);
  fr.cross_norm = c.norm();
  if (!(fr.cross_norm > 0.0)) throw NumericError("e_shape: face " + std::to_string(index) + " has zero area");
  fr.normal = c / fr.cross_norm;
  return fr;
}

// Accumulates dL/dv for L depending on the unit normal through g_normal.
void normal_backward(const FaceFrame& fr, const Face& f, const Vec3& g_normal, std::vector<Vec3>& grad) {
  const Vec3 gc = (g_normal - fr.normal * fr.normal.dot(g_normal)) / fr.cross_norm;
  const Vec3 ge1 = fr.e2.cross(gc);
  const Vec3 ge2 = gc.cross(fr.e1);
  grad[f[1]] += ge1;
  grad[f[2]] += ge2;
  grad[f[0]] -= ge1 + ge2;
}

ShapeEnergy evaluate(const TriMesh& mesh, const std::vector<Vec3>* rest, const Adjacency& adj,
                     std::vector<Vec3>* grad) {
  const auto& v = mesh.vertices;
  std::vector<FaceFrame> frames(mesh.faces.size());
  std::vector<Vec3> rest_normals;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) frames[f] = face_frame(v, mesh.faces[f], f);
  if (rest) {
    rest_normals.resize(mesh.faces.size());
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) rest_normals[f] = face_frame(*rest, mesh.faces[f], f).normal;
  }
  if (grad) grad->assign(v.size(), Vec3::Zero());

  ShapeEnergy e;
  std::vector<Vec3> g_normals(grad ? mesh.faces.size() : 0, Vec3::Zero());
  if (!adj.face_pairs.empty()) {
    const double inv = 1.0 / static_cast<double>(adj.face_pairs.size());
    for (const auto& [f, g] : adj.face_pairs) {
      const double dot = frames[f].normal.dot(frames[g].normal);
      const double r = rest ? rest_normals[f].dot(rest_normals[g]) - dot : 1.0 - dot;
      e.normal += r * r * inv;
      if (grad) {
        g_normals[f] -= 2.0 * r * inv * frames[g].normal;
        g_normals[g] -= 2.0 * r * inv * frames[f].normal;
      }
    }
  }
  if (grad) {
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) normal_backward(frames[f], mesh.faces[f], g_normals[f], *grad);
  }
  if (!adj.edges.empty()) {
    const double inv = 1.0 / static_cast<double>(adj.edges.size());
    for (const auto& [a, b] : adj.edges) {
      Vec3 d = v[a] - v[b];
      if (rest) d -= (*rest)[a] - (*rest)[b];
      e.edge += d.squaredNorm() * inv;
      if (grad) {
        (*grad)[a] += 2.0 * inv * d;
        (*grad)[b] -= 2.0 * inv * d;
      }
    }
  }
  return e;
}

}  // namespace

ShapeEnergy e_shape(const TriMesh& mesh, const Adjacency& adjacency, std::vector<Vec3>* grad) {
  return evaluate(mesh, nullptr, adjacency, grad);
}

ShapeEnergy e_shape_relative(const TriMesh& mesh, const std::vector<Vec3>& rest, const Adjacency& adjacency,
                             std::vector<Vec3>* grad) {
  if (rest.size() != mesh.vertices.size()) throw ArgumentError("e_shape_relative: rest shape size mismatch");
  return evaluate(mesh, &rest, adjacency, grad);
}

}  // namespace cadtwin
