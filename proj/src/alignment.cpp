#include "cadtwin/alignment.hpp"

#include <cmath>
#include <string>

#include "cadtwin/error.hpp"
#include "cadtwin/kdtree.hpp"
#include "cadtwin/shape_energy.hpp"

namespace cadtwin {
namespace {

struct AlignEval {
  double energy = 0.0;
  std::vector<Vec3> grad;
};

AlignEval evaluate(const TriMesh& mesh, const std::vector<Vec3>& rest, const Adjacency& adj, const KdTree& target,
                   double lambda) {
  AlignEval out;
  const std::size_t n = mesh.vertices.size();
  out.grad.assign(n, Vec3::Zero());
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const KdTree::Hit hit = target.nearest(mesh.vertices[i]);
    out.energy += hit.dist2 * inv;
    out.grad[i] += 2.0 * inv * (mesh.vertices[i] - target.points()[hit.index]);
  }
  if (lambda > 0.0) {
    std::vector<Vec3> g;
    out.energy += lambda * e_shape_relative(mesh, rest, adj, &g).total();
    for (std::size_t i = 0; i < n; ++i) out.grad[i] += lambda * g[i];
  }
  return out;
}

}  // namespace

AlignmentResult align_template(const TriMesh& source, const std::vector<Vec3>& target, const AlignmentConfig& cfg) {
  if (target.size() < 3) throw ArgumentError("align_template: need at least 3 target points");
  if (cfg.lambda_shape < 0.0) throw ArgumentError("align_template: lambda_shape must be non-negative");
  const Adjacency adj = build_adjacency(source);
  const KdTree tree(target);
  const std::vector<Vec3> rest = source.vertices;
  const double n = static_cast<double>(source.vertices.size());

  AlignmentResult result;
  result.mesh = source;
  AlignEval current = evaluate(result.mesh, rest, adj, tree, cfg.lambda_shape);
  result.energy_trace.push_back(current.energy);
  double step = cfg.step_size;
  for (int it = 0; it < cfg.iterations; ++it) {
    if (!std::isfinite(current.energy)) {
      throw NumericError("align_template: non-finite energy at iteration " + std::to_string(it));
    }
    bool accepted = false;
    for (int tries = 0; tries < 30 && !accepted; ++tries) {
      TriMesh trial = result.mesh;
      for (std::size_t i = 0; i < trial.vertices.size(); ++i) trial.vertices[i] -= step * n * current.grad[i];
      AlignEval next;
      try {
        next = evaluate(trial, rest, adj, tree, cfg.lambda_shape);
      } catch (const NumericError&) {
        step *= 0.5;
        continue;
      }
      if (std::isfinite(next.energy) && next.energy <= current.energy) {
        result.mesh = std::move(trial);
        current = std::move(next);
        accepted = true;
        step = std::min(step * 1.5, 4.0 * cfg.step_size);
      } else {
        step *= 0.5;
      }
    }
    if (!std::isfinite(current.energy)) {
      throw NumericError("align_template: non-finite energy at iteration " + std::to_string(it + 1));
    }
    result.energy_trace.push_back(current.energy);
    if (!accepted) break;
  }
  return result;
}

}  // namespace cadtwin
