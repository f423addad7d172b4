#pragma once

#include <vector>

#include "cadtwin/mesh.hpp"

namespace cadtwin {

struct AlignmentConfig {
  double lambda_shape = 0.1;
  int iterations = 200;
  // Initial step of the backtracking descent, in units of the per-vertex gradient.
  double step_size = 0.5;
};

struct AlignmentResult {
  TriMesh mesh;
  std::vector<double> energy_trace;  // non-increasing, entry 0 is the initial energy
};

// Deforms source toward the target points by minimizing the one-sided
// vertex-to-target Chamfer distance plus lambda_shape times the deformation
// regularizer. Topology is never modified.
AlignmentResult align_template(const TriMesh& source, const std::vector<Vec3>& target, const AlignmentConfig& cfg);

}  // namespace cadtwin
