#include <gtest/gtest.h>

#include <Eigen/SVD>
#include <cmath>
#include <numbers>

#include "cadtwin/alignment.hpp"
#include "cadtwin/asset.hpp"
#include "cadtwin/error.hpp"
#include "cadtwin/fixture.hpp"
#include "cadtwin/shape_space.hpp"
#include "cadtwin/vehicle.hpp"
#include "support.hpp"

namespace cadtwin {
namespace {

constexpr double kPi = std::numbers::pi;

VehicleMesh simple_vehicle(int wheels = 4) {
  VehicleMesh vm;
  vm.body = make_subdivided_cube(2);
  vm.wheel_template = make_cylinder(16);
  for (int k = 0; k < wheels; ++k) vm.wheel_poses.push_back(Eigen::Isometry3d::Identity());
  vm.front_wheels = {0, 1};
  return vm;
}

VehicleMesh rigged_vehicle() {
  VehicleMesh vm = simple_vehicle();
  const double xs[] = {1.3, 1.3, -1.3, -1.3};
  const double ys[] = {0.8, -0.8, 0.8, -0.8};
  for (int k = 0; k < 4; ++k) vm.wheel_poses[k] = Eigen::Translation3d(xs[k], ys[k], 0.3) * Eigen::Isometry3d::Identity();
  vm.params.radius = 0.35;
  vm.params.thickness = 0.2;
  return vm;
}

std::vector<Vec3> wheel_slice(const TriMesh& assembled, const VehicleMesh& vm, int k) {
  const std::size_t nb = vm.body.vertex_count(), nw = vm.wheel_template.vertex_count();
  return {assembled.vertices.begin() + nb + k * nw, assembled.vertices.begin() + nb + (k + 1) * nw};
}

TEST(Assemble, IdentityWheelsCopyTemplate) {
  const VehicleMesh vm = simple_vehicle();
  const TriMesh m = assemble(vm);
  EXPECT_EQ(m.vertex_count(), vm.body.vertex_count() + 4 * vm.wheel_template.vertex_count());
  EXPECT_EQ(m.face_count(), vm.body.face_count() + 4 * vm.wheel_template.face_count());
  for (std::size_t i = 0; i < vm.body.vertex_count(); ++i) EXPECT_EQ(m.vertices[i], vm.body.vertices[i]);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(wheel_slice(m, vm, k), vm.wheel_template.vertices);
}

TEST(Assemble, SteerTurnsFrontWheelsOnly) {
  VehicleMesh vm = simple_vehicle();
  vm.params.steer = kPi / 2;
  const TriMesh m = assemble(vm);
  const Mat3 rz = rotation_about_axis(Vec3::UnitZ(), kPi / 2);
  for (int k = 0; k < 4; ++k) {
    const auto w = wheel_slice(m, vm, k);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const Vec3 expect = k < 2 ? Vec3(rz * vm.wheel_template.vertices[i]) : vm.wheel_template.vertices[i];
      EXPECT_NEAR((w[i] - expect).norm(), 0.0, 1e-12);
    }
  }
}

TEST(Assemble, ScaledCylinderBoundingBox) {
  VehicleMesh vm = simple_vehicle();
  vm.params.radius = 2.0;
  vm.params.thickness = 1.0;
  const auto w = wheel_slice(assemble(vm), vm, 0);
  Vec3 lo = w[0], hi = w[0];
  for (const auto& v : w) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const Vec3 extent = hi - lo;
  EXPECT_NEAR(extent.x(), 4.0, 1e-12);
  EXPECT_NEAR(extent.y(), 1.0, 1e-12);
  EXPECT_NEAR(extent.z(), 4.0, 1e-12);
}

TEST(Assemble, RigidEquivariance) {
  const VehicleMesh vm = rigged_vehicle();
  CounterRng rng(3);
  const Pose6D g = testing::random_pose(rng);
  Eigen::Isometry3d iso = Eigen::Isometry3d::Identity();
  iso.linear() = g.rotation();
  iso.translation() = g.translation;
  VehicleMesh moved = vm;
  for (auto& v : moved.body.vertices) v = g.apply(v);
  for (auto& t : moved.wheel_poses) t = iso * t;
  const TriMesh a = assemble(vm), b = assemble(moved);
  for (std::size_t i = 0; i < a.vertex_count(); ++i) EXPECT_NEAR((g.apply(a.vertices[i]) - b.vertices[i]).norm(), 0.0, 1e-12);
}

TEST(Articulation, SteerAffectsOnlyFrontWheels) {
  VehicleMesh vm = rigged_vehicle();
  const TriMesh base = assemble(vm);
  vm.params.steer = 0.4;
  const TriMesh steered = assemble(vm);
  for (int k = 0; k < 4; ++k) {
    const auto a = wheel_slice(base, vm, k), b = wheel_slice(steered, vm, k);
    double moved = 0;
    for (std::size_t i = 0; i < a.size(); ++i) moved = std::max(moved, (a[i] - b[i]).norm());
    if (vm.is_front(k)) {
      EXPECT_GT(moved, 1e-3);
    } else {
      EXPECT_EQ(moved, 0.0);
    }
  }
  for (std::size_t i = 0; i < vm.body.vertex_count(); ++i) EXPECT_EQ(base.vertices[i], steered.vertices[i]);
}

TEST(Articulation, AxleSharedScaleAndOffsetByConstruction) {
  VehicleMesh vm = rigged_vehicle();
  vm.params.front_offset = Vec3(0.01, 0.02, -0.03);
  vm.params.back_offset = Vec3(-0.02, 0.0, 0.01);
  const WheelTransform t0 = wheel_transform(vm, 0), t1 = wheel_transform(vm, 1);
  const WheelTransform t2 = wheel_transform(vm, 2), t3 = wheel_transform(vm, 3);
  // One scale and one offset per axle exist in WheelParams; transforms read them verbatim.
  EXPECT_EQ(t0.scale, t1.scale);
  EXPECT_EQ(t0.scale, t2.scale);
  EXPECT_EQ(t2.scale, t3.scale);
  EXPECT_EQ(t0.offset, t1.offset);
  EXPECT_EQ(t2.offset, t3.offset);
  EXPECT_EQ(t0.offset, vm.params.front_offset);
  EXPECT_EQ(t2.offset, vm.params.back_offset);
}

TEST(Articulation, FullSpinReturnsWheelVertices) {
  const VehicleMesh vm = rigged_vehicle();
  const VehicleMesh rolled = animate(vm, 2 * kPi * vm.params.radius, 0.0);
  ASSERT_EQ(rolled.spin.size(), 4u);
  for (double s : rolled.spin) EXPECT_NEAR(s, 2 * kPi, 1e-15);
  const TriMesh a = assemble(vm), b = assemble(rolled);
  for (std::size_t i = 0; i < a.vertex_count(); ++i) EXPECT_NEAR((a.vertices[i] - b.vertices[i]).norm(), 0.0, 1e-9);
}

TEST(Animate, ZeroDistanceUnchanged) {
  const VehicleMesh vm = rigged_vehicle();
  const TriMesh a = assemble(vm), b = assemble(animate(vm, 0.0, 0.0));
  EXPECT_EQ(a.vertices, b.vertices);
}

TEST(Animate, HalfTurnMovesPointToAntipode) {
  VehicleMesh vm = simple_vehicle();
  vm.params.radius = 0.5;
  // A marked vertex on the wheel rim.
  std::size_t rim = 0;
  for (std::size_t i = 0; i < vm.wheel_template.vertex_count(); ++i) {
    if (std::abs(vm.wheel_template.vertices[i].x() - 1.0) < 1e-12) rim = i;
  }
  const Vec3 before = wheel_slice(assemble(vm), vm, 2)[rim];
  const Vec3 after = wheel_slice(assemble(animate(vm, kPi * 0.5, 0.0)), vm, 2)[rim];
  // Half a turn about the axle (y) negates x and z.
  EXPECT_NEAR((after - Vec3(-before.x(), before.y(), -before.z())).norm(), 0.0, 1e-12);
}

TEST(Animate, SetsSteer) {
  const VehicleMesh out = animate(rigged_vehicle(), 1.0, 0.3);
  EXPECT_EQ(out.params.steer, 0.3);
  for (double s : out.spin) EXPECT_NEAR(s, 1.0 / 0.35, 1e-15);
}

TEST(VehicleMesh, ValidateRejectsBadRig) {
  VehicleMesh vm = simple_vehicle(1);
  EXPECT_THROW(vm.validate(), ArgumentError);
  vm = simple_vehicle();
  vm.params.radius = 0.0;
  EXPECT_THROW(vm.validate(), ArgumentError);
  vm = simple_vehicle();
  vm.front_wheels = {3};
  EXPECT_THROW(vm.validate(), ArgumentError);
}

TEST(AssembleBackward, MatchesFiniteDifference) {
  VehicleMesh vm = rigged_vehicle();
  vm.params.steer = 0.2;
  vm.params.front_offset = Vec3(0.01, 0.0, 0.02);
  vm.spin = {0.1, 0.2, 0.3, 0.4};
  CounterRng rng(4);
  const TriMesh m = assemble(vm);
  std::vector<Vec3> g(m.vertex_count());
  for (auto& v : g) v = testing::random_vec(rng);
  auto loss = [&](const VehicleMesh& x) {
    const TriMesh a = assemble(x);
    double s = 0;
    for (std::size_t i = 0; i < a.vertex_count(); ++i) s += g[i].dot(a.vertices[i]);
    return s;
  };
  const AssembleGrad ag = assemble_backward(vm, g);
  const double h = 1e-6;
  auto fd = [&](auto mutate) {
    VehicleMesh p = vm, q = vm;
    mutate(p, h);
    mutate(q, -h);
    return (loss(p) - loss(q)) / (2 * h);
  };
  EXPECT_NEAR(ag.params.radius, fd([](VehicleMesh& x, double d) { x.params.radius += d; }), 1e-6);
  EXPECT_NEAR(ag.params.thickness, fd([](VehicleMesh& x, double d) { x.params.thickness += d; }), 1e-6);
  EXPECT_NEAR(ag.params.steer, fd([](VehicleMesh& x, double d) { x.params.steer += d; }), 1e-6);
  for (int a = 0; a < 3; ++a) {
    EXPECT_NEAR(ag.params.front_offset[a], fd([a](VehicleMesh& x, double d) { x.params.front_offset[a] += d; }), 1e-6);
    EXPECT_NEAR(ag.params.back_offset[a], fd([a](VehicleMesh& x, double d) { x.params.back_offset[a] += d; }), 1e-6);
  }
  for (std::size_t i : {std::size_t{0}, std::size_t{5}, std::size_t{17}}) {
    for (int a = 0; a < 3; ++a) {
      EXPECT_NEAR(ag.wheel_template[i][a],
                  fd([i, a](VehicleMesh& x, double d) { x.wheel_template.vertices[i][a] += d; }), 1e-6);
    }
    EXPECT_EQ(ag.body[i], g[i]);
  }
}

// ---------------------------------------------------------------------------
// Shape space

struct Exemplars {
  std::vector<TriMesh> meshes;
  std::vector<std::uint8_t> labels;
  WheelRig rig;
};

Exemplars synthetic(int count, std::uint64_t seed) {
  const ExemplarSet s = make_synthetic_exemplars(count, seed, 3, 8);
  return {s.meshes, s.labels, s.rig};
}

Eigen::VectorXd flatten(const std::vector<Vec3>& v) {
  Eigen::VectorXd x(3 * v.size());
  for (std::size_t i = 0; i < v.size(); ++i) x.segment<3>(3 * i) = v[i];
  return x;
}

TEST(ShapeSpace, TwoExemplarsOneComponentReconstructExactly) {
  const Exemplars e = synthetic(2, 1);
  const ShapeSpace s = build_shape_space(e.meshes, e.labels, e.rig, 1);
  ASSERT_EQ(s.k(), 1);
  for (int i = 0; i < 2; ++i) {
    const Eigen::VectorXd x = flatten(e.meshes[i].vertices);
    const Eigen::VectorXd r = flatten(s.decode_vertices(s.codes.col(i)));
    EXPECT_LT((x - r).norm() / x.norm(), 1e-12);
  }
}

TEST(ShapeSpace, SingleDirectionRecovered) {
  const Exemplars e = synthetic(1, 2);
  const TriMesh base = e.meshes[0];
  CounterRng rng(9);
  std::vector<Vec3> d(base.vertex_count());
  for (auto& v : d) v = testing::random_vec(rng, 0.05);
  TriMesh a = base, b = base;
  for (std::size_t i = 0; i < d.size(); ++i) {
    a.vertices[i] += d[i];
    b.vertices[i] -= d[i];
  }
  const ShapeSpace s = build_shape_space({a, b}, e.labels, e.rig, 2);
  const Eigen::VectorXd dn = flatten(d).normalized();
  EXPECT_NEAR(std::abs(s.basis.col(0).dot(dn)), 1.0, 1e-12);
  EXPECT_LT((flatten(base.vertices) - s.mean).norm(), 1e-12);
}

// Dense SVD of the centered exemplar matrix is the oracle: the optimal rank-k
// reconstruction projects each centered exemplar on the top-k left singular vectors.
TEST(ShapeSpace, MatchesDenseSvdOracle) {
  const int n = 10;
  const Exemplars e = synthetic(n, 11);
  const Eigen::Index dim = static_cast<Eigen::Index>(3 * e.meshes[0].vertex_count());
  Eigen::MatrixXd x(dim, n);
  for (int i = 0; i < n; ++i) x.col(i) = flatten(e.meshes[i].vertices);
  const Eigen::VectorXd mu = x.rowwise().mean();
  const Eigen::MatrixXd c = x.colwise() - mu;
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(c, Eigen::ComputeThinU);

  const ShapeSpace full = build_shape_space(e.meshes, e.labels, e.rig, n);
  EXPECT_LT((full.basis.transpose() * full.basis - Eigen::MatrixXd::Identity(full.k(), full.k())).norm(), 1e-8);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd r = flatten(full.decode_vertices(full.encode(e.meshes[i].vertices)));
    EXPECT_LT((r - x.col(i)).norm() / x.col(i).norm(), 1e-9);
  }
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= n; ++k) {
    const ShapeSpace s = build_shape_space(e.meshes, e.labels, e.rig, k);
    const Eigen::MatrixXd u = svd.matrixU().leftCols(k);
    double total = 0;
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd oracle = mu + u * (u.transpose() * c.col(i));
      const Eigen::VectorXd r = flatten(s.decode_vertices(s.codes.col(i)));
      const double err = (r - x.col(i)).norm();
      const double oracle_err = (oracle - x.col(i)).norm();
      EXPECT_NEAR(err, oracle_err, 1e-9 * x.col(i).norm()) << "k=" << k << " exemplar " << i;
      total += err * err;
    }
    EXPECT_LE(total, prev * (1 + 1e-12) + 1e-24);
    prev = total;
    EXPECT_NEAR(s.singular_values[0], svd.singularValues()[0], 1e-9 * svd.singularValues()[0]);
  }
}

TEST(ShapeSpace, TopologyMismatchNamesExemplar) {
  Exemplars e = synthetic(3, 4);
  std::swap(e.meshes[2].faces[0][0], e.meshes[2].faces[0][1]);
  try {
    build_shape_space(e.meshes, e.labels, e.rig, 2);
    FAIL();
  } catch (const MeshError& err) {
    EXPECT_NE(std::string(err.what()).find("2"), std::string::npos) << err.what();
  }
}

TEST(Decode, ZeroIsMeanAndLinearity) {
  const Exemplars e = synthetic(6, 5);
  const ShapeSpace s = build_shape_space(e.meshes, e.labels, e.rig, 6);
  EXPECT_EQ(flatten(s.decode_vertices(Eigen::VectorXd())), s.mean);
  const Eigen::VectorXd z = s.encode(e.meshes[3].vertices);
  const Eigen::VectorXd twice = flatten(s.decode_vertices(2 * z));
  const Eigen::VectorXd expect = 2 * flatten(e.meshes[3].vertices) - s.mean;
  EXPECT_LT((twice - expect).norm() / expect.norm(), 1e-9);
}

TEST(Decode, PartitionsByLabels) {
  const Exemplars e = synthetic(4, 6);
  const ShapeSpace s = build_shape_space(e.meshes, e.labels, e.rig, 4);
  const VehicleMesh vm = decode(s, s.codes.col(1));
  std::size_t wheels = 0;
  for (auto l : e.labels) wheels += l == kWheelPart;
  EXPECT_EQ(vm.wheel_template.vertex_count(), wheels);
  EXPECT_EQ(vm.body.vertex_count(), e.labels.size() - wheels);
  EXPECT_EQ(vm.wheel_count(), static_cast<int>(e.rig.poses.size()));
  const TriMesh merged = s.decode_mesh(s.codes.col(1));
  EXPECT_EQ(to_part_mesh(vm).mesh.vertices.size(), merged.vertices.size());
}

TEST(ShapeSpace, ArchiveRoundTrip) {
  const ShapeSpace s = testing::small_space();
  const auto dir = testing::scratch_dir("space");
  save_shape_space(dir / "s.css", s);
  const ShapeSpace r = load_shape_space(dir / "s.css");
  EXPECT_EQ(r.mean, s.mean);
  EXPECT_EQ(r.basis, s.basis);
  EXPECT_EQ(r.codes, s.codes);
  EXPECT_EQ(r.faces, s.faces);
  EXPECT_EQ(r.part_labels, s.part_labels);
  EXPECT_EQ(r.symmetry_axis, s.symmetry_axis);
  EXPECT_EQ(r.rig.poses.size(), s.rig.poses.size());
}

TEST(Exemplars, DirectoryRoundTrip) {
  const ExemplarSet s = make_synthetic_exemplars(3, 8, 3, 8);
  const auto dir = testing::scratch_dir("exemplars");
  write_exemplars(dir, s);
  const ExemplarSet r = read_exemplars(dir);
  ASSERT_EQ(r.meshes.size(), 3u);
  EXPECT_EQ(r.labels, s.labels);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(r.meshes[i].vertices, s.meshes[i].vertices);
    EXPECT_EQ(r.meshes[i].faces, s.meshes[i].faces);
  }
  EXPECT_THROW(read_exemplars(dir / "missing"), IoError);
}

// ---------------------------------------------------------------------------
// Alignment

TEST(Align, AlreadyAlignedFixedPoint) {
  const TriMesh s = make_icosphere(2);
  AlignmentConfig cfg;
  const AlignmentResult r = align_template(s, s.vertices, cfg);
  EXPECT_EQ(r.mesh.faces, s.faces);
  for (std::size_t i = 0; i < s.vertex_count(); ++i) EXPECT_LT((r.mesh.vertices[i] - s.vertices[i]).norm(), 1e-6);
}

TEST(Align, SphereGrowsToTarget) {
  const TriMesh s = make_icosphere(2);
  const TriMesh big = make_icosphere(4, 1.5);
  AlignmentConfig cfg;
  cfg.iterations = 500;
  const AlignmentResult r = align_template(s, big.vertices, cfg);
  double mean_r = 0;
  for (const auto& v : r.mesh.vertices) mean_r += v.norm();
  mean_r /= static_cast<double>(r.mesh.vertex_count());
  EXPECT_NEAR(mean_r, 1.5, 0.02);
  EXPECT_EQ(r.mesh.faces, s.faces);
  for (std::size_t i = 1; i < r.energy_trace.size(); ++i) EXPECT_LE(r.energy_trace[i], r.energy_trace[i - 1]);
}

TEST(Align, HugeRegularizerKeepsSource) {
  const TriMesh s = make_icosphere(2);
  const TriMesh big = make_icosphere(3, 1.5);
  AlignmentConfig cfg;
  cfg.lambda_shape = 1e8;
  const AlignmentResult r = align_template(s, big.vertices, cfg);
  for (std::size_t i = 0; i < s.vertex_count(); ++i) EXPECT_LT((r.mesh.vertices[i] - s.vertices[i]).norm(), 1e-3);
}

TEST(Align, RejectsTinyTarget) {
  EXPECT_THROW(align_template(make_icosphere(1), {Vec3::Zero()}, AlignmentConfig{}), ArgumentError);
}

// ---------------------------------------------------------------------------
// Texture transfer

FittedAsset asset_from(const ShapeSpace& s, int i, double shade) {
  FittedAsset a;
  a.vehicle = decode(s, s.codes.col(i));
  a.appearance.kd = Texture(4, 4, Vec3::Constant(shade));
  a.appearance.orm = Texture(4, 4, Vec3(0, 0.5, 0));
  a.appearance.env = make_uniform_env(8, Vec3::Ones());
  a.provenance.scene_id = "t";
  return a;
}

TEST(TransferTexture, SelfAndInvolution) {
  const ShapeSpace s = testing::small_space();
  const FittedAsset a = asset_from(s, 0, 0.2), b = asset_from(s, 1, 0.7);
  const FittedAsset self = transfer_texture(a, a);
  EXPECT_EQ(self.appearance.kd.texels, a.appearance.kd.texels);
  EXPECT_EQ(assemble(self.vehicle).vertices, assemble(a.vehicle).vertices);
  const FittedAsset ab = transfer_texture(a, b), ba = transfer_texture(b, a);
  EXPECT_EQ(ab.appearance.kd.texels, a.appearance.kd.texels);
  EXPECT_EQ(ba.appearance.kd.texels, b.appearance.kd.texels);
  EXPECT_EQ(transfer_texture(ba, ab).appearance.kd.texels, b.appearance.kd.texels);
  EXPECT_EQ(assemble(ab.vehicle).vertices, assemble(b.vehicle).vertices);
}

TEST(TransferTexture, ScaledWheelsKeepUvAssignment) {
  const ShapeSpace s = testing::small_space();
  FittedAsset a = asset_from(s, 0, 0.3), b = asset_from(s, 2, 0.3);
  CounterRng rng(1);
  for (double& t : a.appearance.kd.texels) t = rng.uniform();
  b.vehicle.params.radius *= 1.2;
  b.vehicle.params.thickness *= 1.2;
  const FittedAsset out = transfer_texture(a, b);
  const TriMesh ma = assemble(a.vehicle), mb = assemble(out.vehicle);
  EXPECT_EQ(ma.uv, mb.uv);
  for (std::size_t i = 0; i < ma.vertex_count(); ++i) {
    EXPECT_EQ(sample_bilinear(a.appearance.kd, ma.uv[i]), sample_bilinear(out.appearance.kd, mb.uv[i]));
  }
}

TEST(TransferTexture, TopologyMismatchThrows) {
  const ShapeSpace s = testing::small_space();
  const ShapeSpace other = testing::small_space(6, 4, 8);
  EXPECT_THROW(transfer_texture(asset_from(s, 0, 0.1), asset_from(other, 0, 0.1)), MeshError);
}

}  // namespace
}  // namespace cadtwin
