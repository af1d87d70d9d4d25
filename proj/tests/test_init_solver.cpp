#include "support.hpp"

#include "posereg/errors.hpp"
#include "posereg/init_solver.hpp"
#include "posereg/stability_lab.hpp"

#include <doctest.h>

#include <Eigen/QR>
#include <Eigen/SVD>

#include <random>

using namespace posereg;
using namespace posereg::testing;

namespace {

// Largest principal angle between two column spans, through the SVD of Q1^T Q2.
double subspace_angle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::MatrixXd qa = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ() *
                             Eigen::MatrixXd::Identity(a.rows(), a.cols());
  const Eigen::MatrixXd qb = Eigen::HouseholderQR<Eigen::MatrixXd>(b).householderQ() *
                             Eigen::MatrixXd::Identity(b.rows(), b.cols());
  const double smin = Eigen::JacobiSVD<Eigen::MatrixXd>(qa.transpose() * qb).singularValues().minCoeff();
  return std::acos(std::min(1.0, smin));
}

Eigen::MatrixXd basis_matrix(const NullBasis& b) {
  Eigen::MatrixXd m(12, 4);
  for (int i = 0; i < 4; ++i) m.col(i) = b.v[static_cast<std::size_t>(i)];
  return m;
}

// Orthonormal 12x4 basis whose first column is (vec(R), 0) normalized.
NullBasis basis_with_rotation(const Matrix3& r, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(12, 4);
  m.setZero();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(3 * i + j, 0) = r(i, j);
  for (int c = 1; c < 4; ++c)
    for (int i = 0; i < 12; ++i) m(i, c) = n(rng);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ() *
                            Eigen::MatrixXd::Identity(12, 4);
  NullBasis b;
  for (int c = 0; c < 4; ++c) b.v[static_cast<std::size_t>(c)] = q.col(c) * (c == 0 && q(0, 0) * r(0, 0) < 0 ? -1.0 : 1.0);
  return b;
}

}  // namespace

TEST_SUITE("init_solver") {

TEST_CASE("constraint matrix shape") {
  GenConfig gen;
  gen.n_sym_corrs = 50;
  const Fixture f = make_fixture(1, gen);
  const ConstraintMatrix a = build_constraint_matrix(f.model, f.scene, 1.0, 1.0);
  CHECK(a.a.rows() == 158);
  CHECK(a.a.cols() == 12);
  CHECK(a.keypoint_rows == 24);
  CHECK(a.edge_rows == 84);
  CHECK(a.symmetry_rows == 50);
}

TEST_CASE("noiseless x* lies in the null space") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Fixture f = make_fixture(seed);
    const ConstraintMatrix a = build_constraint_matrix(f.model, f.scene, 1.3, 0.7);
    CHECK((a.a * pose_to_affine_vector(f.gt)).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("constraint rows equal the cross residuals") {
  const Fixture f = make_fixture(2, noisy_config(0.01));
  const Pose p = make_pose(Vector3(0.1, 0.2, 0.3), Vector3(0.0, 0.1, 2.0));
  const ConstraintMatrix a = build_constraint_matrix(f.model, f.scene, 1.0, 1.0);
  const Eigen::VectorXd ax = a.a * pose_to_affine_vector(p);
  const CrossResiduals r = cross_residuals(p, f.model, f.scene);
  Eigen::Index i = 0;
  for (const auto& k : r.keypoint) { CHECK((ax.segment<3>(i) - k).norm() < 1e-13); i += 3; }
  for (const auto& e : r.edge) { CHECK((ax.segment<3>(i) - e).norm() < 1e-13); i += 3; }
  for (double s : r.symmetry) CHECK(std::abs(ax(i++) - s) < 1e-13);
}

TEST_CASE("alpha scaling") {
  const Fixture f = make_fixture(3, noisy_config(0.01));
  const ConstraintMatrix a0 = build_constraint_matrix(f.model, f.scene, 0.0, 1.0);
  CHECK(a0.a.middleRows(24, 84).cwiseAbs().maxCoeff() == 0.0);
  const ConstraintMatrix a1 = build_constraint_matrix(f.model, f.scene, 1.0, 1.0);
  const ConstraintMatrix a2 = build_constraint_matrix(f.model, f.scene, 2.5, 0.5);
  CHECK((a2.a.middleRows(24, 84) - 2.5 * a1.a.middleRows(24, 84)).norm() < 1e-13);
  CHECK((a2.a.bottomRows(50) - 0.5 * a1.a.bottomRows(50)).norm() < 1e-13);
  CHECK((a2.a.topRows(24) - a1.a.topRows(24)).norm() == 0.0);
  CHECK_THROWS_AS(build_constraint_matrix(f.model, f.scene, -1.0, 1.0), InvalidConfig);
}

TEST_CASE("null basis of a noiseless scene") {
  const Fixture f = make_fixture(4);
  const NullBasis b = null_basis(build_constraint_matrix(f.model, f.scene, 1.0, 1.0));
  CHECK(b.spectrum(11) <= 1e-8 * b.spectrum(0));
  const Vector12 x = pose_to_affine_vector(f.gt).normalized();
  CHECK(std::abs(std::abs(b.v[0].dot(x)) - 1.0) < 1e-10);
  CHECK(b.singular_values(0) <= b.singular_values(1));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(std::abs(b.v[i].dot(b.v[j]) - (i == j ? 1.0 : 0.0)) < 1e-10);
}

TEST_CASE("orthonormal rows give an orthonormal trailing basis") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(12, 12);
  for (int i = 0; i < 144; ++i) m(i) = n(rng);
  ConstraintMatrix cm;
  cm.a = Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ();
  const NullBasis b = null_basis(cm);
  const Eigen::MatrixXd q = basis_matrix(b);
  CHECK((q.transpose() * q - Eigen::Matrix4d::Identity()).norm() < 1e-10);
}

TEST_CASE("duplicated rows keep the null span") {
  const Fixture f = make_fixture(6, noisy_config(0.002));
  ConstraintMatrix a = build_constraint_matrix(f.model, f.scene, 1.0, 1.0);
  const NullBasis b1 = null_basis(a);
  ConstraintMatrix dup = a;
  dup.a.resize(2 * a.a.rows(), 12);
  dup.a << a.a, a.a;
  const NullBasis b2 = null_basis(dup);
  CHECK(subspace_angle(basis_matrix(b1), basis_matrix(b2)) <= 1e-8);
}

TEST_CASE("too few rows or low rank is degenerate") {
  ConstraintMatrix small;
  small.a = Eigen::MatrixXd::Ones(9, 12);
  CHECK_THROWS_AS(null_basis(small), DegenerateSystem);
  ConstraintMatrix flat;
  flat.a = Eigen::MatrixXd::Ones(20, 12);
  CHECK_THROWS_AS(null_basis(flat), DegenerateSystem);
}

TEST_CASE("init_gammas recovers a rotation already in the basis") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix3 r = random_rotation(rng).matrix();
    const NullBasis b = basis_with_rotation(r, rng);
    const GammaSeed s = init_gammas(b);
    CHECK_FALSE(s.used_fallback);
    const Eigen::Vector4d g = s.coeffs.gamma;
    CHECK(std::abs(g(1)) < 1e-8 * std::abs(g(0)));
    CHECK(std::abs(g(2)) < 1e-8 * std::abs(g(0)));
    CHECK(g(3) == 0.0);
    Matrix3 m = Matrix3::Zero();
    for (int i = 0; i < 3; ++i) m += g(i) * b.rotation_part(static_cast<std::size_t>(i));
    CHECK((m.transpose() * m - Matrix3::Identity()).norm() < 1e-8);
    CHECK(m.determinant() > 0.0);
    CHECK(s.consistency < 1e-8);
  }
}

TEST_CASE("alternating fit is monotone and fixes an exact rotation") {
  std::mt19937_64 rng(8);
  const Matrix3 r = random_rotation(rng).matrix();
  const NullBasis b = basis_with_rotation(r, rng);
  GammaCoeffs g0;
  g0.gamma = Eigen::Vector4d(std::sqrt(3.0), 0, 0, 0);
  const AlternatingResult one = alternating_fit(b, g0);
  CHECK(one.iterations <= 2);
  CHECK(one.objective_trace.front() < 1e-10);
  CHECK((one.rotation.matrix() - r).norm() < 1e-10);

  GammaCoeffs rough;
  rough.gamma = Eigen::Vector4d(1.5, 0.3, -0.2, 0.4);
  const AlternatingResult fit = alternating_fit(b, rough);
  for (std::size_t i = 1; i < fit.objective_trace.size(); ++i)
    CHECK(fit.objective_trace[i] <= fit.objective_trace[i - 1] + 1e-12);
  CHECK(fit.objective_trace.back() < 1e-10);
  CHECK(fit.rotation.orthogonality_error() < 1e-12);

  // Monotone on noisy scenes too.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Fixture f = make_fixture(seed + 50, noisy_config(0.01));
    const InitReport rep = initialize_pose_detailed(f.model, f.scene, 1.0, 1.0);
    for (std::size_t i = 1; i < rep.fit.objective_trace.size(); ++i)
      CHECK(rep.fit.objective_trace[i] <= rep.fit.objective_trace[i - 1] + 1e-12);
  }
}

TEST_CASE("recover_translation solves the normal equations") {
  ConstraintMatrix cm;
  cm.a.setZero(6, 12);
  cm.a.block<3, 3>(0, 9) = Matrix3::Identity();
  cm.a.block<3, 3>(3, 9) = Matrix3::Identity();
  // A1 r = b1 for the identity rotation uses columns 0, 4 and 8.
  cm.a(0, 0) = 1.0;
  cm.a(1, 4) = 2.0;
  cm.a(3, 0) = 3.0;
  cm.a(5, 8) = -4.0;
  const Vector3 t = recover_translation(cm, Rotation{});
  CHECK((t - Vector3(-2.0, -1.0, 2.0)).norm() < 1e-12);
}

TEST_CASE("all observations at one image point leave translation rank deficient") {
  const ObjectModel m = make_procedural_model(9);
  Scene s;
  for (std::size_t k = 0; k < m.num_keypoints(); ++k) s.keypoints.push_back({static_cast<int>(k), Vector2(0.1, 0.2)});
  for (std::size_t e = 0; e < m.num_edges(); ++e) s.edges.push_back({static_cast<int>(e), Vector2::Zero()});
  const ConstraintMatrix cm = build_constraint_matrix(m, s, 1.0, 1.0);
  CHECK_THROWS_AS(recover_translation(cm, Rotation{}), RankDeficientTranslation);
}

TEST_CASE("noiseless recovery on random scenes") {
  int good = 0;
  const int n = 100;
  for (int i = 0; i < n; ++i) {
    const Fixture f = make_fixture(1000 + i);
    const Pose p = initialize_pose(f.model, f.scene, 1.0, 1.0);
    const PoseErrors e = pose_errors(f.gt, p, 1.0);
    if (e.rotation < 1e-5 && e.translation < 1e-6) ++good;
  }
  CHECK(good >= 99);
}

TEST_CASE("moderate noise keeps the median rotation error small") {
  std::vector<double> errs;
  for (int i = 0; i < 100; ++i) {
    const Fixture f = make_fixture(2000 + i, noisy_config(0.002));
    const Pose p = initialize_pose(f.model, f.scene, 1.0, 1.0);
    const double e = pose_errors(f.gt, p, f.model.diameter).rotation;
    CHECK(std::isfinite(e));
    errs.push_back(e);
  }
  CHECK(median(errs) < 5.0 * M_PI / 180.0);
}

TEST_CASE("tiny alpha_s reproduces the no-symmetry construction") {
  for (int i = 0; i < 10; ++i) {
    const Fixture f = make_fixture(3000 + i, noisy_config(0.002));
    const Pose a = initialize_pose(f.model, f.scene, 1.0, 1e-9);
    const Pose b = initialize_pose(f.model, f.scene, 1.0, 0.0);
    CHECK((a.rotation.matrix() - b.rotation.matrix()).norm() < 1e-6);
    CHECK((a.translation - b.translation).norm() < 1e-6);
  }
}

TEST_CASE("common row scaling leaves the pose unchanged") {
  const Fixture f = make_fixture(4000, noisy_config(0.003));
  const ConstraintMatrix a = build_constraint_matrix(f.model, f.scene, 1.0, 1.0);
  ConstraintMatrix scaled = a;
  scaled.a *= 7.5;
  const NullBasis b1 = null_basis(a), b2 = null_basis(scaled);
  const AlternatingResult f1 = alternating_fit(b1, init_gammas(b1).coeffs);
  const AlternatingResult f2 = alternating_fit(b2, init_gammas(b2).coeffs);
  CHECK((f1.rotation.matrix() - f2.rotation.matrix()).norm() < 1e-10);
  CHECK((recover_translation(a, f1.rotation) - recover_translation(scaled, f2.rotation)).norm() < 1e-10);
}

TEST_CASE("initialization is bit-identical across calls") {
  const Fixture f = make_fixture(5000, noisy_config(0.004));
  const Pose a = initialize_pose(f.model, f.scene, 1.2, 0.8);
  const Pose b = initialize_pose(f.model, f.scene, 1.2, 0.8);
  CHECK(a.rotation.matrix() == b.rotation.matrix());
  CHECK(a.translation == b.translation);
}

TEST_CASE("planar square model still solves") {
  const SquareScene sq = square_scene(0.5);
  const InitReport rep = initialize_pose_detailed(sq.model, sq.scene, 1.0, 1.0);
  CHECK(pose_errors(sq.gt_pose, rep.pose, 1.0).rotation < 1e-6);
  CHECK((rep.pose.translation - sq.gt_pose.translation).norm() < 1e-6);
  CHECK(rep.trailing_gap >= 0.0);
}

TEST_CASE("axis restarts recover a seed that lands behind the camera") {
  GenConfig g = noisy_config(0.002);
  g.noise.sigma_s = 0.02;
  const Fixture f = make_fixture(3362, g);
  const InitReport rep = initialize_pose_detailed(f.model, f.scene, 1.0, 1.0);
  CHECK(rep.flipped_for_cheirality);
  CHECK(rep.used_axis_seeds);
  CHECK(pose_errors(f.gt, rep.pose, 1.0).rotation < 0.05);
  for (const auto& p : f.model.keypoints) CHECK(rep.pose.transform(p).z() > 0.0);
}

}  // TEST_SUITE
