#include "posereg/init_solver.hpp"

#include "posereg/errors.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <string>

namespace posereg {

namespace {

using Matrix3x12 = Eigen::Matrix<double, 3, 12>;

// Linear map x -> R p (first nine columns) for the row-major layout of x.
Eigen::Matrix<double, 3, 9> rotate_point_map(const Vector3& p) {
  Eigen::Matrix<double, 3, 9> m = Eigen::Matrix<double, 3, 9>::Zero();
  for (int i = 0; i < 3; ++i) m.block<1, 3>(i, 3 * i) = p.transpose();
  return m;
}

// Linear map x -> R p + t.
Matrix3x12 transform_point_map(const Vector3& p) {
  Matrix3x12 m = Matrix3x12::Zero();
  m.leftCols<9>() = rotate_point_map(p);
  m.rightCols<3>() = Matrix3::Identity();
  return m;
}

Eigen::Matrix<double, 9, 1> row_major(const Matrix3& m) {
  Eigen::Matrix<double, 9, 1> v;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) v(3 * i + j) = m(i, j);
  return v;
}

Matrix3 combine(const NullBasis& basis, const Eigen::Vector4d& gamma, int count = 4) {
  Matrix3 m = Matrix3::Zero();
  for (int i = 0; i < count; ++i) m += gamma(i) * basis.rotation_part(static_cast<std::size_t>(i));
  return m;
}

double mean_depth(const ObjectModel& model, const Pose& pose) {
  double sum = 0.0;
  for (const auto& p : model.keypoints) sum += pose.transform(p).z();
  return sum / static_cast<double>(model.num_keypoints());
}

}  // namespace

Matrix3 NullBasis::rotation_part(std::size_t i) const {
  Matrix3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = v[i](3 * r + c);
  return m;
}

Vector12 pose_to_affine_vector(const Pose& pose) {
  Vector12 x;
  x.head<9>() = row_major(pose.rotation.matrix());
  x.tail<3>() = pose.translation;
  return x;
}

ConstraintMatrix build_constraint_matrix(const ObjectModel& model, const Scene& scene,
                                         double alpha_e, double alpha_s) {
  check_scene_matches(scene, model);
  if (!(alpha_e >= 0.0) || !(alpha_s >= 0.0))
    throw InvalidConfig("alpha_e and alpha_s must be non-negative");

  ConstraintMatrix out;
  out.alpha_e = alpha_e;
  out.alpha_s = alpha_s;
  out.keypoint_rows = 3 * scene.num_keypoints();
  out.edge_rows = 3 * scene.num_edges();
  out.symmetry_rows = scene.num_sym_corrs();
  out.a.setZero(static_cast<Eigen::Index>(out.keypoint_rows + out.edge_rows + out.symmetry_rows), 12);

  Eigen::Index row = 0;
  for (std::size_t k = 0; k < scene.num_keypoints(); ++k, row += 3) {
    const Vector3 p_hat = homogeneous_point(scene.keypoints[k].image_point);
    out.a.block<3, 12>(row, 0) = skew(p_hat) * transform_point_map(model.keypoints[k]);
  }
  for (std::size_t e = 0; e < scene.num_edges(); ++e, row += 3) {
    const auto [src, dst] = model.edges[e];
    const Vector3 v_hat = homogeneous_vector(scene.edges[e].vector);
    const Vector3 p_src = homogeneous_point(scene.keypoints[src].image_point);
    Matrix3x12 block = skew(v_hat) * transform_point_map(model.keypoints[dst]);
    block.leftCols<9>() += skew(p_src) * rotate_point_map(model.edge_vector(e));
    out.a.block<3, 12>(row, 0) = alpha_e * block;
  }
  const Eigen::Matrix<double, 3, 9> normal_map = rotate_point_map(model.symmetry.normal);
  for (const auto& s : scene.sym_corrs) {
    const Vector3 w = homogeneous_point(s.q1).cross(homogeneous_point(s.q2));
    out.a.block<1, 9>(row, 0) = alpha_s * w.transpose() * normal_map;
    ++row;
  }
  return out;
}

NullBasis null_basis(const ConstraintMatrix& cm) {
  if (cm.a.rows() < 12)
    throw DegenerateSystem("constraint matrix has " + std::to_string(cm.a.rows()) +
                           " rows; at least 12 are required");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cm.a, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double tol = 1e-12 * sv(0);
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > tol) ++rank;
  if (rank < 8)
    throw DegenerateSystem("constraint matrix rank " + std::to_string(rank) + " is below 8");

  NullBasis basis;
  basis.spectrum = sv;
  for (int i = 0; i < 4; ++i) {
    basis.v[static_cast<std::size_t>(i)] = svd.matrixV().col(11 - i);
    basis.singular_values(i) = sv(11 - i);
  }
  return basis;
}

GammaSeed init_gammas(const NullBasis& basis) {
  // Upper-triangle entries (a, b) of M^T M, with M = sum_{i<=3} gamma_i R_i,
  // are linear in the six products y_ij = gamma_i gamma_j.
  static constexpr int kPairs[6][2] = {{0, 0}, {0, 1}, {0, 2}, {1, 1}, {1, 2}, {2, 2}};
  std::array<Matrix3, 3> r;
  for (std::size_t i = 0; i < 3; ++i) r[i] = basis.rotation_part(i);

  Eigen::Matrix<double, 6, 6> c;
  for (int col = 0; col < 6; ++col) {
    const auto i = static_cast<std::size_t>(kPairs[col][0]);
    const auto j = static_cast<std::size_t>(kPairs[col][1]);
    Matrix3 prod = r[i].transpose() * r[j];
    if (i != j) prod += r[j].transpose() * r[i];
    for (int row = 0; row < 6; ++row) c(row, col) = prod(kPairs[row][0], kPairs[row][1]);
  }
  Eigen::Matrix<double, 6, 1> z;
  z << 1.0, 0.0, 0.0, 1.0, 0.0, 1.0;

  GammaSeed seed;
  seed.y = c.completeOrthogonalDecomposition().solve(z);
  const auto& y = seed.y;
  Eigen::Vector4d g = Eigen::Vector4d::Zero();
  const double g1 = std::sqrt(std::max(y(0), 0.0));
  if (g1 > 1e-8) {
    g << g1, y(1) / g1, y(2) / g1, 0.0;
  } else {
    g << 1.0, 0.0, 0.0, 0.0;
    seed.used_fallback = true;
  }
  seed.consistency = std::abs(g(1) * g(1) - y(3)) + std::abs(g(1) * g(2) - y(4)) +
                     std::abs(g(2) * g(2) - y(5));

  const double det_pos = combine(basis, g, 3).determinant();
  const double det_neg = -det_pos;
  if (det_neg > det_pos) g = -g;
  seed.coeffs.gamma = g;
  return seed;
}

AlternatingResult alternating_fit(const NullBasis& basis, const GammaCoeffs& gamma0, int max_iters,
                                  double tol) {
  Eigen::Matrix<double, 9, 4> design;
  for (int i = 0; i < 4; ++i) design.col(i) = basis.v[static_cast<std::size_t>(i)].head<9>();
  const auto qr = design.colPivHouseholderQr();

  AlternatingResult out;
  Eigen::Vector4d gamma = gamma0.gamma;
  for (int it = 0; it < max_iters; ++it) {
    const Rotation rot = Rotation::nearest(combine(basis, gamma));
    const Eigen::Vector4d next = qr.solve(row_major(rot.matrix()));
    out.objective_trace.push_back((combine(basis, next) - rot.matrix()).norm());
    const double change = (next - gamma).norm();
    gamma = next;
    out.iterations = it + 1;
    if (change < tol) break;
  }
  out.gamma.gamma = gamma;
  out.rotation = Rotation::nearest(combine(basis, gamma));
  return out;
}

Vector3 recover_translation(const ConstraintMatrix& cm, const Rotation& rotation) {
  const Eigen::MatrixXd a2 = cm.a.rightCols<3>();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a2, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (!(sv(2) >= 1e-10 * sv(0)))
    throw RankDeficientTranslation("translation columns of the constraint matrix are rank deficient");
  const Eigen::VectorXd rhs = cm.a.leftCols<9>() * row_major(rotation.matrix());
  return -svd.solve(rhs);
}

InitReport initialize_pose_detailed(const ObjectModel& model, const Scene& scene, double alpha_e,
                                    double alpha_s) {
  const ConstraintMatrix cm = build_constraint_matrix(model, scene, alpha_e, alpha_s);
  InitReport report;
  report.basis = null_basis(cm);
  const double largest = report.basis.singular_values(3);
  report.trailing_gap = largest > 0.0 ? report.basis.singular_values(0) / largest : 1.0;
  report.seed = init_gammas(report.basis);
  report.fit = alternating_fit(report.basis, report.seed.coeffs);
  report.pose = {report.fit.rotation, recover_translation(cm, report.fit.rotation)};

  if (!(mean_depth(model, report.pose) > 0.0)) {
    GammaCoeffs flipped;
    flipped.gamma = -report.seed.coeffs.gamma;
    report.fit = alternating_fit(report.basis, flipped);
    report.pose = {report.fit.rotation, recover_translation(cm, report.fit.rotation)};
    report.flipped_for_cheirality = true;
  }
  if (!(mean_depth(model, report.pose) > 0.0)) {
    // Noisy seeds occasionally converge to a mirrored pose from either sign.
    // Keep the cheiral axis restart with the smallest algebraic residual.
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 8; ++i) {
      GammaCoeffs axis;
      axis.gamma = Eigen::Vector4d::Zero();
      axis.gamma(i / 2) = i % 2 == 0 ? 1.0 : -1.0;
      const AlternatingResult fit = alternating_fit(report.basis, axis);
      const Pose pose{fit.rotation, recover_translation(cm, fit.rotation)};
      if (!(mean_depth(model, pose) > 0.0)) continue;
      const double res = (cm.a * pose_to_affine_vector(pose)).norm();
      if (res < best) {
        best = res;
        report.fit = fit;
        report.pose = pose;
        report.used_axis_seeds = true;
      }
    }
  }
  return report;
}

Pose initialize_pose(const ObjectModel& model, const Scene& scene, double alpha_e, double alpha_s) {
  return initialize_pose_detailed(model, scene, alpha_e, alpha_s).pose;
}

}  // namespace posereg
