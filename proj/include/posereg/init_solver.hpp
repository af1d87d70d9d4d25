#pragma once

#include "posereg/geometry.hpp"
#include "posereg/observations.hpp"

#include <array>
#include <vector>

namespace posereg {

using Vector12 = Eigen::Matrix<double, 12, 1>;

/// Stacked linear constraints A x = 0 on x = (r1, r2, r3, t), where r_i is the
/// i-th row of R. Rows: 3 per keypoint, then 3 per edge (times alpha_e), then
/// 1 per symmetry correspondence (times alpha_s).
struct ConstraintMatrix {
  Eigen::MatrixXd a;
  double alpha_e = 1.0;
  double alpha_s = 1.0;
  std::size_t keypoint_rows = 0;
  std::size_t edge_rows = 0;
  std::size_t symmetry_rows = 0;
};

/// Right singular vectors for the four smallest singular values, ascending.
struct NullBasis {
  std::array<Vector12, 4> v;
  Eigen::Vector4d singular_values = Eigen::Vector4d::Zero();
  /// Every singular value of A, descending; kept for diagnostics.
  Eigen::VectorXd spectrum;

  /// Rotation-part of v[i] reshaped row-major.
  Matrix3 rotation_part(std::size_t i) const;
};

struct GammaCoeffs {
  Eigen::Vector4d gamma = Eigen::Vector4d(1.0, 0.0, 0.0, 0.0);
};

struct GammaSeed {
  GammaCoeffs coeffs;
  /// (gamma1^2, gamma1 gamma2, gamma1 gamma3, gamma2^2, gamma2 gamma3, gamma3^2)
  /// as returned by the least-squares solve.
  Eigen::Matrix<double, 6, 1> y = Eigen::Matrix<double, 6, 1>::Zero();
  /// |gamma2^2 - y4| + |gamma2 gamma3 - y5| + |gamma3^2 - y6|.
  double consistency = 0.0;
  bool used_fallback = false;
};

struct AlternatingResult {
  Rotation rotation;
  GammaCoeffs gamma;
  int iterations = 0;
  /// ||sum gamma_i R_i - R||_F after each gamma update.
  std::vector<double> objective_trace;
};

struct InitReport {
  Pose pose;
  NullBasis basis;
  GammaSeed seed;
  AlternatingResult fit;
  bool flipped_for_cheirality = false;
  /// Both signs of the seed landed behind the camera; the fit was restarted
  /// from the basis axes.
  bool used_axis_seeds = false;
  /// sigma_min / sigma_max over the trailing four; near 1 flags a degenerate
  /// (e.g. planar) configuration.
  double trailing_gap = 0.0;
};

ConstraintMatrix build_constraint_matrix(const ObjectModel& model, const Scene& scene,
                                         double alpha_e, double alpha_s);

/// Throws DegenerateSystem for fewer than 12 rows or rank below 8.
NullBasis null_basis(const ConstraintMatrix& a);

/// Seeds gamma by asking sum_{i<=3} gamma_i R_i to be orthogonal.
GammaSeed init_gammas(const NullBasis& basis);

/// Alternates projection onto SO(3) with a least-squares update of gamma.
AlternatingResult alternating_fit(const NullBasis& basis, const GammaCoeffs& gamma0,
                                  int max_iters = 100, double tol = 1e-12);

/// t = -(A2^T A2)^{-1} A2^T A1 r. Throws RankDeficientTranslation when A2 is
/// rank deficient (sigma_min < 1e-10 sigma_max).
Vector3 recover_translation(const ConstraintMatrix& a, const Rotation& rotation);

Pose initialize_pose(const ObjectModel& model, const Scene& scene, double alpha_e, double alpha_s);
InitReport initialize_pose_detailed(const ObjectModel& model, const Scene& scene, double alpha_e,
                                    double alpha_s);

/// x = (r1, r2, r3, t) for a pose, matching the column layout of A.
Vector12 pose_to_affine_vector(const Pose& pose);

}  // namespace posereg
