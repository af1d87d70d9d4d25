#pragma once

#include "posereg/geometry.hpp"
#include "posereg/observations.hpp"

#include <vector>

namespace posereg {

using Matrix26 = Eigen::Matrix<double, 2, 6>;
using RowVector6 = Eigen::Matrix<double, 1, 6>;
using RowVector2 = Eigen::Matrix<double, 1, 2>;

/// Generalized German-McClure parameters: rho(x) = beta1^2 / (beta2^2 + x^2).
struct RobustParams {
  double beta1 = 1.0;
  double beta2 = 0.05;

  bool valid() const { return beta1 > 0.0 && beta2 > 0.0; }
  /// rho(0), the weight every inlier sees at zero residual.
  double peak_weight() const { return beta1 * beta1 / (beta2 * beta2); }
};

struct GroupBetas {
  RobustParams keypoint;
  RobustParams edge;
  RobustParams symmetry;
};

/// Per-element 2x2 matrices used in ||r||^2_S = r^T S r. Empty vectors mean I2.
struct ElementCovariances {
  std::vector<Matrix2> keypoint;
  std::vector<Matrix2> edge;

  Matrix2 keypoint_at(std::size_t k) const { return keypoint.empty() ? Matrix2::Identity() : keypoint[k]; }
  Matrix2 edge_at(std::size_t e) const { return edge.empty() ? Matrix2::Identity() : edge[e]; }
};

/// Everything that shapes the refinement objective. Disabled groups drop out.
struct ObjectiveConfig {
  GroupBetas betas;
  ElementCovariances covs;
  bool use_edges = true;
  bool use_symmetry = true;
};

/// Linear (cross-product) residuals used by the initialization.
struct CrossResiduals {
  std::vector<Vector3> keypoint;
  std::vector<Vector3> edge;
  std::vector<double> symmetry;

  double max_abs() const;
};

/// Reprojection residuals (projection minus observation) used by refinement.
struct ProjectionResiduals {
  std::vector<Vector2> keypoint;
  std::vector<Vector2> edge;
  std::vector<double> symmetry;

  double max_abs() const;
};

/// Partials with respect to the local delta (c, c_bar) and to each element's
/// own observation noise. Symmetry noise perturbs q2.
struct JacobianStack {
  std::vector<Matrix26> keypoint_pose;
  std::vector<Matrix2> keypoint_noise;
  std::vector<Matrix26> edge_pose;
  std::vector<Matrix2> edge_noise;
  std::vector<RowVector6> symmetry_pose;
  std::vector<RowVector2> symmetry_noise;
};

CrossResiduals cross_residuals(const Pose& pose, const ObjectModel& model, const Scene& scene);

/// Throws DepthNonPositive if a keypoint falls behind the camera.
ProjectionResiduals projection_residuals(const Pose& pose, const ObjectModel& model,
                                         const Scene& scene);

/// (q1^ x q2^) . (R n), shared by both residual forms.
double symmetry_residual(const Rotation& rotation, const Vector3& canonical_normal,
                         const SymCorrObs& corr);

double gm_weight(double x, const RobustParams& params);

/// Multipliers |K|/|E| and |K|/|S| in front of the edge and symmetry sums.
/// A group that is empty or disabled gets 0.
struct GroupScales {
  double keypoint = 1.0;
  double edge = 0.0;
  double symmetry = 0.0;
};
GroupScales group_scales(const Scene& scene, const ObjectiveConfig& config);

double robust_objective(const Pose& pose, const ObjectModel& model, const Scene& scene,
                        const ObjectiveConfig& config);
double robust_objective(const ProjectionResiduals& residuals, const Scene& scene,
                        const ObjectiveConfig& config);

/// Closed-form partials at the current pose. Throws DepthNonPositive.
JacobianStack analytic_jacobians(const Pose& pose, const ObjectModel& model, const Scene& scene);

/// 2x6 derivative of the normalized projection of camera point x under
/// x -> exp(c x) x + c_bar, at c = c_bar = 0.
Matrix26 projection_jacobian(const Vector3& camera_point);

/// Value, exact gradient and Gauss-Newton Hessian of the robust objective with
/// respect to the local delta at `pose`. The Hessian is the J^T J of the
/// whitened residuals beta1 L^T r / sqrt(beta2^2 + |r|^2) (S = L L^T), which
/// reduces to 2 sum w (beta1/beta2)^2 J^T S J when every residual vanishes.
struct ObjectiveDerivatives {
  double value = 0.0;
  Vector6 gradient = Vector6::Zero();
  Matrix6 hessian = Matrix6::Zero();
};
ObjectiveDerivatives objective_derivatives(const Pose& pose, const ObjectModel& model,
                                           const Scene& scene, const ObjectiveConfig& config);

}  // namespace posereg
