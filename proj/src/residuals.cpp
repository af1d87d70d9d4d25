#include "posereg/residuals.hpp"

#include "posereg/errors.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>

namespace posereg {

namespace {

template <typename Vec>
double max_abs_of(const std::vector<Vec>& v) {
  double m = 0.0;
  for (const auto& x : v) m = std::max(m, x.cwiseAbs().maxCoeff());
  return m;
}

double max_abs_of(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

std::vector<Projection> project_keypoints(const Pose& pose, const ObjectModel& model) {
  std::vector<Projection> out;
  out.reserve(model.num_keypoints());
  for (const auto& p : model.keypoints) out.push_back(project(pose, p));
  return out;
}

// Accumulates one whitened residual block into value / gradient / Hessian.
template <int Rows>
void accumulate_whitened(const Eigen::Matrix<double, Rows, 1>& r,
                         const Eigen::Matrix<double, Rows, 6>& jac,
                         const Eigen::Matrix<double, Rows, Rows>& cov, const RobustParams& beta,
                         double scale, ObjectiveDerivatives& out) {
  using MatR = Eigen::Matrix<double, Rows, Rows>;
  const MatR l = Eigen::LLT<MatR>(cov).matrixL();
  const double s = r.squaredNorm();
  const double denom = beta.beta2 * beta.beta2 + s;
  const double b1 = beta.beta1;
  const Eigen::Matrix<double, Rows, 1> u = b1 * l.transpose() * r / std::sqrt(denom);
  const Eigen::Matrix<double, Rows, 6> du =
      b1 / std::sqrt(denom) * l.transpose() * jac -
      b1 / (denom * std::sqrt(denom)) * (l.transpose() * r) * (r.transpose() * jac);
  out.value += scale * u.squaredNorm();
  out.gradient += 2.0 * scale * du.transpose() * u;
  out.hessian += 2.0 * scale * du.transpose() * du;
}

}  // namespace

double CrossResiduals::max_abs() const {
  return std::max({max_abs_of(keypoint), max_abs_of(edge), max_abs_of(symmetry)});
}

double ProjectionResiduals::max_abs() const {
  return std::max({max_abs_of(keypoint), max_abs_of(edge), max_abs_of(symmetry)});
}

double symmetry_residual(const Rotation& rotation, const Vector3& canonical_normal,
                         const SymCorrObs& corr) {
  const Vector3 w = homogeneous_point(corr.q1).cross(homogeneous_point(corr.q2));
  return w.dot(rotation * canonical_normal);
}

CrossResiduals cross_residuals(const Pose& pose, const ObjectModel& model, const Scene& scene) {
  check_scene_matches(scene, model);
  const Matrix3& r = pose.rotation.matrix();
  const Vector3& t = pose.translation;
  CrossResiduals out;
  out.keypoint.reserve(scene.num_keypoints());
  for (std::size_t k = 0; k < scene.num_keypoints(); ++k) {
    const Vector3 p_hat = homogeneous_point(scene.keypoints[k].image_point);
    out.keypoint.push_back(p_hat.cross(r * model.keypoints[k] + t));
  }
  out.edge.reserve(scene.num_edges());
  for (std::size_t e = 0; e < scene.num_edges(); ++e) {
    const auto [src, dst] = model.edges[e];
    const Vector3 v_hat = homogeneous_vector(scene.edges[e].vector);
    const Vector3 p_src = homogeneous_point(scene.keypoints[src].image_point);
    out.edge.push_back(v_hat.cross(r * model.keypoints[dst] + t) +
                       p_src.cross(r * model.edge_vector(e)));
  }
  out.symmetry.reserve(scene.num_sym_corrs());
  for (const auto& s : scene.sym_corrs)
    out.symmetry.push_back(symmetry_residual(pose.rotation, model.symmetry.normal, s));
  return out;
}

ProjectionResiduals projection_residuals(const Pose& pose, const ObjectModel& model,
                                         const Scene& scene) {
  check_scene_matches(scene, model);
  const auto proj = project_keypoints(pose, model);
  ProjectionResiduals out;
  out.keypoint.reserve(scene.num_keypoints());
  for (std::size_t k = 0; k < scene.num_keypoints(); ++k)
    out.keypoint.push_back(proj[k].point - scene.keypoints[k].image_point);
  out.edge.reserve(scene.num_edges());
  for (std::size_t e = 0; e < scene.num_edges(); ++e) {
    const auto [src, dst] = model.edges[e];
    out.edge.push_back(proj[dst].point - proj[src].point - scene.edges[e].vector);
  }
  out.symmetry.reserve(scene.num_sym_corrs());
  for (const auto& s : scene.sym_corrs)
    out.symmetry.push_back(symmetry_residual(pose.rotation, model.symmetry.normal, s));
  return out;
}

double gm_weight(double x, const RobustParams& params) {
  return params.beta1 * params.beta1 / (params.beta2 * params.beta2 + x * x);
}

GroupScales group_scales(const Scene& scene, const ObjectiveConfig& config) {
  GroupScales g;
  const double nk = static_cast<double>(scene.num_keypoints());
  if (config.use_edges && scene.num_edges() > 0) g.edge = nk / static_cast<double>(scene.num_edges());
  if (config.use_symmetry && scene.num_sym_corrs() > 0)
    g.symmetry = nk / static_cast<double>(scene.num_sym_corrs());
  return g;
}

double robust_objective(const ProjectionResiduals& res, const Scene& scene,
                        const ObjectiveConfig& config) {
  const GroupScales g = group_scales(scene, config);
  const GroupBetas& b = config.betas;
  double key_sum = 0.0;
  for (std::size_t k = 0; k < res.keypoint.size(); ++k) {
    const Vector2& r = res.keypoint[k];
    key_sum += gm_weight(r.norm(), b.keypoint) * r.dot(config.covs.keypoint_at(k) * r);
  }
  double edge_sum = 0.0;
  if (g.edge > 0.0) {
    for (std::size_t e = 0; e < res.edge.size(); ++e) {
      const Vector2& r = res.edge[e];
      edge_sum += gm_weight(r.norm(), b.edge) * r.dot(config.covs.edge_at(e) * r);
    }
  }
  double sym_sum = 0.0;
  if (g.symmetry > 0.0) {
    for (double r : res.symmetry) sym_sum += gm_weight(r, b.symmetry) * r * r;
  }
  return g.keypoint * key_sum + g.edge * edge_sum + g.symmetry * sym_sum;
}

double robust_objective(const Pose& pose, const ObjectModel& model, const Scene& scene,
                        const ObjectiveConfig& config) {
  return robust_objective(projection_residuals(pose, model, scene), scene, config);
}

Matrix26 projection_jacobian(const Vector3& camera_point) {
  const Projection pr = project_camera_point(camera_point);
  const double x = pr.point.x();
  const double y = pr.point.y();
  const double inv_z = 1.0 / pr.depth;
  Matrix26 j;
  j << -x * y, 1.0 + x * x, -y, inv_z, 0.0, -x * inv_z,
       -1.0 - y * y, x * y, x, 0.0, inv_z, -y * inv_z;
  return j;
}

JacobianStack analytic_jacobians(const Pose& pose, const ObjectModel& model, const Scene& scene) {
  check_scene_matches(scene, model);
  std::vector<Matrix26> per_keypoint;
  per_keypoint.reserve(model.num_keypoints());
  for (const auto& p : model.keypoints) per_keypoint.push_back(projection_jacobian(pose.transform(p)));

  JacobianStack out;
  out.keypoint_pose = per_keypoint;
  out.keypoint_noise.assign(scene.num_keypoints(), -Matrix2::Identity());
  out.edge_pose.reserve(scene.num_edges());
  for (std::size_t e = 0; e < scene.num_edges(); ++e) {
    const auto [src, dst] = model.edges[e];
    out.edge_pose.push_back(per_keypoint[dst] - per_keypoint[src]);
  }
  out.edge_noise.assign(scene.num_edges(), -Matrix2::Identity());

  const Vector3 n = pose.rotation * model.symmetry.normal;
  out.symmetry_pose.reserve(scene.num_sym_corrs());
  out.symmetry_noise.reserve(scene.num_sym_corrs());
  for (const auto& s : scene.sym_corrs) {
    const Vector3 q1 = homogeneous_point(s.q1);
    const Vector3 w = q1.cross(homogeneous_point(s.q2));
    RowVector6 jp = RowVector6::Zero();
    jp.head<3>() = n.cross(w).transpose();
    out.symmetry_pose.push_back(jp);
    const Vector3 dq2 = n.cross(q1);
    out.symmetry_noise.push_back(RowVector2(dq2.x(), dq2.y()));
  }
  return out;
}

ObjectiveDerivatives objective_derivatives(const Pose& pose, const ObjectModel& model,
                                           const Scene& scene, const ObjectiveConfig& config) {
  const ProjectionResiduals res = projection_residuals(pose, model, scene);
  const JacobianStack jac = analytic_jacobians(pose, model, scene);
  const GroupScales g = group_scales(scene, config);
  ObjectiveDerivatives out;
  for (std::size_t k = 0; k < res.keypoint.size(); ++k)
    accumulate_whitened<2>(res.keypoint[k], jac.keypoint_pose[k], config.covs.keypoint_at(k),
                           config.betas.keypoint, g.keypoint, out);
  if (g.edge > 0.0) {
    for (std::size_t e = 0; e < res.edge.size(); ++e)
      accumulate_whitened<2>(res.edge[e], jac.edge_pose[e], config.covs.edge_at(e),
                             config.betas.edge, g.edge, out);
  }
  if (g.symmetry > 0.0) {
    for (std::size_t s = 0; s < res.symmetry.size(); ++s)
      accumulate_whitened<1>(Eigen::Matrix<double, 1, 1>(res.symmetry[s]), jac.symmetry_pose[s],
                             Eigen::Matrix<double, 1, 1>::Identity(), config.betas.symmetry,
                             g.symmetry, out);
  }
  return out;
}

}  // namespace posereg
