#include "posereg/refine_solver.hpp"

#include "posereg/errors.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <optional>

namespace posereg {

namespace {

std::optional<Vector6> solve_normal(const Matrix6& h, const Vector6& g, double damping) {
  const Matrix6 damped = h + damping * Matrix6::Identity();
  Eigen::LDLT<Matrix6> ldlt(damped);
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14)) return std::nullopt;
  Vector6 x = ldlt.solve(-g);
  if (!x.allFinite()) return std::nullopt;
  return x;
}

double objective_or_inf(const Pose& pose, const ObjectModel& model, const Scene& scene,
                        const ObjectiveConfig& config) {
  try {
    return robust_objective(pose, model, scene, config);
  } catch (const DepthNonPositive&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

NormalEquations frozen_normal_equations(const Pose& pose, const ObjectModel& model,
                                        const Scene& scene, const ObjectiveConfig& config) {
  const ProjectionResiduals res = projection_residuals(pose, model, scene);
  const JacobianStack jac = analytic_jacobians(pose, model, scene);
  const GroupScales g = group_scales(scene, config);
  const GroupBetas& b = config.betas;
  NormalEquations ne;

  auto add_block = [&ne](const Vector2& r, const Matrix26& j, const Matrix2& cov, double w) {
    ne.jtwj += w * j.transpose() * cov * j;
    ne.jtwr += w * j.transpose() * cov * r;
    ne.frozen_value += w * r.dot(cov * r);
  };
  for (std::size_t k = 0; k < res.keypoint.size(); ++k) {
    const double w = g.keypoint * gm_weight(res.keypoint[k].norm(), b.keypoint);
    add_block(res.keypoint[k], jac.keypoint_pose[k], config.covs.keypoint_at(k), w);
  }
  if (g.edge > 0.0) {
    for (std::size_t e = 0; e < res.edge.size(); ++e) {
      const double w = g.edge * gm_weight(res.edge[e].norm(), b.edge);
      add_block(res.edge[e], jac.edge_pose[e], config.covs.edge_at(e), w);
    }
  }
  if (g.symmetry > 0.0) {
    for (std::size_t s = 0; s < res.symmetry.size(); ++s) {
      const double r = res.symmetry[s];
      const double w = g.symmetry * gm_weight(r, b.symmetry);
      const RowVector6& j = jac.symmetry_pose[s];
      ne.jtwj += w * j.transpose() * j;
      ne.jtwr += w * r * j.transpose();
      ne.frozen_value += w * r * r;
    }
  }
  return ne;
}

RefineReport gauss_newton_refine(const Pose& init, const ObjectModel& model, const Scene& scene,
                                 const RefineConfig& config) {
  if (config.max_iters < 1) throw InvalidConfig("max_iters must be at least 1");
  RefineReport report;
  report.pose = init;
  double current = robust_objective(init, model, scene, config.objective);
  report.objective_trace.push_back(current);

  for (int it = 0; it < config.max_iters; ++it) {
    const NormalEquations ne = frozen_normal_equations(report.pose, model, scene, config.objective);
    std::optional<Vector6> delta = solve_normal(ne.jtwj, ne.jtwr, config.damping);
    if (!delta) {
      const double fallback = 1e-6 * std::max(ne.jtwj.trace() / 6.0, 1e-300);
      delta = solve_normal(ne.jtwj, ne.jtwr, config.damping + fallback);
    }
    if (!delta) throw NumericalFailure("normal matrix is singular even after damping");
    report.iterations = it + 1;
    if (delta->norm() < config.step_tol) {
      report.converged = true;
      break;
    }

    Vector6 step = *delta;
    bool accepted = false;
    for (int h = 0; h <= config.max_halvings; ++h) {
      const Pose candidate = apply_delta(report.pose, LocalPoseDelta::from_stacked(step));
      const double value = objective_or_inf(candidate, model, scene, config.objective);
      if (value < current) {
        report.pose = candidate;
        current = value;
        report.objective_trace.push_back(current);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No step along the Gauss-Newton direction lowers the objective.
      report.converged = true;
      break;
    }
  }
  report.final_gradient_norm =
      frozen_normal_equations(report.pose, model, scene, config.objective).jtwr.norm();
  return report;
}

}  // namespace posereg
