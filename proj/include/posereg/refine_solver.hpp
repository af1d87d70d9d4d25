#pragma once

#include "posereg/geometry.hpp"
#include "posereg/observations.hpp"
#include "posereg/residuals.hpp"

#include <vector>

namespace posereg {

struct RefineConfig {
  ObjectiveConfig objective;
  int max_iters = 100;
  double step_tol = 1e-10;
  /// Levenberg-style damping added to the normal matrix. When the undamped
  /// system is singular a fallback of 1e-6 (relative to its trace) is tried.
  double damping = 0.0;
  int max_halvings = 20;
};

struct RefineReport {
  Pose pose;
  int iterations = 0;
  /// Objective at the initial pose followed by each accepted step.
  std::vector<double> objective_trace;
  bool converged = false;
  double final_gradient_norm = 0.0;
};

/// Weighted normal equations at one pose, with the robust weights frozen at
/// their current values: w_i = scale_group * rho(|r_i|).
struct NormalEquations {
  Matrix6 jtwj = Matrix6::Zero();
  Vector6 jtwr = Vector6::Zero();
  /// sum w_i r_i^T S_i r_i, the value of the frozen-weight quadratic model.
  double frozen_value = 0.0;
};
NormalEquations frozen_normal_equations(const Pose& pose, const ObjectModel& model,
                                        const Scene& scene, const ObjectiveConfig& config);

/// Iteratively reweighted Gauss-Newton on the robust objective with a
/// step-halving guard. Throws NumericalFailure if the normal matrix stays
/// singular after damping, DepthNonPositive if `init` violates cheirality.
RefineReport gauss_newton_refine(const Pose& init, const ObjectModel& model, const Scene& scene,
                                 const RefineConfig& config);

}  // namespace posereg
