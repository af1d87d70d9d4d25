#pragma once

#include "posereg/geometry.hpp"
#include "posereg/observations.hpp"
#include "posereg/residuals.hpp"

#include <functional>
#include <vector>

namespace posereg {

/// Labeled scenes held out for tuning. Every scene must carry gt_pose.
struct ValidationSet {
  ObjectModel model;
  std::vector<Scene> scenes;

  void validate() const;
};

struct TunerConfig {
  double fd_step = 1e-3;  // central-difference step in log-parameter space
  int max_outer_iters = 50;
  double armijo_c = 1e-4;
  double shrink = 0.5;
  int max_shrinks = 40;
  /// Weight of the condition-number term in the beta objective.
  double cond_tradeoff = 1e-3;
  /// Search box for every tuned parameter, enforced in log-space.
  double param_min = 1e-4;
  double param_max = 1e4;
  /// Stop once the projected gradient is this small.
  double grad_tol = 1e-14;
  /// Pattern search run after the descent, in log-parameter units: scans of
  /// +-polish_reach steps, over coordinate pairs while the step is at least
  /// polish_pair_min_step and over single coordinates below that.
  double polish_step = 0.5;
  double polish_pair_min_step = 0.05;
  double polish_min_step = 1e-9;
  int polish_reach = 5;
  int max_polish_evals = 40000;
  GroupBetas beta_start;

  void validate() const;
};

/// Outcome of a box-constrained descent in log-parameter space.
struct TuneTrace {
  std::vector<double> objective_trace;  // accepted iterates, start first
  int iterations = 0;
  int evaluations = 0;
};

struct AlphaTuneResult {
  double alpha_e = 1.0;
  double alpha_s = 1.0;
  double objective = 0.0;
  double start_objective = 0.0;
  TuneTrace trace;
};

struct BetaTuneResult {
  GroupBetas betas;
  double objective = 0.0;
  double start_objective = 0.0;
  std::vector<std::size_t> skipped_scenes;
  TuneTrace trace;
};

/// Sum over scenes of |R_init - R_gt|_F^2 + |t_init - t_gt|^2. Scenes whose
/// initialization fails contribute +inf.
double alpha_objective(const ValidationSet& val, double alpha_e, double alpha_s);

/// Sum over scenes of |H^-1 df/dc|^2 + cond_tradeoff * kappa(H), with
/// H = d2f/dc2 (Gauss-Newton form), both at the ground truth. `scenes`
/// selects which scenes enter (all when empty).
double beta_objective(const ValidationSet& val, const GroupBetas& betas, double cond_tradeoff,
                      const std::vector<std::size_t>& scenes = {});

/// Starts at (1, 1). The result never scores worse than the start.
AlphaTuneResult tune_alphas(const ValidationSet& val, const TunerConfig& config = {});

/// Starts at config.beta_start. Scenes whose Hessian is singular at every
/// probed beta are skipped; ConditioningFailure if none remain.
BetaTuneResult tune_betas(const ValidationSet& val, const TunerConfig& config = {});

/// lambda_max / lambda_min of a symmetric PSD matrix; +inf when
/// lambda_min <= 1e-14 lambda_max.
double condition_number(const Matrix6& h);

/// Box-constrained quasi-Newton descent on f(exp(theta)) with central
/// finite-difference gradients and Armijo backtracking, then a coordinate
/// polish. Exposed for testing.
struct LogBoxProblem {
  std::function<double(const Eigen::VectorXd& params)> objective;
  Eigen::VectorXd start;  // positive parameters
};
Eigen::VectorXd minimize_in_log_box(const LogBoxProblem& problem, const TunerConfig& config,
                                    TuneTrace* trace);

/// Vectors in the order (K1, K2, E1, E2, S1, S2).
Eigen::VectorXd betas_to_vector(const GroupBetas& b);
GroupBetas betas_from_vector(const Eigen::VectorXd& v);

}  // namespace posereg
