#pragma once

#include "posereg/geometry.hpp"
#include "posereg/observations.hpp"
#include "posereg/refine_solver.hpp"
#include "posereg/synth_bench.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace posereg {

/// First-order pose uncertainty at the ground truth.
///
/// Observation vector layout: two coordinates per keypoint, two per edge,
/// then the two coordinates of q2 for every symmetry pair.
struct StabilityReport {
  Eigen::MatrixXd j_k;  // 6 x 2|K|, one column per residual coordinate
  Eigen::MatrixXd j_e;  // 6 x 2|E|
  Eigen::MatrixXd j_s;  // 6 x |S|, translation rows zero
  Matrix6 a_mat = Matrix6::Zero();
  Eigen::MatrixXd b_mat;  // 6 x dim(y), mixed second derivative up to the factor 2
  Eigen::MatrixXd var_y;
  Matrix6 predicted_cov = Matrix6::Zero();
  std::optional<Matrix6> empirical_cov;
  std::size_t trials = 0;

  /// d x* / d y = -A^-1 B.
  Eigen::MatrixXd sensitivity() const;
};

/// Diagonal Var(y) with sigma_k^2, sigma_e^2 and sigma_s^2 per coordinate.
Eigen::MatrixXd diagonal_noise(const Scene& scene, const NoiseModel& noise);

/// Group weights (keypoints weighted 1) that the refinement objective applies
/// at zero residual: group scale times rho(0) relative to the keypoint group.
std::pair<double, double> effective_group_weights(const Scene& scene, const ObjectiveConfig& config);

/// A^-1 B Var(y) B^T A^-1 with A = J_K J_K^T + beta_e J_E J_E^T + beta_s J_S J_S^T.
/// Throws SingularInformation when A is rank deficient.
StabilityReport predict_covariance(const ObjectModel& model, const Pose& gt_pose, const Scene& scene,
                                   double beta_e, double beta_s, const NoiseModel& noise);
StabilityReport predict_covariance(const ObjectModel& model, const Pose& gt_pose, const Scene& scene,
                                   double beta_e, double beta_s, const Eigen::MatrixXd& var_y);

/// Adds independent Gaussian noise to every observation (q2 only for pairs).
Scene perturb_scene(const Scene& base, const NoiseModel& noise, std::mt19937_64& rng);

/// Shifts the observation vector of `base` by `dy` (layout as above).
Scene shift_observations(const Scene& base, const Eigen::VectorXd& dy);

/// Near-quadratic refinement used by the Monte-Carlo runs.
RefineConfig quadratic_refine_config();

struct MonteCarloResult {
  Matrix6 covariance = Matrix6::Zero();
  Vector6 mean = Vector6::Zero();
  std::size_t trials_used = 0;
  std::size_t failures = 0;
};

/// Re-noises `base_scene` (noiseless at gt_pose) `trials` times, refines from
/// the ground truth, and returns the sample covariance of the local deltas.
/// Trial i draws from derive_seed(seed, i). Throws InvalidConfig for
/// trials < 100.
MonteCarloResult monte_carlo_covariance(const ObjectModel& model, const Pose& gt_pose,
                                        const Scene& base_scene, const NoiseModel& noise,
                                        std::size_t trials, std::uint64_t seed,
                                        const RefineConfig& refine = quadratic_refine_config());

struct SquareExample {
  double delta = 0.0;
  Matrix6 h_k = Matrix6::Zero();
  Matrix6 h_e = Matrix6::Zero();
  Matrix6 h_s = Matrix6::Zero();

  /// Eigenvalues of h_s in ascending order.
  Vector6 h_s_eigenvalues() const;
};

/// Planar square at unit depth facing the camera. The symmetry pairs cover
/// x in [0, delta], y in [-delta, delta] on a corr_grid x corr_grid midpoint
/// grid; H_S is their average (the area-normalized integral).
SquareExample square_example(double delta, int corr_grid = 400);

/// The square model and noiseless scene used by square_example (no pairs).
struct SquareScene {
  ObjectModel model;
  Pose gt_pose;
  Scene scene;
};
SquareScene square_scene(double delta);

struct A8Scan {
  std::vector<double> betas;
  std::vector<double> a8_values;   // closed form
  std::vector<double> cov_values;  // (6,6) entry of the predicted covariance
  double best_beta_e = 0.0;        // argmin of the closed form on the grid
  double best_beta_cov = 0.0;      // argmin of the covariance scan on the grid
};

/// a8(beta) = (sk^2 (12/8) d^2 + beta^2 se^2 (24/7) d^2) / ((12/8) d^2 + (24/7) beta d^2)^2
double a8_closed_form(double delta, double sigma_k, double sigma_e, double beta_e);

A8Scan a8_scan(double delta, double sigma_k, double sigma_e, const std::vector<double>& beta_grid);

/// n points evenly spaced in log10 between lo and hi.
std::vector<double> log_grid(double lo, double hi, int n);

struct VarianceReductionReport {
  double trace_at_zero = 0.0;
  double trace_at_small = 0.0;
  double fd_derivative = 0.0;        // forward difference in beta_e
  double analytic_derivative = 0.0;  // valid under independent keypoint noise
  bool reduces = false;
};

/// Keypoints and edges only (beta_s = 0). `var_y` overrides the diagonal
/// noise when given, e.g. to model correlated keypoint and edge noise.
VarianceReductionReport variance_reduction_check(const ObjectModel& model, const Pose& gt_pose,
                                                 const Scene& scene, const NoiseModel& noise,
                                                 double beta_e_small,
                                                 const std::optional<Eigen::MatrixXd>& var_y = {});

struct ImplicitDerivativeReport {
  Vector6 analytic = Vector6::Zero();
  Vector6 numeric = Vector6::Zero();
  double relative_error = 0.0;
};

/// Compares -H^-1 B dy with central differences of re-solved refinements
/// (starting from the ground truth) along the observation direction `dy`.
ImplicitDerivativeReport implicit_derivative_check(const ObjectModel& model, const Pose& gt_pose,
                                                   const Scene& scene, const RefineConfig& refine,
                                                   const Eigen::VectorXd& dy, double step = 1e-6);

std::string a8_csv(const A8Scan& scan);
std::string square_csv(const SquareExample& ex);
std::string covariance_csv(const StabilityReport& report);

}  // namespace posereg
