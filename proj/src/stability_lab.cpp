#include "posereg/stability_lab.hpp"

#include "posereg/errors.hpp"
#include "posereg/parallel.hpp"
#include "posereg/residuals.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <sstream>

namespace posereg {

namespace {

// Unweighted stacked blocks at the ground truth. b_x = J_x^T dJ_x/dy.
struct Blocks {
  Eigen::MatrixXd j_k, j_e, j_s;
  Eigen::MatrixXd b_k, b_e, b_s;
};

Blocks build_blocks(const ObjectModel& model, const Pose& gt, const Scene& scene) {
  const JacobianStack jac = analytic_jacobians(gt, model, scene);
  const auto nk = static_cast<Eigen::Index>(scene.num_keypoints());
  const auto ne = static_cast<Eigen::Index>(scene.num_edges());
  const auto ns = static_cast<Eigen::Index>(scene.num_sym_corrs());
  Blocks b;
  b.j_k.resize(6, 2 * nk);
  b.b_k.resize(6, 2 * nk);
  for (Eigen::Index k = 0; k < nk; ++k) {
    b.j_k.middleCols<2>(2 * k) = jac.keypoint_pose[k].transpose();
    b.b_k.middleCols<2>(2 * k) = jac.keypoint_pose[k].transpose() * jac.keypoint_noise[k];
  }
  b.j_e.resize(6, 2 * ne);
  b.b_e.resize(6, 2 * ne);
  for (Eigen::Index e = 0; e < ne; ++e) {
    b.j_e.middleCols<2>(2 * e) = jac.edge_pose[e].transpose();
    b.b_e.middleCols<2>(2 * e) = jac.edge_pose[e].transpose() * jac.edge_noise[e];
  }
  b.j_s.resize(6, ns);
  b.b_s.resize(6, 2 * ns);
  for (Eigen::Index s = 0; s < ns; ++s) {
    b.j_s.col(s) = jac.symmetry_pose[s].transpose();
    b.b_s.middleCols<2>(2 * s) = jac.symmetry_pose[s].transpose() * jac.symmetry_noise[s];
  }
  return b;
}

Matrix6 information(const Blocks& b, double beta_e, double beta_s) {
  return b.j_k * b.j_k.transpose() + beta_e * b.j_e * b.j_e.transpose() +
         beta_s * b.j_s * b.j_s.transpose();
}

Eigen::MatrixXd mixed(const Blocks& b, double beta_e, double beta_s) {
  Eigen::MatrixXd out(6, b.b_k.cols() + b.b_e.cols() + b.b_s.cols());
  out << b.b_k, beta_e * b.b_e, beta_s * b.b_s;
  return out;
}

void require_full_rank(const Matrix6& a) {
  Eigen::SelfAdjointEigenSolver<Matrix6> es(a);
  const double lmax = es.eigenvalues()(5);
  if (lmax > 0.0 && es.eigenvalues()(0) > 1e-12 * lmax) return;
  std::ostringstream os;
  os << "information matrix is rank deficient; null directions:";
  for (int i = 0; i < 6; ++i) {
    if (es.eigenvalues()(i) > 1e-12 * std::max(lmax, 0.0) && lmax > 0.0) break;
    os << " [" << es.eigenvectors().col(i).transpose() << "]";
  }
  throw SingularInformation(os.str());
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Eigen::MatrixXd StabilityReport::sensitivity() const { return -a_mat.ldlt().solve(b_mat); }

Eigen::MatrixXd diagonal_noise(const Scene& scene, const NoiseModel& noise) {
  const auto nk = static_cast<Eigen::Index>(2 * scene.num_keypoints());
  const auto ne = static_cast<Eigen::Index>(2 * scene.num_edges());
  const auto ns = static_cast<Eigen::Index>(2 * scene.num_sym_corrs());
  Eigen::VectorXd d(nk + ne + ns);
  d << Eigen::VectorXd::Constant(nk, noise.sigma_k * noise.sigma_k),
      Eigen::VectorXd::Constant(ne, noise.sigma_e * noise.sigma_e),
      Eigen::VectorXd::Constant(ns, noise.sigma_s * noise.sigma_s);
  return d.asDiagonal();
}

std::pair<double, double> effective_group_weights(const Scene& scene, const ObjectiveConfig& config) {
  const GroupScales g = group_scales(scene, config);
  const double base = config.betas.keypoint.peak_weight();
  return {g.edge * config.betas.edge.peak_weight() / base,
          g.symmetry * config.betas.symmetry.peak_weight() / base};
}

StabilityReport predict_covariance(const ObjectModel& model, const Pose& gt_pose, const Scene& scene,
                                   double beta_e, double beta_s, const NoiseModel& noise) {
  return predict_covariance(model, gt_pose, scene, beta_e, beta_s, diagonal_noise(scene, noise));
}

StabilityReport predict_covariance(const ObjectModel& model, const Pose& gt_pose, const Scene& scene,
                                   double beta_e, double beta_s, const Eigen::MatrixXd& var_y) {
  if (!(beta_e >= 0.0 && beta_s >= 0.0)) throw InvalidConfig("group weights must be non-negative");
  const Blocks blocks = build_blocks(model, gt_pose, scene);
  StabilityReport rep;
  rep.j_k = blocks.j_k;
  rep.j_e = blocks.j_e;
  rep.j_s = blocks.j_s;
  rep.a_mat = information(blocks, beta_e, beta_s);
  rep.b_mat = mixed(blocks, beta_e, beta_s);
  if (var_y.rows() != rep.b_mat.cols() || var_y.cols() != rep.b_mat.cols())
    throw InvalidConfig("Var(y) has the wrong dimension for this scene");
  rep.var_y = var_y;
  require_full_rank(rep.a_mat);
  const Eigen::MatrixXd s = rep.a_mat.ldlt().solve(rep.b_mat);
  const Matrix6 cov = s * var_y * s.transpose();
  rep.predicted_cov = 0.5 * (cov + cov.transpose());
  return rep;
}

Scene perturb_scene(const Scene& base, const NoiseModel& noise, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Scene out = base;
  for (auto& k : out.keypoints) {
    const double a = n01(rng);
    const double b = n01(rng);
    k.image_point += noise.sigma_k * Vector2(a, b);
  }
  for (auto& e : out.edges) {
    const double a = n01(rng);
    const double b = n01(rng);
    e.vector += noise.sigma_e * Vector2(a, b);
  }
  for (auto& s : out.sym_corrs) {
    const double a = n01(rng);
    const double b = n01(rng);
    s.q2 += noise.sigma_s * Vector2(a, b);
  }
  return out;
}

Scene shift_observations(const Scene& base, const Eigen::VectorXd& dy) {
  const std::size_t dim = 2 * (base.num_keypoints() + base.num_edges() + base.num_sym_corrs());
  if (static_cast<std::size_t>(dy.size()) != dim) throw InvalidConfig("observation shift has the wrong size");
  Scene out = base;
  Eigen::Index i = 0;
  for (auto& k : out.keypoints) {
    k.image_point += dy.segment<2>(i);
    i += 2;
  }
  for (auto& e : out.edges) {
    e.vector += dy.segment<2>(i);
    i += 2;
  }
  for (auto& s : out.sym_corrs) {
    s.q2 += dy.segment<2>(i);
    i += 2;
  }
  return out;
}

RefineConfig quadratic_refine_config() {
  RefineConfig cfg;
  const RobustParams flat{1e3, 1e3};
  cfg.objective.betas = {flat, flat, flat};
  return cfg;
}

MonteCarloResult monte_carlo_covariance(const ObjectModel& model, const Pose& gt_pose,
                                        const Scene& base_scene, const NoiseModel& noise,
                                        std::size_t trials, std::uint64_t seed,
                                        const RefineConfig& refine) {
  if (trials < 100) throw InvalidConfig("Monte-Carlo needs at least 100 trials");
  std::vector<Vector6> deltas(trials, Vector6::Zero());
  std::vector<char> ok(trials, 0);
  parallel_for(trials, [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(seed, i));
    const Scene scene = perturb_scene(base_scene, noise, rng);
    try {
      const RefineReport r = gauss_newton_refine(gt_pose, model, scene, refine);
      deltas[i] = delta_between(gt_pose, r.pose).stacked();
      ok[i] = 1;
    } catch (const Error&) {
      ok[i] = 0;
    }
  });

  MonteCarloResult out;
  for (std::size_t i = 0; i < trials; ++i) {
    if (!ok[i]) {
      ++out.failures;
      continue;
    }
    ++out.trials_used;
    out.mean += deltas[i];
  }
  if (out.trials_used < 2) return out;
  out.mean /= static_cast<double>(out.trials_used);
  for (std::size_t i = 0; i < trials; ++i) {
    if (!ok[i]) continue;
    const Vector6 d = deltas[i] - out.mean;
    out.covariance += d * d.transpose();
  }
  out.covariance /= static_cast<double>(out.trials_used - 1);
  return out;
}

Vector6 SquareExample::h_s_eigenvalues() const {
  Eigen::SelfAdjointEigenSolver<Matrix6> es(h_s, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

SquareScene square_scene(double delta) {
  SquareScene sq{make_square_model(delta), Pose{}, Scene{}};
  sq.gt_pose.translation = Vector3(0.0, 0.0, 1.0);
  for (std::size_t k = 0; k < sq.model.num_keypoints(); ++k)
    sq.scene.keypoints.push_back({static_cast<int>(k), project(sq.gt_pose, sq.model.keypoints[k]).point});
  for (std::size_t e = 0; e < sq.model.num_edges(); ++e) {
    const auto [src, dst] = sq.model.edges[e];
    sq.scene.edges.push_back(
        {static_cast<int>(e), sq.scene.keypoints[dst].image_point - sq.scene.keypoints[src].image_point});
  }
  sq.scene.gt_pose = sq.gt_pose;
  return sq;
}

SquareExample square_example(double delta, int corr_grid) {
  if (!(delta > 0.0)) throw InvalidConfig("delta must be positive");
  if (corr_grid < 100) throw InvalidConfig("corr_grid must be at least 100");
  SquareScene sq = square_scene(delta);
  const double hx = delta / corr_grid;
  const double hy = 2.0 * delta / corr_grid;
  sq.scene.sym_corrs.reserve(static_cast<std::size_t>(corr_grid) * corr_grid);
  for (int i = 0; i < corr_grid; ++i) {
    const double x = (i + 0.5) * hx;
    for (int j = 0; j < corr_grid; ++j) {
      const double y = -delta + (j + 0.5) * hy;
      sq.scene.sym_corrs.push_back({Vector2(x, y), Vector2(-x, y)});
    }
  }
  const JacobianStack jac = analytic_jacobians(sq.gt_pose, sq.model, sq.scene);
  SquareExample ex;
  ex.delta = delta;
  for (const auto& j : jac.keypoint_pose) ex.h_k += j.transpose() * j;
  ex.h_k /= static_cast<double>(jac.keypoint_pose.size());
  for (const auto& j : jac.edge_pose) ex.h_e += j.transpose() * j;
  ex.h_e /= static_cast<double>(jac.edge_pose.size());
  for (const auto& j : jac.symmetry_pose) ex.h_s += j.transpose() * j;
  ex.h_s /= static_cast<double>(jac.symmetry_pose.size());
  return ex;
}

double a8_closed_form(double delta, double sigma_k, double sigma_e, double beta_e) {
  const double d2 = delta * delta;
  const double hk = 12.0 / 8.0 * d2;
  const double he = 24.0 / 7.0 * d2;
  const double denom = hk + beta_e * he;
  return (sigma_k * sigma_k * hk + beta_e * beta_e * sigma_e * sigma_e * he) / (denom * denom);
}

std::vector<double> log_grid(double lo, double hi, int n) {
  if (!(lo > 0.0 && hi > lo) || n < 2) throw InvalidConfig("log grid needs 0 < lo < hi and n >= 2");
  std::vector<double> out(static_cast<std::size_t>(n));
  const double a = std::log10(lo);
  const double b = std::log10(hi);
  for (int i = 0; i < n; ++i) out[i] = std::pow(10.0, a + (b - a) * i / (n - 1));
  return out;
}

A8Scan a8_scan(double delta, double sigma_k, double sigma_e, const std::vector<double>& beta_grid) {
  if (beta_grid.empty()) throw InvalidConfig("beta grid is empty");
  const SquareScene sq = square_scene(delta);
  const NoiseModel noise{sigma_k, sigma_e, 0.0};
  A8Scan scan;
  scan.betas = beta_grid;
  for (double b : beta_grid) {
    scan.a8_values.push_back(a8_closed_form(delta, sigma_k, sigma_e, b));
    scan.cov_values.push_back(predict_covariance(sq.model, sq.gt_pose, sq.scene, b, 0.0, noise).predicted_cov(5, 5));
  }
  const auto argmin = [&](const std::vector<double>& v) {
    return scan.betas[static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin())];
  };
  scan.best_beta_e = argmin(scan.a8_values);
  scan.best_beta_cov = argmin(scan.cov_values);
  return scan;
}

VarianceReductionReport variance_reduction_check(const ObjectModel& model, const Pose& gt_pose,
                                                 const Scene& scene, const NoiseModel& noise,
                                                 double beta_e_small,
                                                 const std::optional<Eigen::MatrixXd>& var_y) {
  if (!(beta_e_small > 0.0)) throw InvalidConfig("beta_e_small must be positive");
  Scene kp_edges = scene;
  kp_edges.sym_corrs.clear();
  const Eigen::MatrixXd v = var_y ? *var_y : diagonal_noise(kp_edges, noise);
  VarianceReductionReport rep;
  const StabilityReport at0 = predict_covariance(model, gt_pose, kp_edges, 0.0, 0.0, v);
  rep.trace_at_zero = at0.predicted_cov.trace();
  rep.trace_at_small = predict_covariance(model, gt_pose, kp_edges, beta_e_small, 0.0, v).predicted_cov.trace();
  rep.fd_derivative = (rep.trace_at_small - rep.trace_at_zero) / beta_e_small;

  // d/db [A^-1 M A^-1] at b = 0 with A = A_K + b A_E and M = B V B^T.
  const Blocks blocks = build_blocks(model, gt_pose, kp_edges);
  const Eigen::Index nk = blocks.b_k.cols();
  const Eigen::Index ne = blocks.b_e.cols();
  const Matrix6 ak_inv = (blocks.j_k * blocks.j_k.transpose()).inverse();
  const Matrix6 ae = blocks.j_e * blocks.j_e.transpose();
  const Matrix6 m0 = blocks.b_k * v.topLeftCorner(nk, nk) * blocks.b_k.transpose();
  const Matrix6 cross = blocks.b_e * v.block(nk, 0, ne, nk) * blocks.b_k.transpose();
  const Matrix6 m1 = cross + cross.transpose();
  const Matrix6 d = -ak_inv * ae * ak_inv * m0 * ak_inv - ak_inv * m0 * ak_inv * ae * ak_inv +
                    ak_inv * m1 * ak_inv;
  rep.analytic_derivative = d.trace();
  rep.reduces = rep.trace_at_small < rep.trace_at_zero;
  return rep;
}

ImplicitDerivativeReport implicit_derivative_check(const ObjectModel& model, const Pose& gt_pose,
                                                   const Scene& scene, const RefineConfig& refine,
                                                   const Eigen::VectorXd& dy, double step) {
  if (!(step > 0.0)) throw InvalidConfig("step must be positive");
  const auto [be, bs] = effective_group_weights(scene, refine.objective);
  const StabilityReport rep = predict_covariance(model, gt_pose, scene, be, bs, NoiseModel{});
  ImplicitDerivativeReport out;
  out.analytic = rep.sensitivity() * dy;

  RefineConfig tight = refine;
  tight.step_tol = 1e-15;
  auto solve = [&](double h) {
    const RefineReport r = gauss_newton_refine(gt_pose, model, shift_observations(scene, h * dy), tight);
    return delta_between(gt_pose, r.pose).stacked();
  };
  out.numeric = (solve(step) - solve(-step)) / (2.0 * step);
  const double scale = std::max({out.analytic.norm(), out.numeric.norm(), 1e-300});
  out.relative_error = (out.analytic - out.numeric).norm() / scale;
  return out;
}

std::string a8_csv(const A8Scan& scan) {
  std::ostringstream os;
  os << "beta_e,a8_closed_form,cov_66\n";
  for (std::size_t i = 0; i < scan.betas.size(); ++i)
    os << fmt(scan.betas[i]) << ',' << fmt(scan.a8_values[i]) << ',' << fmt(scan.cov_values[i]) << '\n';
  return os.str();
}

std::string square_csv(const SquareExample& ex) {
  std::ostringstream os;
  os << "matrix,row,c1,c2,c3,c4,c5,c6\n";
  const std::pair<const char*, const Matrix6*> mats[] = {{"H_K", &ex.h_k}, {"H_E", &ex.h_e}, {"H_S", &ex.h_s}};
  for (const auto& [name, m] : mats) {
    for (int r = 0; r < 6; ++r) {
      os << name << ',' << r + 1;
      for (int c = 0; c < 6; ++c) os << ',' << fmt((*m)(r, c));
      os << '\n';
    }
  }
  return os.str();
}

std::string covariance_csv(const StabilityReport& report) {
  std::ostringstream os;
  os << "component,predicted,empirical\n";
  for (int i = 0; i < 6; ++i) {
    os << i << ',' << fmt(report.predicted_cov(i, i)) << ',';
    if (report.empirical_cov) os << fmt((*report.empirical_cov)(i, i));
    os << '\n';
  }
  return os.str();
}

}  // namespace posereg
