#include "posereg/hyper_tuner.hpp"

#include "posereg/errors.hpp"
#include "posereg/init_solver.hpp"
#include "posereg/parallel.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace posereg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Sorting first makes the total independent of scene order.
double ordered_sum(std::vector<double> terms) {
  for (double& t : terms)
    if (std::isnan(t)) t = kInf;
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& theta, double h, int* evaluations) {
  Eigen::VectorXd g(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Eigen::VectorXd up = theta, down = theta;
    up(i) += h;
    down(i) -= h;
    const double fu = f(up);
    const double fd = f(down);
    *evaluations += 2;
    if (std::isfinite(fu) && std::isfinite(fd)) {
      g(i) = (fu - fd) / (2.0 * h);
    } else {
      const double f0 = f(theta);
      ++*evaluations;
      if (std::isfinite(fu)) g(i) = (fu - f0) / h;
      else if (std::isfinite(fd)) g(i) = (f0 - fd) / h;
      else g(i) = 0.0;
    }
  }
  return g;
}

double scene_beta_term(const ObjectModel& model, const Scene& scene, const GroupBetas& betas,
                       double cond_tradeoff) {
  ObjectiveConfig cfg;
  cfg.betas = betas;
  try {
    const ObjectiveDerivatives d = objective_derivatives(*scene.gt_pose, model, scene, cfg);
    const double kappa = condition_number(d.hessian);
    if (!std::isfinite(kappa)) return kInf;
    // The gradient is measured through the Hessian (the Newton step away from
    // the ground truth). A plain |g|^2 falls to zero as every weight shrinks.
    const Vector6 step = d.hessian.ldlt().solve(d.gradient);
    return step.squaredNorm() + cond_tradeoff * kappa;
  } catch (const DepthNonPositive&) {
    return kInf;
  }
}

bool scene_conditioned(const ObjectModel& model, const Scene& scene, const GroupBetas& start) {
  std::vector<GroupBetas> probes{start, start, start, GroupBetas{}};
  for (RobustParams* p : {&probes[1].keypoint, &probes[1].edge, &probes[1].symmetry}) p->beta2 *= 10.0;
  for (RobustParams* p : {&probes[2].keypoint, &probes[2].edge, &probes[2].symmetry}) p->beta2 *= 0.1;
  for (const auto& b : probes)
    if (std::isfinite(scene_beta_term(model, scene, b, 1.0))) return true;
  return false;
}

}  // namespace

void ValidationSet::validate() const {
  if (scenes.empty()) throw InvalidConfig("validation set has no scenes");
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    if (!scenes[i].gt_pose) throw InvalidConfig("validation scene " + std::to_string(i) + " lacks gt_pose");
    check_scene_matches(scenes[i], model);
  }
}

void TunerConfig::validate() const {
  if (!(shrink > 0.0 && shrink < 1.0)) throw InvalidConfig("shrink must lie in (0, 1)");
  if (!(fd_step > 0.0)) throw InvalidConfig("fd_step must be positive");
  if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw InvalidConfig("armijo_c must lie in (0, 1)");
  if (max_outer_iters < 0 || max_shrinks < 1) throw InvalidConfig("iteration limits must be positive");
  if (!(polish_step >= polish_min_step && polish_min_step > 0.0) || max_polish_evals < 0 ||
      polish_reach < 1)
    throw InvalidConfig("polish steps must satisfy 0 < polish_min_step <= polish_step");
  if (!(cond_tradeoff >= 0.0)) throw InvalidConfig("cond_tradeoff must be non-negative");
  if (!(param_min > 0.0 && param_max > param_min)) throw InvalidConfig("need 0 < param_min < param_max");
  for (const RobustParams& p : {beta_start.keypoint, beta_start.edge, beta_start.symmetry})
    if (!p.valid()) throw InvalidConfig("starting betas must be positive");
}

double condition_number(const Matrix6& h) {
  const Matrix6 sym = 0.5 * (h + h.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix6> es(sym, Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues()(0);
  const double lmax = es.eigenvalues()(5);
  if (!(lmax > 0.0) || lmin <= 1e-14 * lmax) return kInf;
  return lmax / lmin;
}

Eigen::VectorXd betas_to_vector(const GroupBetas& b) {
  Eigen::VectorXd v(6);
  v << b.keypoint.beta1, b.keypoint.beta2, b.edge.beta1, b.edge.beta2, b.symmetry.beta1,
      b.symmetry.beta2;
  return v;
}

GroupBetas betas_from_vector(const Eigen::VectorXd& v) {
  GroupBetas b;
  b.keypoint = {v(0), v(1)};
  b.edge = {v(2), v(3)};
  b.symmetry = {v(4), v(5)};
  return b;
}

Eigen::VectorXd minimize_in_log_box(const LogBoxProblem& problem, const TunerConfig& config,
                                    TuneTrace* trace) {
  config.validate();
  TuneTrace local;
  TuneTrace& tr = trace ? *trace : local;
  tr = TuneTrace{};
  const Eigen::Index n = problem.start.size();
  const double lo = std::log(config.param_min);
  const double hi = std::log(config.param_max);
  auto f = [&](const Eigen::VectorXd& theta) { return problem.objective(theta.array().exp().matrix()); };
  auto clamp = [&](Eigen::VectorXd theta) {
    for (Eigen::Index i = 0; i < n; ++i) theta(i) = std::clamp(theta(i), lo, hi);
    return theta;
  };

  Eigen::VectorXd theta = clamp(problem.start.array().log().matrix());
  double value = f(theta);
  ++tr.evaluations;
  tr.objective_trace.push_back(value);
  if (!std::isfinite(value)) return theta.array().exp().matrix();

  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(n, n);
  bool first = true;
  Eigen::VectorXd g = fd_gradient(f, theta, config.fd_step, &tr.evaluations);
  for (int it = 0; it < config.max_outer_iters; ++it) {
    Eigen::VectorXd pg = g;
    std::vector<bool> active(n, false);
    for (Eigen::Index i = 0; i < n; ++i) {
      if ((theta(i) <= lo && g(i) > 0.0) || (theta(i) >= hi && g(i) < 0.0)) {
        active[i] = true;
        pg(i) = 0.0;
      }
    }
    if (pg.norm() <= config.grad_tol) break;

    Eigen::VectorXd d = -hinv * pg;
    for (Eigen::Index i = 0; i < n; ++i)
      if (active[i]) d(i) = 0.0;
    if (!(g.dot(d) < 0.0)) {
      d = -pg;
      hinv.setIdentity();
      first = true;
    }
    // Without curvature information the gradient scale says nothing about
    // the step length; try a unit move in log-space and backtrack.
    if (first) d /= d.norm();

    double s = 1.0;
    bool accepted = false;
    Eigen::VectorXd cand;
    double cand_value = kInf;
    for (int k = 0; k < config.max_shrinks; ++k) {
      cand = clamp(theta + s * d);
      cand_value = f(cand);
      ++tr.evaluations;
      if (cand_value < value && cand_value <= value + config.armijo_c * g.dot(cand - theta)) {
        accepted = true;
        break;
      }
      s *= config.shrink;
    }
    if (!accepted) {
      if (first) break;
      // The quasi-Newton model may be stale; retry along the gradient.
      hinv.setIdentity();
      first = true;
      continue;
    }

    const Eigen::VectorXd step = cand - theta;
    theta = cand;
    value = cand_value;
    tr.objective_trace.push_back(value);
    tr.iterations = it + 1;

    const Eigen::VectorXd g_new = fd_gradient(f, theta, config.fd_step, &tr.evaluations);
    const Eigen::VectorXd y = g_new - g;
    const double sy = step.dot(y);
    if (sy > 1e-300) {
      if (first) hinv = (sy / y.squaredNorm()) * Eigen::MatrixXd::Identity(n, n);
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n) - rho * step * y.transpose();
      hinv = v * hinv * v.transpose() + rho * step * step.transpose();
      first = false;
    }
    g = g_new;
  }

  // Pattern polish: finite-difference descent stalls in the flat valleys of
  // these objectives, and the beta objective is not unimodal. Coarse sweeps
  // scan every coordinate pair over a (2 reach + 1)^2 lattice, fine sweeps
  // every single coordinate; a sweep that moves is followed by its
  // Hooke-Jeeves extrapolation.
  int evals = 0;
  auto probe = [&](const Eigen::VectorXd& cand, Eigen::VectorXd& best, double& best_value) {
    const Eigen::VectorXd c = clamp(cand);
    if (c == theta) return;
    const double v = f(c);
    ++evals;
    ++tr.evaluations;
    if (v < best_value) {
      best_value = v;
      best = c;
    }
  };
  auto accept = [&](const Eigen::VectorXd& best, double best_value) {
    if (!(best_value < value)) return false;
    theta = best;
    value = best_value;
    tr.objective_trace.push_back(value);
    return true;
  };
  const int reach = config.polish_reach;
  double step = config.polish_step;
  while (step >= config.polish_min_step && evals < config.max_polish_evals) {
    const Eigen::VectorXd base = theta;
    if (n > 1 && step >= config.polish_pair_min_step) {
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
          Eigen::VectorXd best = theta;
          double best_value = value;
          for (int a = -reach; a <= reach; ++a) {
            for (int b = -reach; b <= reach; ++b) {
              Eigen::VectorXd cand = theta;
              cand(i) += a * step;
              cand(j) += b * step;
              probe(cand, best, best_value);
            }
          }
          accept(best, best_value);
        }
      }
    } else {
      for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd best = theta;
        double best_value = value;
        for (int a = -reach; a <= reach; ++a) {
          Eigen::VectorXd cand = theta;
          cand(i) += a * step;
          probe(cand, best, best_value);
        }
        accept(best, best_value);
      }
    }
    if (theta == base) {
      step *= 0.5;
      continue;
    }
    Eigen::VectorXd dir = theta - base;
    while (evals < config.max_polish_evals) {
      Eigen::VectorXd best = theta;
      double best_value = value;
      probe(theta + dir, best, best_value);
      if (!accept(best, best_value)) break;
      dir *= 2.0;
    }
  }
  return theta.array().exp().matrix();
}

double alpha_objective(const ValidationSet& val, double alpha_e, double alpha_s) {
  std::vector<double> terms(val.scenes.size(), kInf);
  parallel_for(val.scenes.size(), [&](std::size_t i) {
    const Scene& scene = val.scenes[i];
    try {
      const Pose est = initialize_pose(val.model, scene, alpha_e, alpha_s);
      const Pose& gt = *scene.gt_pose;
      terms[i] = (est.rotation.matrix() - gt.rotation.matrix()).squaredNorm() +
                 (est.translation - gt.translation).squaredNorm();
    } catch (const Error&) {
      terms[i] = kInf;
    }
  });
  return ordered_sum(std::move(terms));
}

double beta_objective(const ValidationSet& val, const GroupBetas& betas, double cond_tradeoff,
                      const std::vector<std::size_t>& scenes) {
  std::vector<std::size_t> idx = scenes;
  if (idx.empty()) {
    idx.resize(val.scenes.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  }
  std::vector<double> terms(idx.size(), kInf);
  parallel_for(idx.size(), [&](std::size_t i) {
    terms[i] = scene_beta_term(val.model, val.scenes[idx[i]], betas, cond_tradeoff);
  });
  return ordered_sum(std::move(terms));
}

AlphaTuneResult tune_alphas(const ValidationSet& val, const TunerConfig& config) {
  val.validate();
  config.validate();
  LogBoxProblem problem;
  problem.start = Eigen::Vector2d(1.0, 1.0);
  problem.objective = [&](const Eigen::VectorXd& a) { return alpha_objective(val, a(0), a(1)); };
  AlphaTuneResult result;
  const Eigen::VectorXd best = minimize_in_log_box(problem, config, &result.trace);
  result.alpha_e = best(0);
  result.alpha_s = best(1);
  result.start_objective = result.trace.objective_trace.front();
  result.objective = result.trace.objective_trace.back();
  return result;
}

BetaTuneResult tune_betas(const ValidationSet& val, const TunerConfig& config) {
  val.validate();
  config.validate();
  BetaTuneResult result;
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < val.scenes.size(); ++i) {
    if (scene_conditioned(val.model, val.scenes[i], config.beta_start)) usable.push_back(i);
    else result.skipped_scenes.push_back(i);
  }
  if (usable.empty())
    throw ConditioningFailure("every validation scene has a singular Hessian at all probed betas");

  LogBoxProblem problem;
  problem.start = betas_to_vector(config.beta_start);
  problem.objective = [&](const Eigen::VectorXd& v) {
    return beta_objective(val, betas_from_vector(v), config.cond_tradeoff, usable);
  };
  const Eigen::VectorXd best = minimize_in_log_box(problem, config, &result.trace);
  result.betas = betas_from_vector(best);
  result.start_objective = result.trace.objective_trace.front();
  result.objective = result.trace.objective_trace.back();
  return result;
}

}  // namespace posereg
