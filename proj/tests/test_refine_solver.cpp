#include "support.hpp"

#include "posereg/errors.hpp"
#include "posereg/init_solver.hpp"
#include "posereg/pipeline.hpp"
#include "posereg/refine_solver.hpp"

#include <doctest.h>

#include <Eigen/Cholesky>

#include <algorithm>
#include <random>

using namespace posereg;
using namespace posereg::testing;

namespace {

// Plain reprojection Gauss-Newton with numeric Jacobians and a different
// parameterization (R <- exp(w) R, t <- t + v).
Pose scratch_keypoint_gn(const ObjectModel& m, const Scene& s, Pose p) {
  auto residual = [&](const Pose& q) {
    Eigen::VectorXd r(2 * m.num_keypoints());
    for (std::size_t k = 0; k < m.num_keypoints(); ++k) {
      const Vector3 x = q.rotation.matrix() * m.keypoints[k] + q.translation;
      r.segment<2>(2 * k) = Vector2(x.x() / x.z(), x.y() / x.z()) - s.keypoints[k].image_point;
    }
    return r;
  };
  auto step = [](const Pose& q, const Vector6& d) {
    Pose out;
    out.rotation = Rotation::nearest(rodrigues(d.head<3>()) * q.rotation.matrix());
    out.translation = q.translation + d.tail<3>();
    return out;
  };
  for (int it = 0; it < 50; ++it) {
    const Eigen::VectorXd r = residual(p);
    Eigen::MatrixXd j(r.size(), 6);
    const double h = 1e-7;
    for (int c = 0; c < 6; ++c) {
      Vector6 d = Vector6::Zero();
      d(c) = h;
      j.col(c) = (residual(step(p, d)) - residual(step(p, -d))) / (2 * h);
    }
    const Vector6 d = (j.transpose() * j).ldlt().solve(-j.transpose() * r);
    p = step(p, d);
    if (d.norm() < 1e-14) break;
  }
  return p;
}

double frozen_model(const Pose& pose, const ObjectModel& m, const Scene& s, const ObjectiveConfig& cfg,
                    const ProjectionResiduals& at) {
  const ProjectionResiduals r = projection_residuals(pose, m, s);
  const GroupScales g = group_scales(s, cfg);
  double v = 0.0;
  for (std::size_t k = 0; k < r.keypoint.size(); ++k)
    v += g.keypoint * gm_weight(at.keypoint[k].norm(), cfg.betas.keypoint) * r.keypoint[k].squaredNorm();
  for (std::size_t e = 0; e < r.edge.size(); ++e)
    v += g.edge * gm_weight(at.edge[e].norm(), cfg.betas.edge) * r.edge[e].squaredNorm();
  for (std::size_t i = 0; i < r.symmetry.size(); ++i)
    v += g.symmetry * gm_weight(at.symmetry[i], cfg.betas.symmetry) * r.symmetry[i] * r.symmetry[i];
  return v;
}

}  // namespace

TEST_SUITE("refine_solver") {

TEST_CASE("ground truth is a fixed point of a noiseless scene") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Fixture f = make_fixture(seed);
    const RefineReport r = gauss_newton_refine(f.gt, f.model, f.scene, RefineConfig{});
    CHECK(r.iterations <= 1);
    CHECK(r.converged);
    CHECK(r.objective_trace.back() <= 1e-20);
    CHECK(delta_between(f.gt, r.pose).stacked().norm() <= 1e-12);
    CHECK(r.final_gradient_norm <= 1e-10);
  }
}

TEST_CASE("refinement improves on the initialization under small noise") {
  // The keypoint-only initializer is the weak starting point; with all groups
  // the linear solution is already about as accurate as the refined one.
  int better = 0;
  int lower = 0;
  const int n = 500;
  for (int i = 0; i < n; ++i) {
    const Fixture f = make_fixture(700 + i, noisy_config(0.001));
    const Pose init = initialize_pose(f.model, f.scene, 0.0, 0.0);
    const RefineReport r = gauss_newton_refine(init, f.model, f.scene, RefineConfig{});
    const double e0 = pose_errors(f.gt, init, 1.0).rotation;
    const double e1 = pose_errors(f.gt, r.pose, 1.0).rotation;
    if (e1 <= e0) ++better;
    const Pose full = initialize_pose(f.model, f.scene, 1.0, 1.0);
    const RefineConfig cfg;
    if (gauss_newton_refine(full, f.model, f.scene, cfg).objective_trace.back() <=
        robust_objective(full, f.model, f.scene, cfg.objective))
      ++lower;
  }
  CHECK(better >= 9 * n / 10);
  CHECK(lower == n);
}

TEST_CASE("objective trace never increases") {
  for (int i = 0; i < 30; ++i) {
    GenConfig g = noisy_config(0.004);
    g.outlier_rates.symmetry = 0.3;
    g.outlier_rates.keypoint = 0.1;
    const Fixture f = make_fixture(800 + i, g);
    Pose init = f.gt;
    init = apply_delta(init, {Vector3(0.05, -0.03, 0.02), Vector3(0.01, 0.0, 0.02)});
    const RefineReport r = gauss_newton_refine(init, f.model, f.scene, RefineConfig{});
    for (std::size_t k = 1; k < r.objective_trace.size(); ++k)
      CHECK(r.objective_trace[k] < r.objective_trace[k - 1]);
  }
}

TEST_CASE("frozen-weight gradient matches finite differences") {
  const Fixture f = make_fixture(900, noisy_config(0.003));
  ObjectiveConfig cfg;
  const Pose p = apply_delta(f.gt, {Vector3(0.01, 0.02, -0.01), Vector3(0.002, 0.0, 0.01)});
  const ProjectionResiduals at = projection_residuals(p, f.model, f.scene);
  const NormalEquations ne = frozen_normal_equations(p, f.model, f.scene, cfg);
  CHECK(ne.frozen_value == doctest::Approx(frozen_model(p, f.model, f.scene, cfg, at)).epsilon(1e-12));
  const double h = 1e-7;
  Vector6 g;
  for (int c = 0; c < 6; ++c) {
    Vector6 d = Vector6::Zero();
    d(c) = h;
    g(c) = (frozen_model(apply_delta(p, LocalPoseDelta::from_stacked(d)), f.model, f.scene, cfg, at) -
            frozen_model(apply_delta(p, LocalPoseDelta::from_stacked(-d)), f.model, f.scene, cfg, at)) /
           (2 * h);
  }
  CHECK((g - 2.0 * ne.jtwr).norm() <= 1e-5 * g.norm());
}

TEST_CASE("unfrozen directional derivatives match finite differences at the refined pose") {
  for (std::uint64_t seed : {901, 902, 903}) {
    GenConfig g = noisy_config(0.003);
    g.outlier_rates.symmetry = 0.2;
    const Fixture f = make_fixture(seed, g);
    RefineConfig cfg;
    cfg.step_tol = 1e-14;
    const RefineReport r = gauss_newton_refine(f.gt, f.model, f.scene, cfg);
    const Vector6 grad = objective_derivatives(r.pose, f.model, f.scene, cfg.objective).gradient;
    const double h = 1e-6;
    Vector6 fd;
    for (int c = 0; c < 6; ++c) {
      Vector6 d = Vector6::Zero();
      d(c) = h;
      fd(c) = (robust_objective(apply_delta(r.pose, LocalPoseDelta::from_stacked(d)), f.model, f.scene, cfg.objective) -
               robust_objective(apply_delta(r.pose, LocalPoseDelta::from_stacked(-d)), f.model, f.scene, cfg.objective)) /
              (2 * h);
    }
    CHECK((fd - grad).norm() <= 1e-5 * std::max(fd.norm(), grad.norm()) + 1e-9);
  }
}

TEST_CASE("keypoint-only refinement matches classical reprojection Gauss-Newton") {
  SolverSettings s;
  s.use_edges = false;
  s.use_symmetry = false;
  s.refine_config.objective.betas.keypoint = {1e4, 1e4};
  s.refine_config.step_tol = 1e-14;
  for (int i = 0; i < 50; ++i) {
    const Fixture f = make_fixture(1000 + i, noisy_config(0.002));
    const RefineReport r = gauss_newton_refine(f.gt, f.model, f.scene, s.effective_refine_config());
    const Pose q = scratch_keypoint_gn(f.model, f.scene, f.gt);
    CHECK((r.pose.rotation.matrix() - q.rotation.matrix()).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((r.pose.translation - q.translation).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("refinement errors") {
  const Fixture f = make_fixture(1100);
  RefineConfig bad;
  bad.max_iters = 0;
  CHECK_THROWS_AS(gauss_newton_refine(f.gt, f.model, f.scene, bad), InvalidConfig);
  Pose behind = f.gt;
  behind.translation.z() = -behind.translation.z();
  CHECK_THROWS_AS(gauss_newton_refine(behind, f.model, f.scene, RefineConfig{}), DepthNonPositive);
}

TEST_CASE("solve_scene honours the group switches") {
  const Fixture f = make_fixture(1200, noisy_config(0.002));
  const auto arms = ablation_arms(SolverSettings{});
  REQUIRE(arms.size() == 3);
  CHECK(arms[0].name == "keypoints");
  CHECK(arms[0].effective_alpha_e() == 0.0);
  CHECK(arms[0].effective_alpha_s() == 0.0);
  CHECK_FALSE(arms[0].effective_refine_config().objective.use_edges);
  CHECK_FALSE(arms[0].effective_refine_config().objective.use_symmetry);
  CHECK(arms[1].effective_refine_config().objective.use_symmetry);
  CHECK_FALSE(arms[1].effective_refine_config().objective.use_edges);
  CHECK(arms[2].effective_refine_config().objective.use_edges);

  SolverSettings no_refine;
  no_refine.refine = false;
  const SolveResult r = solve_scene(f.model, f.scene, no_refine);
  CHECK_FALSE(r.refinement);
  CHECK(&r.final_pose() == &r.init_pose);
}

}  // TEST_SUITE
