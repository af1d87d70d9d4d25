#include "posereg/pipeline.hpp"

namespace posereg {

RefineConfig SolverSettings::effective_refine_config() const {
  RefineConfig cfg = refine_config;
  cfg.objective.use_edges = cfg.objective.use_edges && use_edges;
  cfg.objective.use_symmetry = cfg.objective.use_symmetry && use_symmetry;
  return cfg;
}

SolveResult solve_scene(const ObjectModel& model, const Scene& scene, const SolverSettings& settings) {
  SolveResult result;
  result.init_pose =
      initialize_pose(model, scene, settings.effective_alpha_e(), settings.effective_alpha_s());
  if (settings.refine)
    result.refinement =
        gauss_newton_refine(result.init_pose, model, scene, settings.effective_refine_config());
  return result;
}

std::vector<SolverSettings> ablation_arms(const SolverSettings& base) {
  SolverSettings keypoints = base;
  keypoints.name = "keypoints";
  keypoints.use_edges = false;
  keypoints.use_symmetry = false;

  SolverSettings with_symmetry = base;
  with_symmetry.name = "keypoints+symmetry";
  with_symmetry.use_edges = false;
  with_symmetry.use_symmetry = true;

  SolverSettings full = base;
  full.name = "full";
  full.use_edges = true;
  full.use_symmetry = true;
  return {keypoints, with_symmetry, full};
}

}  // namespace posereg
