#pragma once

#include "posereg/init_solver.hpp"
#include "posereg/refine_solver.hpp"

#include <optional>
#include <string>

namespace posereg {

/// One solver arm: which observation groups it uses and how it weighs them.
struct SolverSettings {
  std::string name = "full";
  double alpha_e = 1.0;
  double alpha_s = 1.0;
  bool use_edges = true;
  bool use_symmetry = true;
  bool refine = true;
  RefineConfig refine_config;

  /// alpha and objective settings with disabled groups switched off.
  double effective_alpha_e() const { return use_edges ? alpha_e : 0.0; }
  double effective_alpha_s() const { return use_symmetry ? alpha_s : 0.0; }
  RefineConfig effective_refine_config() const;
};

struct SolveResult {
  Pose init_pose;
  std::optional<RefineReport> refinement;

  const Pose& final_pose() const { return refinement ? refinement->pose : init_pose; }
};

/// Initialization followed (optionally) by robust refinement.
SolveResult solve_scene(const ObjectModel& model, const Scene& scene, const SolverSettings& settings);

/// The three arms of the representation ablation: keypoints only,
/// keypoints + symmetry, and all three groups.
std::vector<SolverSettings> ablation_arms(const SolverSettings& base);

}  // namespace posereg
