#pragma once

#include "posereg/geometry.hpp"

#include <array>
#include <optional>
#include <vector>

namespace posereg {

struct KeypointObs {
  int index = 0;
  Vector2 image_point = Vector2::Zero();
};

/// Displacement from the projection of the edge source to that of its target.
/// Its homogeneous form has third coordinate 0.
struct EdgeObs {
  int edge_index = 0;
  Vector2 vector = Vector2::Zero();
};

/// q2 is the mirror counterpart of q1.
struct SymCorrObs {
  Vector2 q1 = Vector2::Zero();
  Vector2 q2 = Vector2::Zero();
};

/// Noise settings a scene was generated with.
struct NoiseMeta {
  double sigma_k = 0.0;
  double sigma_e = 0.0;
  double sigma_s = 0.0;
  double outlier_rate_k = 0.0;
  double outlier_rate_e = 0.0;
  double outlier_rate_s = 0.0;
};

/// Observations for one image, all in normalized camera coordinates.
///
/// keypoints[k].index == k and edges[e].edge_index == e: occluded elements are
/// carried as noisy observations rather than dropped.
struct Scene {
  CameraIntrinsics intrinsics;
  std::vector<KeypointObs> keypoints;
  std::vector<EdgeObs> edges;
  std::vector<SymCorrObs> sym_corrs;
  std::optional<Pose> gt_pose;
  std::optional<NoiseMeta> noise_meta;

  std::size_t num_keypoints() const { return keypoints.size(); }
  std::size_t num_edges() const { return edges.size(); }
  std::size_t num_sym_corrs() const { return sym_corrs.size(); }
};

/// Scene content as stored on disk, in pixels.
struct PixelScene {
  CameraIntrinsics intrinsics;
  std::vector<Vector2> keypoints_2d;
  std::vector<Vector2> edges_2d;
  std::vector<std::array<double, 4>> sym_corrs;  // u1, v1, u2, v2
  std::optional<Pose> gt_pose;
  std::optional<NoiseMeta> noise_meta;
};

/// Converts pixel observations to normalized coordinates. Throws
/// IntrinsicsInvalid or CountMismatch.
Scene ingest_scene(const PixelScene& raw, const ObjectModel& model);

/// Inverse of ingest_scene.
PixelScene to_pixel_scene(const Scene& scene);

/// Throws CountMismatch unless the scene carries exactly one keypoint per
/// model keypoint and one edge per model edge, in index order.
void check_scene_matches(const Scene& scene, const ObjectModel& model);

/// Homogeneous forms used by the cross-product constraints.
inline Vector3 homogeneous_point(const Vector2& p) { return {p.x(), p.y(), 1.0}; }
inline Vector3 homogeneous_vector(const Vector2& v) { return {v.x(), v.y(), 0.0}; }

}  // namespace posereg
