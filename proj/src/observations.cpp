#include "posereg/observations.hpp"

#include "posereg/errors.hpp"

#include <string>

namespace posereg {

namespace {

std::string count_message(const char* what, std::size_t got, std::size_t want) {
  return std::string(what) + " count " + std::to_string(got) + " does not match model (" +
         std::to_string(want) + ")";
}

}  // namespace

void check_scene_matches(const Scene& scene, const ObjectModel& model) {
  if (scene.keypoints.size() != model.num_keypoints())
    throw CountMismatch(count_message("keypoint", scene.keypoints.size(), model.num_keypoints()));
  if (scene.edges.size() != model.num_edges())
    throw CountMismatch(count_message("edge", scene.edges.size(), model.num_edges()));
  for (std::size_t k = 0; k < scene.keypoints.size(); ++k)
    if (scene.keypoints[k].index != static_cast<int>(k))
      throw CountMismatch("keypoint observations must be in model order");
  for (std::size_t e = 0; e < scene.edges.size(); ++e)
    if (scene.edges[e].edge_index != static_cast<int>(e))
      throw CountMismatch("edge observations must be in model order");
}

Scene ingest_scene(const PixelScene& raw, const ObjectModel& model) {
  if (!raw.intrinsics.valid()) throw IntrinsicsInvalid("intrinsics need finite values and fx, fy > 0");
  if (raw.keypoints_2d.size() != model.num_keypoints())
    throw CountMismatch(count_message("keypoint", raw.keypoints_2d.size(), model.num_keypoints()));
  if (raw.edges_2d.size() != model.num_edges())
    throw CountMismatch(count_message("edge", raw.edges_2d.size(), model.num_edges()));

  const CameraIntrinsics& in = raw.intrinsics;
  Scene scene;
  scene.intrinsics = in;
  scene.keypoints.reserve(raw.keypoints_2d.size());
  for (std::size_t k = 0; k < raw.keypoints_2d.size(); ++k)
    scene.keypoints.push_back({static_cast<int>(k), normalize_pixel(in, raw.keypoints_2d[k]).head<2>()});
  scene.edges.reserve(raw.edges_2d.size());
  for (std::size_t e = 0; e < raw.edges_2d.size(); ++e) {
    const Vector2& d = raw.edges_2d[e];
    scene.edges.push_back({static_cast<int>(e), Vector2(d.x() / in.fx, d.y() / in.fy)});
  }
  scene.sym_corrs.reserve(raw.sym_corrs.size());
  for (const auto& s : raw.sym_corrs) {
    scene.sym_corrs.push_back({normalize_pixel(in, Vector2(s[0], s[1])).head<2>(),
                               normalize_pixel(in, Vector2(s[2], s[3])).head<2>()});
  }
  scene.gt_pose = raw.gt_pose;
  scene.noise_meta = raw.noise_meta;
  return scene;
}

PixelScene to_pixel_scene(const Scene& scene) {
  const CameraIntrinsics& in = scene.intrinsics;
  PixelScene raw;
  raw.intrinsics = in;
  for (const auto& k : scene.keypoints) raw.keypoints_2d.push_back(denormalize_point(in, k.image_point));
  for (const auto& e : scene.edges)
    raw.edges_2d.emplace_back(in.fx * e.vector.x(), in.fy * e.vector.y());
  for (const auto& s : scene.sym_corrs) {
    const Vector2 a = denormalize_point(in, s.q1);
    const Vector2 b = denormalize_point(in, s.q2);
    raw.sym_corrs.push_back({a.x(), a.y(), b.x(), b.y()});
  }
  raw.gt_pose = scene.gt_pose;
  raw.noise_meta = scene.noise_meta;
  return raw;
}

}  // namespace posereg
