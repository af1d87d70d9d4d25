#include "support.hpp"

#include "posereg/errors.hpp"
#include "posereg/observations.hpp"

#include <doctest.h>

using namespace posereg;
using namespace posereg::testing;

TEST_SUITE("observations") {

TEST_CASE("ingest keeps counts of a generated scene") {
  GenConfig gen;
  gen.n_sym_corrs = 50;
  const Fixture f = make_fixture(21, gen);
  REQUIRE(f.model.num_keypoints() == 8);
  REQUIRE(f.model.num_edges() == 28);
  const Scene s = ingest_scene(to_pixel_scene(f.scene), f.model);
  CHECK(s.num_keypoints() == 8);
  CHECK(s.num_edges() == 28);
  CHECK(s.num_sym_corrs() == 50);
}

TEST_CASE("ingest rejects wrong counts and bad intrinsics") {
  const Fixture f = make_fixture(22);
  PixelScene raw = to_pixel_scene(f.scene);
  PixelScene short_kp = raw;
  short_kp.keypoints_2d.pop_back();
  CHECK_THROWS_AS(ingest_scene(short_kp, f.model), CountMismatch);
  PixelScene short_e = raw;
  short_e.edges_2d.pop_back();
  CHECK_THROWS_AS(ingest_scene(short_e, f.model), CountMismatch);
  PixelScene bad = raw;
  bad.intrinsics.fx = 0.0;
  CHECK_THROWS_AS(ingest_scene(bad, f.model), IntrinsicsInvalid);
}

TEST_CASE("principal point maps to the origin") {
  const ObjectModel m = make_model({{0, 0, 0}, {1, 0, 0}}, {}, SymmetryPlane{}, {}, false);
  PixelScene raw;
  raw.intrinsics = {500, 500, 320, 240};
  raw.keypoints_2d = {{320, 240}, {370, 240}};
  raw.edges_2d = {{50, -100}};
  raw.sym_corrs = {{320, 240, 420, 340}};
  const Scene s = ingest_scene(raw, m);
  CHECK(s.keypoints[0].image_point.norm() == 0.0);
  CHECK((s.keypoints[1].image_point - Vector2(0.1, 0.0)).norm() < 1e-16);
  CHECK((s.edges[0].vector - Vector2(0.1, -0.2)).norm() < 1e-16);
  CHECK((s.sym_corrs[0].q2 - Vector2(0.2, 0.2)).norm() < 1e-16);
}

TEST_CASE("ingest of serialize is the identity") {
  for (std::uint64_t seed = 30; seed < 40; ++seed) {
    const Fixture f = make_fixture(seed, noisy_config(0.01));
    const Scene back = ingest_scene(to_pixel_scene(f.scene), f.model);
    for (std::size_t k = 0; k < f.scene.num_keypoints(); ++k)
      CHECK((back.keypoints[k].image_point - f.scene.keypoints[k].image_point).cwiseAbs().maxCoeff() <= 1e-12);
    for (std::size_t e = 0; e < f.scene.num_edges(); ++e)
      CHECK((back.edges[e].vector - f.scene.edges[e].vector).cwiseAbs().maxCoeff() <= 1e-12);
    for (std::size_t s = 0; s < f.scene.num_sym_corrs(); ++s) {
      CHECK((back.sym_corrs[s].q1 - f.scene.sym_corrs[s].q1).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((back.sym_corrs[s].q2 - f.scene.sym_corrs[s].q2).cwiseAbs().maxCoeff() <= 1e-12);
    }
    REQUIRE(back.gt_pose);
    CHECK(back.gt_pose->translation == f.scene.gt_pose->translation);
  }
}

TEST_CASE("check_scene_matches enforces index order") {
  const Fixture f = make_fixture(23);
  CHECK_NOTHROW(check_scene_matches(f.scene, f.model));
  Scene s = f.scene;
  std::swap(s.keypoints[0].index, s.keypoints[1].index);
  CHECK_THROWS_AS(check_scene_matches(s, f.model), CountMismatch);
  s = f.scene;
  s.edges[3].edge_index = 4;
  CHECK_THROWS_AS(check_scene_matches(s, f.model), CountMismatch);
}

TEST_CASE("homogeneous forms") {
  CHECK(homogeneous_point(Vector2(1, 2)) == Vector3(1, 2, 1));
  CHECK(homogeneous_vector(Vector2(1, 2)) == Vector3(1, 2, 0));
}

}  // TEST_SUITE
