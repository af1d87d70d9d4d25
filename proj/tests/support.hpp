#pragma once

// Shared fixtures and independent oracles for the unit tests.

#include "posereg/geometry.hpp"
#include "posereg/observations.hpp"
#include "posereg/synth_bench.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace posereg::testing {

// Rodrigues' formula written out, independent of exp_so3.
inline Matrix3 rodrigues(const Vector3& c) {
  const double th = c.norm();
  if (th == 0.0) return Matrix3::Identity();
  const Vector3 k = c / th;
  Matrix3 kx;
  kx << 0, -k.z(), k.y(), k.z(), 0, -k.x(), -k.y(), k.x(), 0;
  return Matrix3::Identity() + std::sin(th) * kx + (1.0 - std::cos(th)) * kx * kx;
}

// Geodesic angle through the trace, clamped.
inline double trace_angle(const Matrix3& a, const Matrix3& b) {
  const double c = 0.5 * ((a.transpose() * b).trace() - 1.0);
  return std::acos(std::clamp(c, -1.0, 1.0));
}

inline Vector3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector3 v(n(rng), n(rng), n(rng));
  return v.normalized();
}

inline Rotation random_rotation(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, M_PI);
  return exp_so3(random_unit(rng) * u(rng));
}

inline Pose make_pose(const Vector3& c, const Vector3& t) {
  Pose p;
  p.rotation = exp_so3(c);
  p.translation = t;
  return p;
}

struct Fixture {
  ObjectModel model;
  Pose gt;
  Scene scene;
};

// A procedural model with a sampled pose and a generated scene.
inline Fixture make_fixture(std::uint64_t seed, const GenConfig& base = {}) {
  Fixture f;
  f.model = make_procedural_model(derive_seed(seed, 0));
  GenConfig gen = base;
  std::mt19937_64 rng(derive_seed(seed, 1));
  f.gt = sample_pose(f.model, gen, rng);
  gen.seed = derive_seed(seed, 2);
  f.scene = generate_scene(f.model, f.gt, gen);
  return f;
}

inline GenConfig noisy_config(double sigma) {
  GenConfig g;
  g.noise = {sigma, sigma, sigma};
  return g;
}

}  // namespace posereg::testing
