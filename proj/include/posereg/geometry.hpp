#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <cstddef>
#include <utility>
#include <vector>

namespace posereg {

using Vector2 = Eigen::Vector2d;
using Vector3 = Eigen::Vector3d;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix2 = Eigen::Matrix2d;
using Matrix3 = Eigen::Matrix3d;
using Matrix6 = Eigen::Matrix<double, 6, 6>;

/// Projections with depth at or below this value are rejected.
inline constexpr double kMinDepth = 1e-9;

/// Skew-symmetric matrix such that skew(a) * b == a.cross(b).
Matrix3 skew(const Vector3& a);

/// Element of SO(3) stored as a 3x3 matrix.
///
/// Construction from an arbitrary matrix either validates it (from_matrix) or
/// projects it onto SO(3) (nearest). Products of rotations stay rotations up to
/// rounding, which apply_delta() cleans up when it exceeds 1e-12.
class Rotation {
 public:
  Rotation() : m_(Matrix3::Identity()) {}

  /// Throws std::invalid_argument unless m is orthonormal with det +1 to `tol`.
  static Rotation from_matrix(const Matrix3& m, double tol = 1e-9);
  /// Nearest rotation in Frobenius norm (polar decomposition with det fix).
  static Rotation nearest(const Matrix3& m);

  const Matrix3& matrix() const { return m_; }
  Rotation transpose() const { return Rotation(m_.transpose()); }
  Vector3 operator*(const Vector3& v) const { return m_ * v; }
  Rotation operator*(const Rotation& other) const { return Rotation(m_ * other.m_); }

  /// ||m^T m - I||_F.
  double orthogonality_error() const;

 private:
  explicit Rotation(const Matrix3& m) : m_(m) {}
  friend Rotation exp_so3(const Vector3& c);

  Matrix3 m_;
};

/// Rigid transform from the canonical object frame to the camera frame.
struct Pose {
  Rotation rotation;
  Vector3 translation = Vector3::Zero();

  Vector3 transform(const Vector3& p) const { return rotation * p + translation; }
};

/// Local tangent coordinates around a pose (see apply_delta).
struct LocalPoseDelta {
  Vector3 c = Vector3::Zero();      // rotation, radians
  Vector3 c_bar = Vector3::Zero();  // translation

  Vector6 stacked() const;
  static LocalPoseDelta from_stacked(const Vector6& v);
};

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  bool valid() const;
};

struct SymmetryPlane {
  Vector3 normal = Vector3::UnitX();
  Vector3 point = Vector3::Zero();
};

struct ObjectModel {
  std::vector<Vector3> keypoints;
  std::vector<std::pair<int, int>> edges;  // (source, target)
  SymmetryPlane symmetry;
  double diameter = 0.0;
  std::vector<Vector3> surface_samples;
  bool has_pose_ambiguity = false;

  std::size_t num_keypoints() const { return keypoints.size(); }
  std::size_t num_edges() const { return edges.size(); }
  /// Canonical-frame edge vector p[target] - p[source].
  Vector3 edge_vector(std::size_t e) const;
  /// Samples used by ADD(-S); falls back to the keypoints when no surface is given.
  const std::vector<Vector3>& evaluation_points() const;
};

/// All unordered pairs (i, j), i < j, in lexicographic order.
std::vector<std::pair<int, int>> complete_graph(std::size_t num_vertices);

/// Max pairwise distance over keypoints and surface samples.
double compute_diameter(const std::vector<Vector3>& keypoints,
                        const std::vector<Vector3>& surface_samples);

/// Builds a validated model. Empty `edges` selects the complete graph; the
/// diameter is computed, and the plane normal must already be unit length.
/// Throws ModelInvalid.
ObjectModel make_model(std::vector<Vector3> keypoints, std::vector<std::pair<int, int>> edges,
                       SymmetryPlane symmetry, std::vector<Vector3> surface_samples,
                       bool has_pose_ambiguity);

/// Matrix exponential of skew(c). Uses the second-order series below 1e-8.
Rotation exp_so3(const Vector3& c);

/// Inverse of exp_so3 on angles in [0, pi].
Vector3 log_so3(const Rotation& r);

/// R <- exp(c x) R, t <- exp(c x) t + c_bar.
///
/// The rotation increment acts on camera-frame points, so a point X = R p + t
/// moves to exp(c x) X + c_bar. This is the perturbation under which the
/// closed-form projection Jacobians in residuals.hpp are exact derivatives.
Pose apply_delta(const Pose& pose, const LocalPoseDelta& delta);

/// The delta d with apply_delta(reference, d) == pose (up to rounding).
LocalPoseDelta delta_between(const Pose& reference, const Pose& pose);

struct Projection {
  Vector2 point;  // normalized image coordinates
  double depth;
};

/// Pinhole projection in normalized coordinates. Throws DepthNonPositive when
/// the camera-frame depth is <= kMinDepth.
Projection project(const Pose& pose, const Vector3& point);
/// Same, for a point already in the camera frame.
Projection project_camera_point(const Vector3& x);

/// ((u - cx) / fx, (v - cy) / fy, 1).
Vector3 normalize_pixel(const CameraIntrinsics& intr, const Vector2& pixel);
Vector2 denormalize_point(const CameraIntrinsics& intr, const Vector2& point);

/// Mirror image of `point` across the plane.
Vector3 reflect(const SymmetryPlane& plane, const Vector3& point);

}  // namespace posereg
