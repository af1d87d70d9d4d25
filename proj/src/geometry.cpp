#include "posereg/geometry.hpp"

#include "posereg/errors.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace posereg {

Matrix3 skew(const Vector3& a) {
  Matrix3 s;
  s << 0.0, -a.z(), a.y(),
       a.z(), 0.0, -a.x(),
       -a.y(), a.x(), 0.0;
  return s;
}

Rotation Rotation::from_matrix(const Matrix3& m, double tol) {
  const double orth = (m.transpose() * m - Matrix3::Identity()).norm();
  const double det = m.determinant();
  if (!(orth <= tol) || !(std::abs(det - 1.0) <= tol)) {
    std::ostringstream os;
    os << "matrix is not a rotation (orthogonality error " << orth << ", det " << det << ")";
    throw std::invalid_argument(os.str());
  }
  return Rotation(m);
}

Rotation Rotation::nearest(const Matrix3& m) {
  Eigen::JacobiSVD<Matrix3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3 u = svd.matrixU();
  const Matrix3& v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return Rotation(u * v.transpose());
}

double Rotation::orthogonality_error() const {
  return (m_.transpose() * m_ - Matrix3::Identity()).norm();
}

Vector6 LocalPoseDelta::stacked() const {
  Vector6 v;
  v << c, c_bar;
  return v;
}

LocalPoseDelta LocalPoseDelta::from_stacked(const Vector6& v) {
  return {v.head<3>(), v.tail<3>()};
}

bool CameraIntrinsics::valid() const {
  return std::isfinite(fx) && std::isfinite(fy) && std::isfinite(cx) && std::isfinite(cy) &&
         fx > 0.0 && fy > 0.0;
}

Vector3 ObjectModel::edge_vector(std::size_t e) const {
  const auto [s, t] = edges.at(e);
  return keypoints[t] - keypoints[s];
}

const std::vector<Vector3>& ObjectModel::evaluation_points() const {
  return surface_samples.empty() ? keypoints : surface_samples;
}

std::vector<std::pair<int, int>> complete_graph(std::size_t num_vertices) {
  std::vector<std::pair<int, int>> edges;
  edges.reserve(num_vertices * (num_vertices - 1) / 2);
  for (std::size_t i = 0; i < num_vertices; ++i)
    for (std::size_t j = i + 1; j < num_vertices; ++j)
      edges.emplace_back(static_cast<int>(i), static_cast<int>(j));
  return edges;
}

double compute_diameter(const std::vector<Vector3>& keypoints,
                        const std::vector<Vector3>& surface_samples) {
  std::vector<const Vector3*> all;
  all.reserve(keypoints.size() + surface_samples.size());
  for (const auto& p : keypoints) all.push_back(&p);
  for (const auto& p : surface_samples) all.push_back(&p);
  double best = 0.0;
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = i + 1; j < all.size(); ++j)
      best = std::max(best, (*all[i] - *all[j]).squaredNorm());
  return std::sqrt(best);
}

ObjectModel make_model(std::vector<Vector3> keypoints, std::vector<std::pair<int, int>> edges,
                       SymmetryPlane symmetry, std::vector<Vector3> surface_samples,
                       bool has_pose_ambiguity) {
  if (keypoints.size() < 2) throw ModelInvalid("model needs at least two keypoints");
  for (const auto& p : keypoints)
    if (!p.allFinite()) throw ModelInvalid("non-finite keypoint");
  for (const auto& p : surface_samples)
    if (!p.allFinite()) throw ModelInvalid("non-finite surface sample");
  if (edges.empty()) edges = complete_graph(keypoints.size());
  const int n = static_cast<int>(keypoints.size());
  for (const auto& [s, t] : edges) {
    if (s < 0 || t < 0 || s >= n || t >= n)
      throw ModelInvalid("edge index out of range");
    if (s == t) throw ModelInvalid("edge endpoints must differ");
  }
  if (std::abs(symmetry.normal.norm() - 1.0) > 1e-12)
    throw ModelInvalid("symmetry normal must be unit length");
  if (!symmetry.point.allFinite()) throw ModelInvalid("non-finite symmetry point");

  ObjectModel model;
  model.diameter = compute_diameter(keypoints, surface_samples);
  if (!(model.diameter > 0.0)) throw ModelInvalid("model diameter must be positive");
  model.keypoints = std::move(keypoints);
  model.edges = std::move(edges);
  model.symmetry = symmetry;
  model.surface_samples = std::move(surface_samples);
  model.has_pose_ambiguity = has_pose_ambiguity;
  return model;
}

Rotation exp_so3(const Vector3& c) {
  const double theta = c.norm();
  const Matrix3 k = skew(c);
  if (theta < 1e-8) return Rotation(Matrix3::Identity() + k + 0.5 * k * k);
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Rotation(Matrix3::Identity() + a * k + b * k * k);
}

Vector3 log_so3(const Rotation& r) {
  const Eigen::AngleAxisd aa(r.matrix());
  return aa.angle() * aa.axis();
}

Pose apply_delta(const Pose& pose, const LocalPoseDelta& delta) {
  const Rotation step = exp_so3(delta.c);
  Rotation rot = step * pose.rotation;
  if (rot.orthogonality_error() > 1e-12) rot = Rotation::nearest(rot.matrix());
  return {rot, step * pose.translation + delta.c_bar};
}

LocalPoseDelta delta_between(const Pose& reference, const Pose& pose) {
  LocalPoseDelta d;
  d.c = log_so3(pose.rotation * reference.rotation.transpose());
  d.c_bar = pose.translation - exp_so3(d.c) * reference.translation;
  return d;
}

Projection project_camera_point(const Vector3& x) {
  if (!(x.z() > kMinDepth)) {
    std::ostringstream os;
    os << "point projects with non-positive depth " << x.z();
    throw DepthNonPositive(os.str());
  }
  return {Vector2(x.x() / x.z(), x.y() / x.z()), x.z()};
}

Projection project(const Pose& pose, const Vector3& point) {
  return project_camera_point(pose.transform(point));
}

Vector3 normalize_pixel(const CameraIntrinsics& intr, const Vector2& pixel) {
  return {(pixel.x() - intr.cx) / intr.fx, (pixel.y() - intr.cy) / intr.fy, 1.0};
}

Vector2 denormalize_point(const CameraIntrinsics& intr, const Vector2& point) {
  return {intr.fx * point.x() + intr.cx, intr.fy * point.y() + intr.cy};
}

Vector3 reflect(const SymmetryPlane& plane, const Vector3& point) {
  const Vector3& n = plane.normal;
  return point - 2.0 * n * n.dot(point - plane.point);
}

}  // namespace posereg
