#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dexkit {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Thrown when an input violates a documented precondition.
struct InvalidInput : std::runtime_error {
  explicit InvalidInput(const std::string& msg) : std::runtime_error(msg) {}
};

/// Thrown when a computation cannot produce a meaningful result
/// (degenerate matrix, empty render, grasp with no visible seed, ...).
struct DegenerateInput : std::runtime_error {
  explicit DegenerateInput(const std::string& msg) : std::runtime_error(msg) {}
};

/// Rigid transform: x_world = rotation * x_local + translation.
struct RigidPose {
  Vec3 translation = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 apply_inverse(const Vec3& p) const { return rotation.transpose() * (p - translation); }

  RigidPose compose(const RigidPose& other) const {
    return {translation + rotation * other.translation, rotation * other.rotation};
  }
  RigidPose inverse() const {
    return {-(rotation.transpose() * translation), rotation.transpose()};
  }

  /// Max-abs deviation of R^T R from identity. Valid poses stay below 1e-9.
  double orthonormality_error() const {
    return (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  }
  bool is_valid(double tol = 1e-9) const {
    return orthonormality_error() < tol && rotation.determinant() > 0.0;
  }

  static RigidPose identity() { return {}; }
};

enum class ShapeKind { Sphere, Box, Cylinder };

/// Analytic primitive. Dimension conventions:
///   sphere:   dims = {radius}
///   box:      dims = {size_x, size_y, size_z}  (full edge lengths)
///   cylinder: dims = {radius, height}          (axis along local z)
struct PrimitiveShape {
  ShapeKind kind = ShapeKind::Sphere;
  std::vector<double> dims;

  static PrimitiveShape sphere(double radius) { return {ShapeKind::Sphere, {radius}}; }
  static PrimitiveShape box(double sx, double sy, double sz) { return {ShapeKind::Box, {sx, sy, sz}}; }
  static PrimitiveShape cylinder(double radius, double height) {
    return {ShapeKind::Cylinder, {radius, height}};
  }

  void validate() const;
  /// Total surface area in m^2.
  double surface_area() const;
};

struct SceneObject {
  int id = 0;
  PrimitiveShape shape;
  RigidPose pose;
};

struct Scene {
  std::vector<SceneObject> objects;
  double table_height = 0.0;

  void validate() const;
  const SceneObject* find(int object_id) const;
};

/// Sentinel label for table points in a rendered cloud.
inline constexpr int kTableLabel = -1;

/// Single-view point cloud. Points are in the camera frame; camera_pose maps
/// camera coordinates to world.
struct SceneCloud {
  MatX points;                     // N x 3
  std::vector<int> object_label;   // per point: object id, or kTableLabel
  RigidPose camera_pose;

  Eigen::Index size() const { return points.rows(); }
  Vec3 point(Eigen::Index i) const { return points.row(i).transpose(); }
  Vec3 point_world(Eigen::Index i) const { return camera_pose.apply(point(i)); }
};

/// Splittable deterministic seed derivation (splitmix64 step).
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace dexkit
