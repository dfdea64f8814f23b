#pragma once

#include "dexkit/types.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace dexkit::geometry {

/// Nearest rotation to M in Frobenius norm: the special orthogonal polar
/// factor U diag(1,1,det(UV^T)) V^T. Throws DegenerateInput when the factor
/// is not unique (zero matrix, or the two smallest singular values vanish).
Mat3 svd_project(const Mat3& m);

/// Greedy max-min farthest point sampling. First index is start_index, each
/// following index maximizes the distance to the selected set; ties resolve
/// to the lowest index. Deterministic.
std::vector<int> farthest_point_sample(const MatX& points, int count, int start_index);

struct SurfaceSample {
  MatX points;   // n x 3
  MatX normals;  // n x 3, outward unit
};

/// Area-uniform surface sampling of a primitive in its local frame.
SurfaceSample sample_surface(const PrimitiveShape& shape, int n, std::uint64_t seed);

/// Signed distance to a primitive in its local frame (negative inside).
double primitive_sdf(const PrimitiveShape& shape, const Vec3& p_local);

/// Signed distance to one posed object, world-frame query.
double object_sdf(const SceneObject& obj, const Vec3& p_world);

/// Min over scene objects of the per-object signed distance. When
/// include_table is set the table half-space z <= table_height is one more
/// participant (distance p.z - table_height).
double signed_distance(const Scene& scene, const Vec3& p, bool include_table = false);

/// Central-difference gradient of the scene SDF.
Vec3 signed_distance_gradient(const Scene& scene, const Vec3& p, bool include_table = false,
                              double h = 1e-6);

/// Unit directions quasi-uniform on the sphere (Fibonacci lattice).
MatX fibonacci_sphere(int n);

struct Camera {
  RigidPose pose;      // camera-to-world; +z is the optical axis
  int width = 64;
  int height = 64;
  double fov = 1.0;    // vertical field of view, radians
};

/// Ray-cast the scene with one ray per pixel. Nearest analytic hit per ray
/// becomes a cloud point (camera frame) labeled with its object id; table
/// plane hits get kTableLabel. Throws DegenerateInput if nothing is hit.
SceneCloud render_depth_cloud(const Scene& scene, const Camera& camera);

/// First hit of a single world-frame ray against one primitive.
/// Returns ray parameter t > 0, or a negative value when there is no hit.
double ray_primitive_hit(const SceneObject& obj, const Vec3& origin, const Vec3& dir);

}  // namespace dexkit::geometry
