#include "dexkit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace dexkit {

void PrimitiveShape::validate() const {
  const size_t want = kind == ShapeKind::Sphere ? 1 : kind == ShapeKind::Box ? 3 : 2;
  if (dims.size() != want) throw InvalidInput("primitive has wrong dimension count");
  for (double d : dims)
    if (!(d > 0.0) || !std::isfinite(d)) throw InvalidInput("primitive dimensions must be positive");
}

double PrimitiveShape::surface_area() const {
  switch (kind) {
    case ShapeKind::Sphere:
      return 4.0 * M_PI * dims[0] * dims[0];
    case ShapeKind::Box:
      return 2.0 * (dims[0] * dims[1] + dims[1] * dims[2] + dims[0] * dims[2]);
    case ShapeKind::Cylinder:
      return 2.0 * M_PI * dims[0] * dims[1] + 2.0 * M_PI * dims[0] * dims[0];
  }
  return 0.0;
}

void Scene::validate() const {
  std::vector<int> ids;
  for (const auto& obj : objects) {
    obj.shape.validate();
    if (!obj.pose.is_valid(1e-7)) throw InvalidInput("object pose rotation is not orthonormal");
    ids.push_back(obj.id);
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw InvalidInput("duplicate object id in scene");
}

const SceneObject* Scene::find(int object_id) const {
  for (const auto& obj : objects)
    if (obj.id == object_id) return &obj;
  return nullptr;
}

}  // namespace dexkit

namespace dexkit::geometry {

Mat3 svd_project(const Mat3& m) {
  if (!m.allFinite()) throw InvalidInput("svd_project: matrix has non-finite entries");
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sigma = svd.singularValues();
  // The nearest rotation is unique iff sigma_2 + sigma_3 > 0 (with the sign
  // fix, uniqueness additionally needs sigma_2 > 0 when det < 0).
  if (sigma(0) < 1e-12 || sigma(1) + sigma(2) < 1e-12)
    throw DegenerateInput("svd_project: polar factor is ambiguous for near-singular input");
  Mat3 uvt = svd.matrixU() * svd.matrixV().transpose();
  if (uvt.determinant() < 0.0) {
    if (sigma(1) - sigma(2) < 1e-12 && sigma(2) < 1e-12)
      throw DegenerateInput("svd_project: reflection with ambiguous nearest rotation");
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1.0;
    uvt = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return uvt;
}

std::vector<int> farthest_point_sample(const MatX& points, int count, int start_index) {
  const int n = static_cast<int>(points.rows());
  if (count < 1 || count > n) throw InvalidInput("farthest_point_sample: count out of range");
  if (start_index < 0 || start_index >= n)
    throw InvalidInput("farthest_point_sample: start index out of range");

  std::vector<int> selected;
  selected.reserve(count);
  selected.push_back(start_index);
  VecX min_dist2 = (points.rowwise() - points.row(start_index)).rowwise().squaredNorm();

  while (static_cast<int>(selected.size()) < count) {
    int best = 0;
    double best_d = -1.0;
    for (int i = 0; i < n; ++i) {
      if (min_dist2(i) > best_d) {
        best_d = min_dist2(i);
        best = i;
      }
    }
    selected.push_back(best);
    min_dist2 = min_dist2.cwiseMin(
        (points.rowwise() - points.row(best)).rowwise().squaredNorm().eval());
  }
  return selected;
}

namespace {

Vec3 sample_sphere_dir(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(gauss(rng), gauss(rng), gauss(rng));
  } while (v.norm() < 1e-12);
  return v.normalized();
}

}  // namespace

SurfaceSample sample_surface(const PrimitiveShape& shape, int n, std::uint64_t seed) {
  if (n <= 0) throw InvalidInput("sample_surface: n must be positive");
  shape.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  SurfaceSample out;
  out.points.resize(n, 3);
  out.normals.resize(n, 3);

  switch (shape.kind) {
    case ShapeKind::Sphere: {
      const double r = shape.dims[0];
      for (int i = 0; i < n; ++i) {
        const Vec3 d = sample_sphere_dir(rng);
        out.points.row(i) = (r * d).transpose();
        out.normals.row(i) = d.transpose();
      }
      break;
    }
    case ShapeKind::Box: {
      const Vec3 half(0.5 * shape.dims[0], 0.5 * shape.dims[1], 0.5 * shape.dims[2]);
      // Face order: -x, +x, -y, +y, -z, +z.
      const double areas[3] = {shape.dims[1] * shape.dims[2], shape.dims[0] * shape.dims[2],
                               shape.dims[0] * shape.dims[1]};
      const double total = 2.0 * (areas[0] + areas[1] + areas[2]);
      for (int i = 0; i < n; ++i) {
        double pick = uni(rng) * total;
        int face = 5;
        for (int f = 0; f < 6; ++f) {
          const double a = areas[f / 2];
          if (pick < a) {
            face = f;
            break;
          }
          pick -= a;
        }
        const int axis = face / 2;
        const double sign = (face % 2 == 0) ? -1.0 : 1.0;
        const int u = (axis + 1) % 3, v = (axis + 2) % 3;
        Vec3 p;
        p(axis) = sign * half(axis);
        p(u) = (2.0 * uni(rng) - 1.0) * half(u);
        p(v) = (2.0 * uni(rng) - 1.0) * half(v);
        Vec3 nrm = Vec3::Zero();
        nrm(axis) = sign;
        out.points.row(i) = p.transpose();
        out.normals.row(i) = nrm.transpose();
      }
      break;
    }
    case ShapeKind::Cylinder: {
      const double r = shape.dims[0], h = shape.dims[1];
      const double lateral = 2.0 * M_PI * r * h;
      const double cap = M_PI * r * r;
      const double total = lateral + 2.0 * cap;
      for (int i = 0; i < n; ++i) {
        const double pick = uni(rng) * total;
        if (pick < lateral) {
          const double phi = 2.0 * M_PI * uni(rng);
          const double z = (uni(rng) - 0.5) * h;
          const Vec3 nrm(std::cos(phi), std::sin(phi), 0.0);
          out.points.row(i) = Vec3(r * nrm.x(), r * nrm.y(), z).transpose();
          out.normals.row(i) = nrm.transpose();
        } else {
          const double sign = (pick < lateral + cap) ? -1.0 : 1.0;
          const double rho = r * std::sqrt(uni(rng));
          const double phi = 2.0 * M_PI * uni(rng);
          out.points.row(i) =
              Vec3(rho * std::cos(phi), rho * std::sin(phi), sign * 0.5 * h).transpose();
          out.normals.row(i) = Vec3(0.0, 0.0, sign).transpose();
        }
      }
      break;
    }
  }
  return out;
}

double primitive_sdf(const PrimitiveShape& shape, const Vec3& p) {
  switch (shape.kind) {
    case ShapeKind::Sphere:
      return p.norm() - shape.dims[0];
    case ShapeKind::Box: {
      const Vec3 half(0.5 * shape.dims[0], 0.5 * shape.dims[1], 0.5 * shape.dims[2]);
      const Vec3 q = p.cwiseAbs() - half;
      const double outside = q.cwiseMax(0.0).norm();
      const double inside = std::min(q.maxCoeff(), 0.0);
      return outside + inside;
    }
    case ShapeKind::Cylinder: {
      const double r = shape.dims[0], h = shape.dims[1];
      const double dr = std::hypot(p.x(), p.y()) - r;
      const double dz = std::abs(p.z()) - 0.5 * h;
      const double outside = std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
      const double inside = std::min(std::max(dr, dz), 0.0);
      return outside + inside;
    }
  }
  return std::numeric_limits<double>::infinity();
}

double object_sdf(const SceneObject& obj, const Vec3& p_world) {
  return primitive_sdf(obj.shape, obj.pose.apply_inverse(p_world));
}

double signed_distance(const Scene& scene, const Vec3& p, bool include_table) {
  if (!p.allFinite()) throw InvalidInput("signed_distance: non-finite query point");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& obj : scene.objects) best = std::min(best, object_sdf(obj, p));
  if (include_table) best = std::min(best, p.z() - scene.table_height);
  return best;
}

Vec3 signed_distance_gradient(const Scene& scene, const Vec3& p, bool include_table, double h) {
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 lo = p, hi = p;
    lo(a) -= h;
    hi(a) += h;
    g(a) = (signed_distance(scene, hi, include_table) - signed_distance(scene, lo, include_table)) /
           (2.0 * h);
  }
  return g;
}

MatX fibonacci_sphere(int n) {
  if (n < 1) throw InvalidInput("fibonacci_sphere: n must be positive");
  MatX dirs(n, 3);
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = (n == 1) ? 0.0 : 1.0 - 2.0 * i / static_cast<double>(n - 1);
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    dirs.row(i) = Vec3(rho * std::cos(phi), rho * std::sin(phi), z).transpose();
  }
  return dirs;
}

namespace {

// Smallest positive root of a*t^2 + b*t + c = 0, or -1.
double positive_quadratic_root(double a, double b, double c) {
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return -1.0;
  const double s = std::sqrt(disc);
  const double t0 = (-b - s) / (2.0 * a);
  const double t1 = (-b + s) / (2.0 * a);
  if (t0 > 1e-9) return t0;
  if (t1 > 1e-9) return t1;
  return -1.0;
}

double ray_hit_local(const PrimitiveShape& shape, const Vec3& o, const Vec3& d) {
  switch (shape.kind) {
    case ShapeKind::Sphere: {
      const double r = shape.dims[0];
      return positive_quadratic_root(d.squaredNorm(), 2.0 * o.dot(d), o.squaredNorm() - r * r);
    }
    case ShapeKind::Box: {
      const Vec3 half(0.5 * shape.dims[0], 0.5 * shape.dims[1], 0.5 * shape.dims[2]);
      double tmin = -std::numeric_limits<double>::infinity();
      double tmax = std::numeric_limits<double>::infinity();
      for (int a = 0; a < 3; ++a) {
        if (std::abs(d(a)) < 1e-15) {
          if (std::abs(o(a)) > half(a)) return -1.0;
          continue;
        }
        double t0 = (-half(a) - o(a)) / d(a);
        double t1 = (half(a) - o(a)) / d(a);
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return -1.0;
      }
      if (tmin > 1e-9) return tmin;
      if (tmax > 1e-9) return tmax;
      return -1.0;
    }
    case ShapeKind::Cylinder: {
      const double r = shape.dims[0], hh = 0.5 * shape.dims[1];
      double best = std::numeric_limits<double>::infinity();
      const double a = d.x() * d.x() + d.y() * d.y();
      if (a > 1e-15) {
        const double t = positive_quadratic_root(
            a, 2.0 * (o.x() * d.x() + o.y() * d.y()), o.x() * o.x() + o.y() * o.y() - r * r);
        if (t > 0.0 && std::abs(o.z() + t * d.z()) <= hh) best = std::min(best, t);
      }
      if (std::abs(d.z()) > 1e-15) {
        for (const double zcap : {-hh, hh}) {
          const double t = (zcap - o.z()) / d.z();
          if (t > 1e-9) {
            const Vec3 p = o + t * d;
            if (p.x() * p.x() + p.y() * p.y() <= r * r) best = std::min(best, t);
          }
        }
      }
      return std::isfinite(best) ? best : -1.0;
    }
  }
  return -1.0;
}

}  // namespace

double ray_primitive_hit(const SceneObject& obj, const Vec3& origin, const Vec3& dir) {
  // Rotation preserves the parameterization, so t transfers directly.
  const Vec3 o = obj.pose.apply_inverse(origin);
  const Vec3 d = obj.pose.rotation.transpose() * dir;
  return ray_hit_local(obj.shape, o, d);
}

SceneCloud render_depth_cloud(const Scene& scene, const Camera& camera) {
  if (camera.width < 16 || camera.height < 16)
    throw InvalidInput("render_depth_cloud: grid must be at least 16x16");
  if (camera.pose.translation.z() <= scene.table_height)
    throw InvalidInput("render_depth_cloud: camera must be above the table");

  const double tan_half = std::tan(0.5 * camera.fov);
  const double aspect = static_cast<double>(camera.width) / camera.height;
  const Vec3 origin = camera.pose.translation;

  std::vector<Vec3> pts;
  std::vector<int> labels;
  pts.reserve(static_cast<size_t>(camera.width) * camera.height);

  for (int row = 0; row < camera.height; ++row) {
    for (int col = 0; col < camera.width; ++col) {
      const double u = (2.0 * (col + 0.5) / camera.width - 1.0) * tan_half * aspect;
      const double v = (2.0 * (row + 0.5) / camera.height - 1.0) * tan_half;
      const Vec3 dir_cam = Vec3(u, v, 1.0).normalized();
      const Vec3 dir = camera.pose.rotation * dir_cam;

      double best_t = std::numeric_limits<double>::infinity();
      int best_label = std::numeric_limits<int>::min();
      for (const auto& obj : scene.objects) {
        const double t = ray_primitive_hit(obj, origin, dir);
        if (t > 0.0 && t < best_t) {
          best_t = t;
          best_label = obj.id;
        }
      }
      if (std::abs(dir.z()) > 1e-15) {
        const double t = (scene.table_height - origin.z()) / dir.z();
        if (t > 1e-9 && t < best_t) {
          best_t = t;
          best_label = kTableLabel;
        }
      }
      if (std::isfinite(best_t)) {
        pts.push_back(camera.pose.apply_inverse(origin + best_t * dir));
        labels.push_back(best_label);
      }
    }
  }
  if (pts.empty()) throw DegenerateInput("render_depth_cloud: no ray hit anything");

  SceneCloud cloud;
  cloud.points.resize(static_cast<Eigen::Index>(pts.size()), 3);
  for (size_t i = 0; i < pts.size(); ++i) cloud.points.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  cloud.object_label = std::move(labels);
  cloud.camera_pose = camera.pose;
  return cloud;
}

}  // namespace dexkit::geometry
