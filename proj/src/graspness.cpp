#include "dexkit/graspness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "dexkit/geometry.hpp"

namespace dexkit::graspness {

void GraspCone::validate() const {
  if (aperture <= 0 || aperture >= M_PI) throw InvalidInput("cone aperture out of range");
  if (angle_half_decay_deg <= 0 || dist_half_decay <= 0)
    throw InvalidInput("cone half-decay constants must be positive");
  if (std::abs(axis.norm() - 1.0) > 1e-6) throw InvalidInput("cone axis must be unit");
}

GraspCone grasp_cone(const hand::HandModel& hand, const GraspLabel& label) {
  hand::FkResult fk = hand::forward_kinematics(hand, label.wrist, label.theta);
  GraspCone cone;
  cone.apex = fk.palm_center();
  cone.axis = fk.palm_forward();
  return cone;
}

double cone_vote(const GraspCone& cone, double theta, double d) {
  cone.validate();
  if (d < 0 || theta >= cone.aperture / 2.0) return 0.0;
  const double theta_deg = theta * 180.0 / M_PI;
  return std::exp(-std::log(2.0) / cone.angle_half_decay_deg * theta_deg -
                  std::log(2.0) / cone.dist_half_decay * d);
}

double cone_vote(const GraspCone& cone, const Vec3& p) {
  const Vec3 r = p - cone.apex;
  const double len = r.norm();
  if (len < 1e-12) return 1.0;
  const double d = r.dot(cone.axis);
  const double cos_theta = std::clamp(d / len, -1.0, 1.0);
  return cone_vote(cone, std::acos(cos_theta), d);
}

int seed_point_of(const GraspCone& cone, const MatX& object_points) {
  if (object_points.rows() == 0) throw InvalidInput("no object points given");
  if (object_points.cols() != 3) throw InvalidInput("points must be n x 3");
  int best = -1;
  double best_vote = 0.0;
  for (int i = 0; i < object_points.rows(); ++i) {
    const double v = cone_vote(cone, Vec3(object_points.row(i)));
    if (v > best_vote) {
      best_vote = v;
      best = i;
    }
  }
  if (best < 0) throw DegenerateInput("all cone votes are zero");
  return best;
}

std::vector<int> assign_seeds(const std::vector<GraspLabel>& labels,
                              const SceneCloud& cloud, const Scene& scene,
                              const hand::HandModel& hand, double min_vote) {
  std::vector<int> seeds(labels.size(), -1);
  for (size_t li = 0; li < labels.size(); ++li) {
    const GraspLabel& label = labels[li];
    if (scene.find(label.object_id) == nullptr)
      throw InvalidInput("grasp label references an unknown object");
    const GraspCone cone = grasp_cone(hand, label);
    int best = -1;
    double best_vote = 0.0;
    for (int i = 0; i < cloud.size(); ++i) {
      if (cloud.object_label[i] != label.object_id) continue;
      const double v = cone_vote(cone, cloud.point_world(i));
      if (v > best_vote) {
        best_vote = v;
        best = i;
      }
    }
    if (best >= 0 && best_vote >= min_vote) seeds[li] = best;
  }
  return seeds;
}

GraspnessField graspness_field(const std::vector<GraspLabel>& labels,
                               const SceneCloud& cloud, const Scene& scene,
                               const hand::HandModel& hand, double min_vote) {
  const int n = cloud.size();
  GraspnessField field;
  field.gs = VecX::Zero(n);
  field.is_object.resize(n);
  for (int i = 0; i < n; ++i) field.is_object[i] = cloud.object_label[i] != kTableLabel;

  VecX accum = VecX::Zero(n);
  const std::vector<int> seeds = assign_seeds(labels, cloud, scene, hand, min_vote);
  for (size_t li = 0; li < labels.size(); ++li) {
    if (seeds[li] < 0) continue;
    const Vec3 seed = cloud.point_world(seeds[li]);
    const int object_id = labels[li].object_id;
    for (int i = 0; i < n; ++i) {
      if (cloud.object_label[i] != object_id) continue;
      const double dist = (cloud.point_world(i) - seed).norm();
      accum[i] += std::pow(10.0, -150.0 * dist);
    }
  }
  for (int i = 0; i < n; ++i) field.gs[i] = std::log(0.001 + accum[i]);
  return field;
}

std::vector<int> propose_seeds(const GraspnessField& field, const SceneCloud& cloud,
                               int m) {
  if (field.size() != cloud.size())
    throw InvalidInput("field and cloud sizes disagree");
  if (m <= 0) throw InvalidInput("seed count must be positive");
  std::vector<int> object_idx;
  for (int i = 0; i < field.size(); ++i)
    if (field.is_object[i]) object_idx.push_back(i);
  if (object_idx.empty()) throw DegenerateInput("cloud has no object points");

  const int keep = static_cast<int>(
      std::ceil(0.01 * static_cast<double>(object_idx.size())));
  std::vector<int> order = object_idx;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (field.gs[a] != field.gs[b]) return field.gs[a] > field.gs[b];
    return a < b;
  });
  order.resize(std::min<size_t>(order.size(), static_cast<size_t>(keep)));

  // Keep cloud order inside the top set so FPS tie-breaking stays index-based,
  // then start the walk from the best-scored point.
  std::vector<int> top = order;
  std::sort(top.begin(), top.end());
  MatX pts(top.size(), 3);
  for (size_t i = 0; i < top.size(); ++i) pts.row(i) = cloud.point(top[i]);
  int start = 0;
  for (size_t i = 0; i < top.size(); ++i)
    if (top[i] == order[0]) start = static_cast<int>(i);

  const int count = std::min<int>(m, static_cast<int>(top.size()));
  std::vector<int> picked = geometry::farthest_point_sample(pts, count, start);
  std::vector<int> out(picked.size());
  for (size_t i = 0; i < picked.size(); ++i) out[i] = top[picked[i]];
  return out;
}

RelativeGrasp relative_grasp(const GraspLabel& label, const Vec3& seed_world,
                             const RigidPose& camera) {
  RelativeGrasp rel;
  rel.t = camera.rotation.transpose() * (label.wrist.translation - seed_world);
  rel.r = camera.rotation.transpose() * label.wrist.rotation;
  rel.theta = label.theta;
  return rel;
}

GraspLabel absolute_grasp(const RelativeGrasp& rel, const Vec3& seed_world,
                          const RigidPose& camera, int object_id) {
  GraspLabel label;
  label.wrist.translation = camera.rotation * rel.t + seed_world;
  label.wrist.rotation = camera.rotation * rel.r;
  label.theta = rel.theta;
  label.object_id = object_id;
  return label;
}

}  // namespace dexkit::graspness
