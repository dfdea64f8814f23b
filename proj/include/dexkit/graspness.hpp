#pragma once

#include "dexkit/hand.hpp"
#include "dexkit/types.hpp"

#include <vector>

namespace dexkit::graspness {

// A grasp label in world coordinates: wrist pose plus joint angles targeting
// one scene object.
struct GraspLabel {
  RigidPose wrist;
  VecX theta;
  int object_id = 0;
};

// Voting cone anchored at the palm. Points ahead of the palm receive a vote
// that halves every `angle_half_decay_deg` degrees off-axis and every
// `dist_half_decay` meters along the axis.
struct GraspCone {
  Vec3 apex = Vec3::Zero();
  Vec3 axis = Vec3::UnitY();
  double aperture = M_PI / 3.0;
  double angle_half_decay_deg = 10.0;
  double dist_half_decay = 0.015;

  void validate() const;
};

// Cone of a grasp label under a hand model: apex at the palm center, axis
// along the palm forward direction after FK at the label's pose and angles.
GraspCone grasp_cone(const hand::HandModel& hand, const GraspLabel& label);

// Vote of a cone for a world point: 0 outside the cone, otherwise
// exp(-(ln2/halving_angle)*theta_deg - (ln2/halving_dist)*d) where theta is
// the spanning angle and d the projected distance along the axis.
double cone_vote(const GraspCone& cone, const Vec3& p);

// Closed-form vote at a given spanning angle (radians) and projected
// distance. The point overload reduces to this.
double cone_vote(const GraspCone& cone, double theta, double d);

// Index of the highest-vote point (lowest index on ties). Throws
// DegenerateInput when every vote is zero.
int seed_point_of(const GraspCone& cone, const MatX& object_points);

struct GraspnessField {
  VecX gs;                       // natural-log scale, one entry per cloud point
  std::vector<bool> is_object;   // table points never accumulate score

  int size() const { return static_cast<int>(gs.size()); }
};

// Seed-point assignment for each label against the rendered cloud: index of
// the best-voted visible point of the label's own object, or -1 when the best
// vote falls below min_vote (occluded or facing away).
std::vector<int> assign_seeds(const std::vector<GraspLabel>& labels,
                              const SceneCloud& cloud, const Scene& scene,
                              const hand::HandModel& hand, double min_vote = 1e-4);

// Ground-truth graspness: each label's seed point spreads 10^(-150*dist) to
// the points of the same object and every point reports
// ln(0.001 + accumulated sum). Labels without a seed are skipped.
GraspnessField graspness_field(const std::vector<GraspLabel>& labels,
                               const SceneCloud& cloud, const Scene& scene,
                               const hand::HandModel& hand, double min_vote = 1e-4);

// Seed proposal: object points in the top 1% by score (ceiling count, ties by
// lowest index), farthest-point sampled down to at most m points. The walk
// starts at the highest-scoring point, so results are deterministic.
std::vector<int> propose_seeds(const GraspnessField& field, const SceneCloud& cloud,
                               int m);

// Wrist pose re-expressed in a seed-point frame whose axes follow the camera.
struct RelativeGrasp {
  Vec3 t = Vec3::Zero();
  Mat3 r = Mat3::Identity();
  VecX theta;
};

RelativeGrasp relative_grasp(const GraspLabel& label, const Vec3& seed_world,
                             const RigidPose& camera);

// Exact inverse of relative_grasp.
GraspLabel absolute_grasp(const RelativeGrasp& rel, const Vec3& seed_world,
                          const RigidPose& camera, int object_id);

}  // namespace dexkit::graspness
