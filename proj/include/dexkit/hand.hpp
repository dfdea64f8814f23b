#pragma once

#include "dexkit/types.hpp"

#include <string>
#include <vector>

namespace dexkit::hand {

struct Joint {
  std::string name;
  int parent_link = 0;   // link whose frame carries this joint
  RigidPose offset;      // parent link frame -> joint frame, at zero angle
  Vec3 axis = Vec3::UnitZ();
  double lower = 0.0;
  double upper = 0.0;
};

struct ContactPoint {
  int link = 0;
  Vec3 offset = Vec3::Zero();  // in link frame
};

struct CollisionSphere {
  int link = 0;
  Vec3 center = Vec3::Zero();  // in link frame
  double radius = 0.0;
};

/// Revolute chain. Link 0 is the palm (rigid with the wrist); joint j spawns
/// link j+1. The palm frame's +y axis points forward out of the palm and is
/// the approach direction.
struct HandModel {
  std::string name;
  std::vector<Joint> joints;
  RigidPose palm_frame;             // in link-0 coordinates
  VecX open_pose;                   // joint angles of the relaxed open hand
  std::vector<ContactPoint> fingertips;
  std::vector<CollisionSphere> collision_spheres;

  int dof() const { return static_cast<int>(joints.size()); }
  void validate() const;

  /// Clamp angles into joint limits. Sets `clamped` if anything moved.
  VecX clamp_to_limits(const VecX& theta, bool* clamped = nullptr) const;
};

struct WorldSphere {
  Vec3 center;
  double radius;
};

struct FkResult {
  std::vector<RigidPose> link_frames;   // dof+1 entries, world
  std::vector<RigidPose> contact_frames;  // fingertip frames, world
  RigidPose palm;                        // world
  std::vector<WorldSphere> spheres;      // collision spheres, world
  bool clamped = false;                  // joint limits were enforced

  Vec3 palm_center() const { return palm.translation; }
  /// Approach direction: the palm frame's +y axis in world coordinates.
  Vec3 palm_forward() const { return palm.rotation.col(1); }
};

/// Standard revolute-chain composition. Angles outside limits are clamped
/// (reported through FkResult::clamped).
FkResult forward_kinematics(const HandModel& hand, const RigidPose& wrist, const VecX& theta);

/// Max over collision spheres of max(0, radius - sdf(center)).
/// Zero means collision-free.
double penetration_depth(const std::vector<WorldSphere>& spheres, const Scene& scene,
                         bool include_table = false);

/// Built-in 16-DoF four-finger hand (4 joints per finger, opposing thumb).
HandModel make_default_hand16();
/// Built-in 1-DoF pivoting-jaw gripper; the single angle plays the role of
/// the width parameter.
HandModel make_default_gripper1();

}  // namespace dexkit::hand
