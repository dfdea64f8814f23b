#include "dexkit/hand.hpp"

#include "dexkit/geometry.hpp"

#include <cmath>

namespace dexkit::hand {

void HandModel::validate() const {
  const int n = dof();
  if (open_pose.size() != n) throw InvalidInput("hand: open_pose size must equal DoF");
  for (int j = 0; j < n; ++j) {
    const Joint& joint = joints[j];
    if (joint.parent_link < 0 || joint.parent_link > j)
      throw InvalidInput("hand: joint parent must be an earlier link");
    if (!(joint.lower < joint.upper)) throw InvalidInput("hand: joint limits must satisfy lower < upper");
    if (std::abs(joint.axis.norm() - 1.0) > 1e-9) throw InvalidInput("hand: joint axis must be unit");
  }
  for (const auto& tip : fingertips)
    if (tip.link < 0 || tip.link > n) throw InvalidInput("hand: fingertip references invalid link");
  for (const auto& s : collision_spheres) {
    if (s.link < 0 || s.link > n) throw InvalidInput("hand: collision sphere references invalid link");
    if (!(s.radius > 0.0)) throw InvalidInput("hand: collision sphere radius must be positive");
  }
}

VecX HandModel::clamp_to_limits(const VecX& theta, bool* clamped) const {
  VecX out = theta;
  bool moved = false;
  for (int j = 0; j < dof(); ++j) {
    const double c = std::clamp(theta(j), joints[j].lower, joints[j].upper);
    if (c != theta(j)) moved = true;
    out(j) = c;
  }
  if (clamped) *clamped = moved;
  return out;
}

namespace {

Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

}  // namespace

FkResult forward_kinematics(const HandModel& hand, const RigidPose& wrist, const VecX& theta) {
  if (theta.size() != hand.dof()) throw InvalidInput("forward_kinematics: theta size mismatch");
  FkResult out;
  const VecX q = hand.clamp_to_limits(theta, &out.clamped);

  out.link_frames.resize(hand.dof() + 1);
  out.link_frames[0] = wrist;
  for (int j = 0; j < hand.dof(); ++j) {
    const Joint& joint = hand.joints[j];
    RigidPose rotated{Vec3::Zero(), axis_angle(joint.axis, q(j))};
    out.link_frames[j + 1] = out.link_frames[joint.parent_link].compose(joint.offset).compose(rotated);
  }

  out.palm = out.link_frames[0].compose(hand.palm_frame);
  out.contact_frames.reserve(hand.fingertips.size());
  for (const auto& tip : hand.fingertips) {
    RigidPose f = out.link_frames[tip.link];
    f.translation = f.apply(tip.offset);
    out.contact_frames.push_back(f);
  }
  out.spheres.reserve(hand.collision_spheres.size());
  for (const auto& s : hand.collision_spheres)
    out.spheres.push_back({out.link_frames[s.link].apply(s.center), s.radius});
  return out;
}

double penetration_depth(const std::vector<WorldSphere>& spheres, const Scene& scene,
                         bool include_table) {
  double worst = 0.0;
  for (const auto& s : spheres) {
    const double d = geometry::signed_distance(scene, s.center, include_table);
    worst = std::max(worst, s.radius - d);
  }
  return std::max(0.0, worst);
}

namespace {

void add_finger(HandModel& hand, const Vec3& base, double dir_z, double abduction_range) {
  // dir_z = +1: finger extends +z and curls about -x toward +y (the approach
  // axis); dir_z = -1 mirrors this for the thumb.
  const int base_link = 0;
  const Vec3 flex_axis = (dir_z > 0) ? Vec3(-1, 0, 0) : Vec3(1, 0, 0);
  const int first = hand.dof();

  Joint abduction{"", base_link, {base, Mat3::Identity()}, Vec3(0, 1, 0), -abduction_range,
                  abduction_range};
  Joint flex1{"", first + 1, RigidPose::identity(), flex_axis, -0.2, 1.9};
  Joint flex2{"", first + 2, {Vec3(0, 0, dir_z * 0.045), Mat3::Identity()}, flex_axis, 0.0, 1.9};
  Joint flex3{"", first + 3, {Vec3(0, 0, dir_z * 0.030), Mat3::Identity()}, flex_axis, 0.0, 1.6};
  hand.joints.insert(hand.joints.end(), {abduction, flex1, flex2, flex3});

  // The fingertip contact point sits on the surface of the tip sphere, so a
  // touching fingertip leaves the sphere itself collision-free.
  hand.fingertips.push_back({first + 4, Vec3(0, 0, dir_z * 0.0265)});
  hand.collision_spheres.push_back({first + 2, Vec3(0, 0, dir_z * 0.0225), 0.010});
  hand.collision_spheres.push_back({first + 3, Vec3(0, 0, dir_z * 0.015), 0.009});
  hand.collision_spheres.push_back({first + 4, Vec3(0, 0, dir_z * 0.010), 0.008});
  hand.collision_spheres.push_back({first + 4, Vec3(0, 0, dir_z * 0.019), 0.007});
}

}  // namespace

HandModel make_default_hand16() {
  HandModel hand;
  hand.name = "hand16";
  hand.palm_frame = RigidPose::identity();

  add_finger(hand, Vec3(-0.032, 0, 0.050), +1.0, 0.35);
  add_finger(hand, Vec3(0.000, 0, 0.052), +1.0, 0.35);
  add_finger(hand, Vec3(0.032, 0, 0.050), +1.0, 0.35);
  add_finger(hand, Vec3(0.000, 0, -0.050), -1.0, 0.50);  // thumb

  static const char* fingers[] = {"index", "middle", "ring", "thumb"};
  static const char* parts[] = {"abd", "mcp", "pip", "dip"};
  for (int f = 0; f < 4; ++f)
    for (int k = 0; k < 4; ++k)
      hand.joints[4 * f + k].name = std::string(fingers[f]) + "_" + parts[k];

  // Palm slab: spheres flush with the contact face at y=0.
  for (double x : {-0.032, 0.0, 0.032})
    for (double z : {-0.035, 0.0, 0.035})
      hand.collision_spheres.push_back({0, Vec3(x, -0.013, z), 0.013});

  hand.open_pose.resize(16);
  for (int f = 0; f < 4; ++f) {
    hand.open_pose(4 * f + 0) = 0.0;
    hand.open_pose(4 * f + 1) = 0.35;
    hand.open_pose(4 * f + 2) = 0.30;
    hand.open_pose(4 * f + 3) = 0.20;
  }
  hand.validate();
  return hand;
}

HandModel make_default_gripper1() {
  HandModel hand;
  hand.name = "gripper1";
  hand.palm_frame = RigidPose::identity();

  // Fixed jaw along +y with its pad at z = +0.0475; the swinging jaw pivots
  // at z = -0.05 and closes toward the fixed one as the angle grows, so the
  // open aperture is about 9.5 cm.
  hand.joints.push_back({"jaw", 0, {Vec3(0, 0, -0.05), Mat3::Identity()}, Vec3(1, 0, 0), 0.0, 1.2});

  // Contact points sit on the inner pad surfaces (facing each other).
  hand.fingertips.push_back({0, Vec3(0, 0.055, 0.0475)});
  hand.fingertips.push_back({1, Vec3(0, 0.055, 0.003)});

  hand.collision_spheres.push_back({0, Vec3(0, -0.014, 0.0), 0.014});
  hand.collision_spheres.push_back({0, Vec3(0, 0.030, 0.055), 0.0075});
  hand.collision_spheres.push_back({0, Vec3(0, 0.055, 0.055), 0.0075});
  hand.collision_spheres.push_back({1, Vec3(0, 0.030, -0.0045), 0.0075});
  hand.collision_spheres.push_back({1, Vec3(0, 0.055, -0.0045), 0.0075});

  hand.open_pose.resize(1);
  hand.open_pose(0) = 0.0;
  hand.validate();
  return hand;
}

}  // namespace dexkit::hand
