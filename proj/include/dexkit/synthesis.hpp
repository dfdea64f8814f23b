#pragma once

#include "dexkit/graspness.hpp"
#include "dexkit/hand.hpp"
#include "dexkit/wrench.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dexkit::synthesis {

// Initialization lattice around one surface grasp point: approach directions
// from a Fibonacci sphere, palm standoffs (retreat minus depth), and in-plane
// rolls about the approach axis.
struct InitGrid {
  int n_approach = 256;
  int n_depth = 4;
  std::vector<double> depths = {0.0, 0.01, 0.02, 0.03};
  int n_inplane = 12;
  double retreat = 0.08;

  void validate() const;
};

struct OptimizerConfig {
  int iterations = 600;
  double fd_step = 1e-4;
  double step_translation = 0.002;  // meters per iteration along the gradient
  double step_rotation = 0.02;      // radians
  double step_joints = 0.02;        // radians
  double w_penetration = 60.0;
  double w_surface = 20.0;
  double w_limits = 10.0;
  double tau_fc = 0.05;
  double tau_lambda = 0.1;
  double bernoulli_p = 0.9;
  double contact_range = 0.01;  // fingertips farther than this make no contact
  bool record_trace = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct InitPose {
  RigidPose wrist;
  VecX theta;
};

// One wrist pose per (approach, depth, in-plane) triple. The palm forward
// axis points at the grasp point along -approach and the palm center sits at
// grasp_point + approach * (retreat - depth). theta starts at the open pose.
std::vector<InitPose> init_pose_grid(const Vec3& grasp_point, const InitGrid& grid,
                                     const hand::HandModel& hand);

struct GraspCandidate {
  RigidPose wrist;
  VecX theta;
  double energy = 0.0;       // final energy under the last Bernoulli draw
  double energy_init = 0.0;  // energy at the initialization, same draw policy
  double p_t = 0.0;          // optimal scaled wrench norm at the final contacts
  int n_contacts = 0;
  int init_index = 0;
  int object_id = 0;
  std::vector<double> energy_trace;  // filled when cfg.record_trace is set
};

// Fingertips projected to their nearest surface point along the distance
// gradient; tips farther than max_dist contribute nothing. Directions are the
// inward normals.
wrench::ContactSet assign_contacts(const hand::FkResult& fk, const Scene& scene,
                                   double max_dist = 0.01);

struct SynthesisResult {
  std::vector<GraspCandidate> candidates;
  std::vector<std::string> diagnostics;  // one line per dropped init
};

// Gradient descent on
//   E = E_fc + w_pen * penetration + w_surf * sum |sdf(tip)| + w_lim * limit overshoot
// over (translation, body-frame rotation, joints) with central finite
// differences per coordinate and a halving backtracking guard, so the energy
// is non-increasing at a fixed Bernoulli draw. The shape is grasped in its
// canonical frame (centered at the origin). Joint angles stay clamped to
// their limits. Non-finite energies drop the candidate with a diagnostic.
SynthesisResult synthesize(const PrimitiveShape& shape, const hand::HandModel& hand,
                           const std::vector<InitPose>& inits, const OptimizerConfig& cfg);

struct FilterStats {
  int n_in = 0;
  int n_collision_free = 0;  // penetration below the 2 mm bound
  int n_stable = 0;          // additionally resists gravity in all 6 directions
};

struct FilterResult {
  std::vector<GraspCandidate> kept;
  FilterStats stats;
};

// Stage-one filter on the isolated object: keep candidates whose collision
// spheres penetrate less than 2 mm and whose contacts can hold the object
// against gravity applied along all six axis directions.
FilterResult filter_grasps(const std::vector<GraspCandidate>& candidates,
                           const Scene& scene, int object_id,
                           const hand::HandModel& hand, double mu = 0.2,
                           double mass = 0.1);

struct SceneLabelRecord {
  int scene_id = 0;
  int object_id = 0;
  graspness::GraspLabel label;  // wrist in world frame
  double energy = 0.0;
  double p_t = 0.0;
};

// Stage-two filter: every per-object candidate (in the object's canonical
// frame) is carried into the scene by its object's pose and kept only when
// the hand stays collision-free against the whole scene and the table.
std::vector<SceneLabelRecord> compose_scene_labels(
    const std::map<int, std::vector<GraspCandidate>>& per_object, const Scene& scene,
    const hand::HandModel& hand, int scene_id = 0, double max_penetration = 0.002);

}  // namespace dexkit::synthesis
