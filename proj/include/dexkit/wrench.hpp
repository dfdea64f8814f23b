#pragma once

#include "dexkit/types.hpp"

#include <vector>

namespace dexkit::wrench {

// A set of point contacts on one object. `points` are world positions (n x 3)
// and `directions` are unit force directions (n x 3) pressing into the object,
// i.e. the negated outward surface normal at each contact.
struct ContactSet {
  MatX points;
  MatX directions;

  int size() const { return static_cast<int>(points.rows()); }
  void validate() const;
};

// Maps stacked contact forces (3n) to the net object wrench (6): top block of
// column triple i is the identity, bottom block is skew(p_i - ref). Torques
// are taken about `ref`, typically the object frame origin.
MatX grasp_matrix(const ContactSet& contacts, const Vec3& ref);

struct ContactScaleResult {
  double p_t = 0.0;      // minimal wrench norm over admissible scalings
  VecX lambda;           // optimal per-contact scaling, max entry is 1
};

// Solves min_lambda ||G (lambda (x) c)||_2 subject to max_i lambda_i = 1 and
// lambda_i >= 0, where (x) scales each contact direction by its lambda.
// The feasible set splits into faces lambda_j = 1; on each face the problem is
// a bound-constrained least squares in the remaining variables, solved exactly
// by enumerating active sets (each variable free, at 0, or at 1). A projected
// gradient refinement guards the degenerate-rank corner cases.
ContactScaleResult optimal_contact_scale(const ContactSet& contacts, const Vec3& ref);

struct FcEnergyResult {
  double value = 0.0;
  double p_t = 0.0;
  VecX lambda;
  bool regularized = false;  // true when the scaled-measure branch was used
};

// Force-closure energy with a stochastic branch choice. The scaled measure
// p_t replaces the plain ||G c||_2 only when the caller-supplied Bernoulli
// draw passes, p_t < tau_fc, and every optimal scale stays above tau_lambda.
FcEnergyResult fc_energy(const ContactSet& contacts, const Vec3& ref,
                         bool bernoulli_pass, double tau_fc = 0.05,
                         double tau_lambda = 0.1);

// Discretized friction cone at one contact: rows are the n_edges edge
// directions c + mu * t_k for tangents t_k evenly spaced around c. Edges are
// deliberately not normalized so each edge coefficient equals its normal-force
// contribution. The tangent basis is a deterministic function of c.
MatX friction_cone_edges(const Vec3& direction, double mu, int n_edges = 8);

struct GravityCheckConfig {
  double mu = 0.2;
  double mass = 0.1;
  double gravity = 9.81;
  double force_cap = 10.0;  // per-contact normal force bound, newtons
  int cone_edges = 8;
};

// Quasi-static hold test: the contact forces, each constrained to its
// discretized friction cone and capped in normal force, must be able to
// balance the object's weight applied along all six axis directions in turn.
// Each direction is a feasibility LP solved with a phase-1 simplex.
bool resists_gravity_6dir(const ContactSet& contacts, const Vec3& ref,
                          const GravityCheckConfig& config = {});

// Single-direction variant used by the 6-direction check; `load` is the
// external force applied at `ref` that the contacts must cancel.
bool can_balance_force(const ContactSet& contacts, const Vec3& ref,
                       const Vec3& load, const GravityCheckConfig& config = {});

}  // namespace dexkit::wrench
