#pragma once

#include "dexkit/types.hpp"

#include <functional>
#include <vector>

namespace dexkit::diffusion {

using Vec12 = Eigen::Matrix<double, 12, 1>;
inline constexpr int kWristDim = 12;
inline constexpr double kTransScale = 25.0;

// Forward-process variance tables. beta ramps linearly from beta_min at step
// 1 to beta_max at step t_train; alpha_bar is the running product of
// (1 - beta). Inference walks a coarser grid, so t_inference must divide
// t_train.
struct DiffusionSchedule {
  double beta_min = 0.0001;
  double beta_max = 0.02;
  int t_train = 1000;
  int t_inference = 200;
  std::vector<double> beta;       // beta[i-1] holds step i
  std::vector<double> alpha_bar;  // alpha_bar[i-1] holds step i

  static DiffusionSchedule make(double beta_min = 0.0001, double beta_max = 0.02,
                                int t_train = 1000, int t_inference = 200);
  void validate() const;

  double beta_at(int i) const;       // steps are 1-based
  double alpha_bar_at(int i) const;

  // Continuous time t in (0, 1] maps to the nearest training step.
  int index_of(double t) const;
  double beta_at_time(double t) const { return beta_at(index_of(t)); }
  double alpha_bar_at_time(double t) const { return alpha_bar_at(index_of(t)); }
};

// 12D wrist embedding: scaled translation followed by the rotation rows.
Vec12 embed_wrist(const Vec3& t, const Mat3& r, double k_trans = kTransScale);

struct WristPose {
  Vec3 t = Vec3::Zero();
  Mat3 r = Mat3::Identity();
};

// Inverse embedding; the rotation block is projected back onto SO(3), so
// perturbed vectors still yield a proper rotation.
WristPose unembed_wrist(const Vec12& g, double k_trans = kTransScale);

// Forward noising at training step i: sqrt(abar)*g + sqrt(1-abar)*eps.
Vec12 noise_sample(const Vec12& g, int i, const DiffusionSchedule& sched, const Vec12& eps);

// Velocity target at step i: sqrt(abar)*eps - sqrt(1-abar)*g.
Vec12 velocity_target(const Vec12& g, int i, const DiffusionSchedule& sched, const Vec12& eps);

// Denoising drift; conditioning features are baked into the callable.
using VelocityField = std::function<Vec12(const Vec12& g_hat, double t)>;

struct DenoiseResult {
  Vec12 g = Vec12::Zero();     // embedded vector after the final step
  WristPose pose;              // unembedded, rotation projected
  std::vector<Vec12> trajectory;  // when recorded: t = 1 first, t = 0 last
};

// Probability-flow sampling: Euler steps of
//   g^{t-dt} = g^t - (t_train * beta_t * sqrt(abar_t) / (2 sqrt(1-abar_t))) * v * dt
// from t = 1 down to 0 with dt = 1/t_inference. Throws DegenerateInput on a
// non-finite field output, reporting the step.
DenoiseResult denoise(const VelocityField& v, const Vec12& g1,
                      const DiffusionSchedule& sched, bool record_trajectory = false);

struct SampleResult {
  Vec12 g = Vec12::Zero();
  WristPose pose;
  double log_p = 0.0;
};

// Denoise and accumulate the likelihood along the same trajectory:
//   log p = log N(g^1; 0, I) + sum_steps Tr(d(drift)/dg) * dt,
// the trace taken exactly via 12 central finite differences of the field.
// Contracting flows therefore raise the reported density.
SampleResult sample_with_likelihood(const VelocityField& v, const Vec12& g1,
                                    const DiffusionSchedule& sched, double fd_step = 1e-4);

// Likelihood only, for callers that already hold the sample.
double log_prob(const VelocityField& v, const Vec12& g1, const DiffusionSchedule& sched,
                double fd_step = 1e-4);

// Standard-normal log density in 12 dimensions.
double log_normal_12(const Vec12& x);

// Proposal score: log-likelihood plus eta times the seed's graspness.
double rank_score(double log_p, double gs, double eta = 10.0);

}  // namespace dexkit::diffusion
