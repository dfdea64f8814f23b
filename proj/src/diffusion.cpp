#include "dexkit/diffusion.hpp"

#include "dexkit/geometry.hpp"

#include <cmath>
#include <string>

namespace dexkit::diffusion {

DiffusionSchedule DiffusionSchedule::make(double beta_min, double beta_max,
                                          int t_train, int t_inference) {
  DiffusionSchedule s;
  s.beta_min = beta_min;
  s.beta_max = beta_max;
  s.t_train = t_train;
  s.t_inference = t_inference;
  if (t_train < 2) throw InvalidInput("schedule: t_train must be at least 2");
  s.beta.resize(t_train);
  s.alpha_bar.resize(t_train);
  double prod = 1.0;
  for (int i = 1; i <= t_train; ++i) {
    const double frac = static_cast<double>(i - 1) / static_cast<double>(t_train - 1);
    const double b = beta_min + frac * (beta_max - beta_min);
    s.beta[i - 1] = b;
    prod *= 1.0 - b;
    s.alpha_bar[i - 1] = prod;
  }
  s.validate();
  return s;
}

void DiffusionSchedule::validate() const {
  if (t_train < 2) throw InvalidInput("schedule: t_train must be at least 2");
  if (t_inference < 1) throw InvalidInput("schedule: t_inference must be positive");
  if (t_train % t_inference != 0)
    throw InvalidInput("schedule: t_inference must divide t_train");
  if (!(beta_min > 0.0) || !(beta_max < 1.0) || beta_min > beta_max)
    throw InvalidInput("schedule: betas must satisfy 0 < beta_min <= beta_max < 1");
  if (static_cast<int>(beta.size()) != t_train ||
      static_cast<int>(alpha_bar.size()) != t_train)
    throw InvalidInput("schedule: tables not built; use DiffusionSchedule::make");
}

double DiffusionSchedule::beta_at(int i) const {
  if (i < 1 || i > t_train) throw InvalidInput("schedule: step out of range");
  return beta[i - 1];
}

double DiffusionSchedule::alpha_bar_at(int i) const {
  if (i < 1 || i > t_train) throw InvalidInput("schedule: step out of range");
  return alpha_bar[i - 1];
}

int DiffusionSchedule::index_of(double t) const {
  const int i = static_cast<int>(std::llround(t * t_train));
  if (i < 1 || i > t_train) throw InvalidInput("schedule: time out of (0, 1]");
  return i;
}

Vec12 embed_wrist(const Vec3& t, const Mat3& r, double k_trans) {
  Vec12 g;
  g.head<3>() = k_trans * t;
  for (int i = 0; i < 3; ++i) g.segment<3>(3 + 3 * i) = r.row(i).transpose();
  return g;
}

WristPose unembed_wrist(const Vec12& g, double k_trans) {
  WristPose out;
  out.t = g.head<3>() / k_trans;
  Mat3 m;
  for (int i = 0; i < 3; ++i) m.row(i) = g.segment<3>(3 + 3 * i).transpose();
  out.r = geometry::svd_project(m);
  return out;
}

Vec12 noise_sample(const Vec12& g, int i, const DiffusionSchedule& sched, const Vec12& eps) {
  const double ab = sched.alpha_bar_at(i);
  return std::sqrt(ab) * g + std::sqrt(1.0 - ab) * eps;
}

Vec12 velocity_target(const Vec12& g, int i, const DiffusionSchedule& sched, const Vec12& eps) {
  const double ab = sched.alpha_bar_at(i);
  return std::sqrt(ab) * eps - std::sqrt(1.0 - ab) * g;
}

namespace {

double drift_coeff(const DiffusionSchedule& sched, int i) {
  const double b = sched.beta_at(i);
  const double ab = sched.alpha_bar_at(i);
  return sched.t_train * b * std::sqrt(ab) / (2.0 * std::sqrt(1.0 - ab));
}

Vec12 eval_field(const VelocityField& v, const Vec12& g, double t, int step) {
  const Vec12 out = v(g, t);
  if (!out.allFinite())
    throw DegenerateInput("denoise: non-finite velocity at inference step " +
                          std::to_string(step));
  return out;
}

}  // namespace

DenoiseResult denoise(const VelocityField& v, const Vec12& g1,
                      const DiffusionSchedule& sched, bool record_trajectory) {
  sched.validate();
  if (!v) throw InvalidInput("denoise: empty velocity field");
  if (!g1.allFinite()) throw InvalidInput("denoise: non-finite start vector");

  const int stride = sched.t_train / sched.t_inference;
  const double dt = 1.0 / sched.t_inference;
  DenoiseResult out;
  out.g = g1;
  if (record_trajectory) out.trajectory.push_back(out.g);
  for (int k = sched.t_inference; k >= 1; --k) {
    const int i = k * stride;
    const double t = static_cast<double>(i) / sched.t_train;
    const Vec12 vel = eval_field(v, out.g, t, k);
    out.g -= drift_coeff(sched, i) * vel * dt;
    if (!out.g.allFinite())
      throw DegenerateInput("denoise: state diverged at inference step " +
                            std::to_string(k));
    if (record_trajectory) out.trajectory.push_back(out.g);
  }
  out.pose = unembed_wrist(out.g);
  return out;
}

SampleResult sample_with_likelihood(const VelocityField& v, const Vec12& g1,
                                    const DiffusionSchedule& sched, double fd_step) {
  sched.validate();
  if (!v) throw InvalidInput("sample_with_likelihood: empty velocity field");
  if (!g1.allFinite()) throw InvalidInput("sample_with_likelihood: non-finite start vector");
  if (!(fd_step > 0.0)) throw InvalidInput("sample_with_likelihood: fd_step must be positive");

  const int stride = sched.t_train / sched.t_inference;
  const double dt = 1.0 / sched.t_inference;
  SampleResult out;
  out.g = g1;
  out.log_p = log_normal_12(g1);
  for (int k = sched.t_inference; k >= 1; --k) {
    const int i = k * stride;
    const double t = static_cast<double>(i) / sched.t_train;
    const double coeff = drift_coeff(sched, i);
    double trace = 0.0;
    for (int j = 0; j < kWristDim; ++j) {
      Vec12 gp = out.g;
      Vec12 gm = out.g;
      gp[j] += fd_step;
      gm[j] -= fd_step;
      const Vec12 vp = eval_field(v, gp, t, k);
      const Vec12 vm = eval_field(v, gm, t, k);
      trace += (vp[j] - vm[j]) / (2.0 * fd_step);
    }
    out.log_p += coeff * trace * dt;
    const Vec12 vel = eval_field(v, out.g, t, k);
    out.g -= coeff * vel * dt;
    if (!out.g.allFinite())
      throw DegenerateInput("sample_with_likelihood: state diverged at inference step " +
                            std::to_string(k));
  }
  out.pose = unembed_wrist(out.g);
  return out;
}

double log_prob(const VelocityField& v, const Vec12& g1, const DiffusionSchedule& sched,
                double fd_step) {
  return sample_with_likelihood(v, g1, sched, fd_step).log_p;
}

double log_normal_12(const Vec12& x) {
  constexpr double kLog2Pi = 1.8378770664093454835606594728112;
  return -0.5 * kWristDim * kLog2Pi - 0.5 * x.squaredNorm();
}

double rank_score(double log_p, double gs, double eta) {
  return log_p + eta * gs;
}

}  // namespace dexkit::diffusion
