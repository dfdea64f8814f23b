#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "dexkit/diffusion.hpp"
#include "dexkit/geometry.hpp"

using namespace dexkit;
using namespace dexkit::diffusion;

namespace {

Mat3 rotation_from(double angle, const Vec3& axis) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

Vec12 random_vec12(std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Vec12 v;
  for (int i = 0; i < 12; ++i) v[i] = n(rng);
  return v;
}

// Exact denoising drift for a Gaussian target N(m, sigma^2 I) in embedding
// space. Posterior means of the clean vector and the noise under the forward
// process give the regression optimum in closed form.
VelocityField gaussian_field(const DiffusionSchedule& sched, const Vec12& m, double sigma) {
  return [&sched, m, sigma](const Vec12& g, double t) -> Vec12 {
    const double ab = sched.alpha_bar_at_time(t);
    const double sab = std::sqrt(ab);
    const double somb = std::sqrt(1.0 - ab);
    const double denom = ab * sigma * sigma + 1.0 - ab;
    const Vec12 g_mean = m + (sab * sigma * sigma / denom) * (g - sab * m);
    const Vec12 eps_mean = (g - sab * g_mean) / somb;
    return sab * eps_mean - somb * g_mean;
  };
}

double gaussian_log_density(const Vec12& x, const Vec12& m, double sigma) {
  constexpr double kLog2Pi = 1.8378770664093454835606594728112;
  const double quad = (x - m).squaredNorm() / (sigma * sigma);
  return -6.0 * kLog2Pi - 12.0 * std::log(sigma) - 0.5 * quad;
}

}  // namespace

TEST_CASE("schedule endpoints and recurrence are exact") {
  const auto s = DiffusionSchedule::make();
  CHECK(s.beta_at(1) == 0.0001);
  CHECK(s.beta_at(1000) == 0.02);
  CHECK(s.alpha_bar_at(1) == 1.0 - 0.0001);

  double br = 0.0001 + (499.0 / 999.0) * (0.02 - 0.0001);
  CHECK(s.beta_at(500) == doctest::Approx(br).epsilon(1e-15));

  double prod = 1.0;
  for (int i = 1; i <= 1000; ++i) {
    prod *= 1.0 - s.beta_at(i);
    CHECK(s.alpha_bar_at(i) == prod);
    if (i > 1) CHECK(s.alpha_bar_at(i) < s.alpha_bar_at(i - 1));
  }
  CHECK(s.alpha_bar_at(1000) > 1e-5);
  CHECK(s.alpha_bar_at(1000) < 1e-4);
}

TEST_CASE("schedule time index maps the inference grid onto training steps") {
  const auto s = DiffusionSchedule::make();
  CHECK(s.index_of(1.0) == 1000);
  CHECK(s.index_of(0.001) == 1);
  for (int k = 1; k <= 200; ++k)
    CHECK(s.index_of(static_cast<double>(k) / 200.0) == 5 * k);
  CHECK_THROWS_AS((void)s.index_of(0.0001), InvalidInput);
  CHECK_THROWS_AS((void)s.index_of(1.2), InvalidInput);
  CHECK_THROWS_AS((void)s.beta_at(0), InvalidInput);
  CHECK_THROWS_AS((void)s.alpha_bar_at(1001), InvalidInput);
}

TEST_CASE("schedule validation rejects bad grids") {
  CHECK_THROWS_AS(DiffusionSchedule::make(0.0001, 0.02, 1000, 300), InvalidInput);
  CHECK_THROWS_AS(DiffusionSchedule::make(0.0001, 0.02, 1, 1), InvalidInput);
  CHECK_THROWS_AS(DiffusionSchedule::make(0.0, 0.02, 1000, 200), InvalidInput);
  CHECK_THROWS_AS(DiffusionSchedule::make(0.03, 0.02, 1000, 200), InvalidInput);
  CHECK_NOTHROW(DiffusionSchedule::make(0.0001, 0.02, 1000, 1000));
  CHECK_NOTHROW(DiffusionSchedule::make(0.0001, 0.02, 4000, 500));
}

TEST_CASE("wrist embedding round-trips and scales translation") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 t(u(rng), u(rng), u(rng));
    const Mat3 r = rotation_from(3.0 * u(rng), Vec3(u(rng), u(rng), u(rng) + 2.0));
    const Vec12 g = embed_wrist(t, r);
    CHECK((g.head<3>() - 25.0 * t).norm() < 1e-15);
    CHECK(g.segment<3>(3).isApprox(r.row(0).transpose(), 1e-15));
    const WristPose back = unembed_wrist(g);
    CHECK((back.t - t).norm() < 1e-14);
    CHECK((back.r - r).norm() < 1e-13);
  }
}

TEST_CASE("unembedding a perturbed vector still yields a proper rotation") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec12 g = embed_wrist(Vec3(0.1, -0.2, 0.3),
                                rotation_from(1.1, Vec3(1, 2, 3))) +
                    0.05 * random_vec12(rng);
    const WristPose p = unembed_wrist(g);
    CHECK((p.r.transpose() * p.r - Mat3::Identity()).norm() < 1e-12);
    CHECK(p.r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("forward noising and velocity targets satisfy the exact algebra") {
  const auto s = DiffusionSchedule::make();
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> step(1, 1000);
  for (int trial = 0; trial < 1000; ++trial) {
    const int i = step(rng);
    const Vec12 g = random_vec12(rng);
    const Vec12 eps = random_vec12(rng);
    const double ab = s.alpha_bar_at(i);
    const double sab = std::sqrt(ab);
    const double somb = std::sqrt(1.0 - ab);

    const Vec12 gh = noise_sample(g, i, s, eps);
    const Vec12 v = velocity_target(g, i, s, eps);

    CHECK((sab * gh - somb * v - g).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((somb * gh + sab * v - eps).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("zero noise reduces the forward process to pure scaling") {
  const auto s = DiffusionSchedule::make();
  const Vec12 g = embed_wrist(Vec3(0.02, 0.0, -0.01), Mat3::Identity());
  const Vec12 zero = Vec12::Zero();
  const double ab = s.alpha_bar_at(700);
  CHECK((noise_sample(g, 700, s, zero) - std::sqrt(ab) * g).norm() < 1e-15);
  CHECK((velocity_target(g, 700, s, zero) + std::sqrt(1.0 - ab) * g).norm() < 1e-15);
}

TEST_CASE("denoising under a zero field is the identity") {
  const auto s = DiffusionSchedule::make();
  const VelocityField zero = [](const Vec12&, double) { return Vec12::Zero(); };
  std::mt19937_64 rng(14);
  const Vec12 g1 = random_vec12(rng);
  const DenoiseResult r = denoise(zero, g1, s, true);
  CHECK(r.g == g1);
  CHECK(static_cast<int>(r.trajectory.size()) == s.t_inference + 1);
  CHECK(r.trajectory.front() == g1);
  CHECK(r.trajectory.back() == g1);
}

TEST_CASE("denoising is bitwise deterministic") {
  const auto s = DiffusionSchedule::make();
  const Vec12 m = 0.3 * Vec12::Ones();
  const VelocityField f = gaussian_field(s, m, 0.7);
  std::mt19937_64 rng(15);
  const Vec12 g1 = random_vec12(rng);
  const DenoiseResult a = denoise(f, g1, s);
  const DenoiseResult b = denoise(f, g1, s);
  CHECK(a.g == b.g);
  const SampleResult sa = sample_with_likelihood(f, g1, s);
  const SampleResult sb = sample_with_likelihood(f, g1, s);
  CHECK(sa.g == sb.g);
  CHECK(sa.log_p == sb.log_p);
}

TEST_CASE("standard normal target induces a vanishing drift") {
  const auto s = DiffusionSchedule::make();
  const VelocityField f = gaussian_field(s, Vec12::Zero(), 1.0);
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec12 g = random_vec12(rng);
    CHECK(f(g, 1.0).norm() < 1e-12);
    CHECK(f(g, 0.25).norm() < 1e-12);
    CHECK(f(g, 0.001).norm() < 1e-12);
  }
  const Vec12 g1 = random_vec12(rng);
  const DenoiseResult r = denoise(f, g1, s);
  CHECK((r.g - g1).norm() < 1e-10);
}

TEST_CASE("isotropic Gaussian target contracts each coordinate by sigma") {
  const double sigma = 0.5;
  std::mt19937_64 rng(17);
  const Vec12 g1 = random_vec12(rng);

  auto log_ratio = [&](int t_inference) {
    const auto s = DiffusionSchedule::make(0.0001, 0.02, 1000, t_inference);
    const DenoiseResult r = denoise(gaussian_field(s, Vec12::Zero(), sigma), g1, s);
    return std::log(r.g.norm() / g1.norm());
  };

  const double u200 = log_ratio(200);
  const double u1000 = log_ratio(1000);
  CHECK(u1000 == doctest::Approx(std::log(sigma)).epsilon(0.02));

  // Forward Euler converges at first order, so halving the step roughly
  // halves the remaining error against the finest grid.
  const double e200 = std::abs(u200 - u1000);
  const double e500 = std::abs(log_ratio(500) - u1000);
  REQUIRE(e200 > 1e-8);
  CHECK(e500 / e200 > 0.10);
  CHECK(e500 / e200 < 0.55);
}

TEST_CASE("likelihood of a zero field is the standard normal density") {
  const auto s = DiffusionSchedule::make();
  const VelocityField zero = [](const Vec12&, double) { return Vec12::Zero(); };
  std::mt19937_64 rng(18);
  for (int trial = 0; trial < 5; ++trial) {
    const Vec12 g1 = random_vec12(rng);
    const double expect = -6.0 * 1.8378770664093454835606594728112 - 0.5 * g1.squaredNorm();
    CHECK(log_prob(zero, g1, s) == doctest::Approx(expect).epsilon(1e-14));
    CHECK(log_normal_12(g1) == doctest::Approx(expect).epsilon(1e-15));
  }
}

TEST_CASE("trace accumulation matches the analytic value for a linear field") {
  const auto s = DiffusionSchedule::make();
  const double kappa = 0.01;
  const VelocityField lin = [kappa](const Vec12& g, double) -> Vec12 { return kappa * g; };
  std::mt19937_64 rng(19);
  const Vec12 g1 = random_vec12(rng);
  const SampleResult r = sample_with_likelihood(lin, g1, s);

  double correction = 0.0;
  const double dt = 1.0 / s.t_inference;
  for (int k = s.t_inference; k >= 1; --k) {
    const int i = 5 * k;
    const double b = s.beta_at(i);
    const double ab = s.alpha_bar_at(i);
    const double coeff = s.t_train * b * std::sqrt(ab) / (2.0 * std::sqrt(1.0 - ab));
    correction += coeff * 12.0 * kappa * dt;
  }
  CHECK(correction > 0.0);
  CHECK(r.log_p - log_normal_12(g1) == doctest::Approx(correction).epsilon(1e-9));
}

TEST_CASE("likelihood matches the Gaussian target density along the flow") {
  const auto s = DiffusionSchedule::make();
  Vec12 m = Vec12::Zero();
  m << 0.3, -0.2, 0.1, 0.0, 0.25, -0.15, 0.05, 0.2, -0.1, 0.15, 0.0, -0.25;
  const double sigma = 0.8;
  const VelocityField f = gaussian_field(s, m, sigma);

  std::mt19937_64 rng(20);
  double total_abs_err = 0.0;
  const int n = 40;
  for (int trial = 0; trial < n; ++trial) {
    const Vec12 g1 = random_vec12(rng);
    const SampleResult r = sample_with_likelihood(f, g1, s);
    total_abs_err += std::abs(r.log_p - gaussian_log_density(r.g, m, sigma));
  }
  CHECK(total_abs_err / n < 0.1);
}

TEST_CASE("denoised cloud reproduces Gaussian target moments") {
  const auto s = DiffusionSchedule::make();
  Vec12 m = Vec12::Zero();
  m << 0.3, -0.2, 0.1, 0.0, 0.25, -0.15, 0.05, 0.2, -0.1, 0.15, 0.0, -0.25;
  const double sigma = 0.8;
  const VelocityField f = gaussian_field(s, m, sigma);

  std::mt19937_64 rng(21);
  const int n = 2000;
  Vec12 mean = Vec12::Zero();
  Vec12 second = Vec12::Zero();
  for (int trial = 0; trial < n; ++trial) {
    const Vec12 x = denoise(f, random_vec12(rng), s).g;
    mean += x;
    second += x.cwiseProduct(x);
  }
  mean /= n;
  second /= n;
  const Vec12 var = second - mean.cwiseProduct(mean);
  CHECK((mean - m).cwiseAbs().maxCoeff() < 0.08);
  for (int j = 0; j < 12; ++j)
    CHECK(var[j] == doctest::Approx(sigma * sigma).epsilon(0.12));
}

TEST_CASE("non-finite fields abort with the failing step") {
  const auto s = DiffusionSchedule::make();
  const VelocityField bad = [](const Vec12&, double t) -> Vec12 {
    Vec12 v = Vec12::Zero();
    if (t < 0.5) v[0] = std::numeric_limits<double>::quiet_NaN();
    return v;
  };
  std::mt19937_64 rng(22);
  const Vec12 g1 = random_vec12(rng);
  CHECK_THROWS_AS((void)denoise(bad, g1, s), DegenerateInput);
  CHECK_THROWS_AS((void)sample_with_likelihood(bad, g1, s), DegenerateInput);
  try {
    (void)denoise(bad, g1, s);
  } catch (const DegenerateInput& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
  Vec12 nan_start = g1;
  nan_start[3] = std::numeric_limits<double>::quiet_NaN();
  const VelocityField zero = [](const Vec12&, double) { return Vec12::Zero(); };
  CHECK_THROWS_AS((void)denoise(zero, nan_start, s), InvalidInput);
  CHECK_THROWS_AS((void)log_prob(zero, g1, s, 0.0), InvalidInput);
}

TEST_CASE("rank combines likelihood and graspness with the default weight") {
  CHECK(rank_score(2.0, 0.3) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(rank_score(-1.0, 0.0) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(rank_score(0.0, 1.0, 2.5) == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(rank_score(3.0, 0.5) > rank_score(3.0, 0.4));
  CHECK(rank_score(3.0, 0.5) > rank_score(2.9, 0.5));
}
