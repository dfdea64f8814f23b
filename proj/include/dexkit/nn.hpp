#pragma once

#include "dexkit/diffusion.hpp"
#include "dexkit/graspness.hpp"
#include "dexkit/types.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace dexkit::nn {

using diffusion::Vec12;

enum class Activation { identity, relu, mish };

double mish(double x);
double mish_grad(double x);

struct Layer {
  MatX w;  // out x in
  VecX b;
  Activation act = Activation::identity;
  // Adds the layer input to the activated output; requires square w.
  bool residual = false;
};

struct Mlp {
  std::vector<Layer> layers;

  int input_dim() const;
  int output_dim() const;
  int parameter_count() const;
  void validate() const;

  // Row-major weights then bias, layer by layer.
  VecX get_parameters() const;
  void set_parameters(const VecX& flat);
};

// He-style Gaussian init scaled by sqrt(2/fan_in); biases zero.
Mlp make_mlp(const std::vector<int>& sizes, const std::vector<Activation>& acts,
             const std::vector<bool>& residual, std::mt19937_64& rng);

struct ForwardCache {
  std::vector<MatX> inputs;  // inputs[l] feeds layer l
  std::vector<MatX> pre;     // pre-activation of layer l
};

// Columns are batch elements.
MatX mlp_forward(const Mlp& net, const MatX& x, ForwardCache* cache = nullptr);
VecX mlp_forward(const Mlp& net, const VecX& x);

struct MlpGradients {
  std::vector<MatX> dw;
  std::vector<VecX> db;
  MatX dx;

  VecX flat(const Mlp& net) const;
};

MlpGradients mlp_backward(const Mlp& net, const ForwardCache& cache, const MatX& dy);

// Interleaved sin/cos pairs at a geometric frequency ladder from 1 to 1e4.
// embed(0) is (0, 1, 0, 1, ...) and the squared norm is always dim/2.
VecX sinusoidal_embed(double t, int dim);

// Hand-crafted per-point descriptor replacing a learned point backbone.
// Neighborhood is the Euclidean ball of `radius` around the point, the point
// itself included. Layout (dim >= 19, zero-padded above):
//   [0..2]  covariance eigenvalues ascending, scaled by 1/radius^2  (invariant)
//   [3..5]  unit surface normal in camera frame, oriented away from
//           the neighborhood centroid; flat patches fall back to
//           facing the camera                                       (axis-covariant)
//   [6]     height of the point above the lowest cloud point along
//           world z, scaled by 1/radius (exactly invariant for a
//           top-down view; treated as invariant elsewhere)
//   [7..9]  neighborhood centroid minus the point, camera frame,
//           scaled by 1/radius                                      (axis-covariant)
//   [10..17] fraction of neighbors per radial shell (8 equal bins)  (invariant)
//   [18]    1.0 when fewer than 3 neighbors were found; geometric
//           components are zeroed in that case
inline constexpr int kDescriptorBase = 19;
inline constexpr int kDescriptorDim = 64;

VecX local_descriptor(const SceneCloud& cloud, int index, double radius,
                      int dim = kDescriptorDim);
MatX compute_features(const SceneCloud& cloud, double radius, int dim = kDescriptorDim);

// Applies a rotation about the camera optical axis to the axis-covariant
// blocks (normal, centroid offset) and leaves the rest untouched.
VecX rotate_descriptor(const VecX& f, double angle);

struct GraspModel {
  int feature_dim = kDescriptorDim;
  int dof = 16;
  double descriptor_radius = 0.02;
  double k_trans = diffusion::kTransScale;
  Mlp graspness_head;  // feature -> (table logit, object logit, GS)
  Mlp denoiser;        // (12 + F) -> 512 -> 256 -> 12, Mish, zero-init output layer
  Mlp joint_head;      // (F + 12) -> 128 x 5 -> dof, ReLU with residual block

  static GraspModel make(int feature_dim, int dof, std::uint64_t seed);
  void validate() const;

  VecX get_parameters() const;
  void set_parameters(const VecX& flat);
  int parameter_count() const;
};

// Single linear layer; returns (table logit, object logit, graspness).
VecX predict_graspness(const GraspModel& m, const VecX& f);
// Input is concat(g_hat, f + time embedding over the feature width).
Vec12 predict_velocity(const GraspModel& m, const Vec12& g_hat, const VecX& f, double t);
// Input is concat(f, k_trans * t_rel, rotation rows).
VecX predict_joints(const GraspModel& m, const VecX& f, const Vec3& t_rel, const Mat3& r_rel);

// Velocity field closure over a fixed conditioning feature, for sampling.
diffusion::VelocityField velocity_field(const GraspModel& m, const VecX& f);

// Softmax cross-entropy over two classes.
double cross_entropy(const Eigen::Vector2d& logits, int label,
                     Eigen::Vector2d* grad = nullptr);
// Mean over components, quadratic below beta and linear above.
double smooth_l1(const VecX& pred, const VecX& target, double beta = 1.0,
                 VecX* grad = nullptr);
double mse(const VecX& pred, const VecX& target, VecX* grad = nullptr);

struct AdamState {
  VecX m;
  VecX v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void init(int n);
  void update(VecX& params, const VecX& grad, double lr);
};

// Half-cosine ramp from lr0 at iteration 0 to 0 at `total`.
double cosine_lr(long iteration, long total, double lr0);

// Uniform over objects that own at least one label, then uniform over that
// object's labels; returns indices into the label list.
std::vector<int> rebalanced_sample(const std::vector<int>& label_object_ids, int count,
                                   std::mt19937_64& rng);

// Training example: one rendered view with per-point targets, the grasp
// labels visible in it, and precomputed descriptors.
struct TrainingView {
  SceneCloud cloud;
  VecX graspness_target;            // per point, ln scale
  std::vector<char> is_object;      // per point
  std::vector<graspness::GraspLabel> labels;
  std::vector<int> seed_index;      // per label, index into cloud
  MatX features;                    // n x F
  int scene_id = 0;

  void validate() const;
};

// Rotates cloud points about the camera optical axis and moves the label
// poses with them; graspness targets stay attached to their points.
struct RotatedView {
  SceneCloud cloud;
  std::vector<graspness::GraspLabel> labels;
};
RotatedView augment_rotation(const SceneCloud& cloud,
                             const std::vector<graspness::GraspLabel>& labels,
                             double angle);

struct TrainingConfig {
  int scenes_per_batch = 8;   // D
  int grasps_per_scene = 64;  // B
  double lr0 = 1e-3;
  int iterations = 5000;
  double lambda_o = 1.0;
  double lambda_g = 1.0;
  double lambda_d = 10.0;
  double lambda_theta = 1.0;
  int point_count = 4096;  // expected cloud size, informational
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossRow {
  long iteration = 0;
  double l_o = 0.0;
  double l_g = 0.0;
  double l_d = 0.0;
  double l_theta = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  GraspModel model;
  std::vector<LossRow> curve;
};

// Joint training of the three heads on fixed descriptors. Per iteration:
// draw D views, rotate each by a random camera-axis angle, draw B labels
// rebalanced per object, accumulate the four losses, one Adam step under
// the cosine schedule. Deterministic given cfg.seed. Throws DegenerateInput
// with the iteration index if any loss turns non-finite.
TrainResult train_loop(const std::vector<TrainingView>& views,
                       const diffusion::DiffusionSchedule& sched,
                       const TrainingConfig& cfg, GraspModel model);

void write_loss_csv(const std::vector<LossRow>& curve, const std::string& path);

void save_checkpoint(const GraspModel& m, const std::string& path);
GraspModel load_checkpoint(const std::string& path);

}  // namespace dexkit::nn
