#include "dexkit/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace dexkit::nn {

namespace {

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double activate(Activation a, double x) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::mish: return mish(x);
  }
  return x;
}

double activate_grad(Activation a, double x) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::mish: return mish_grad(x);
  }
  return 1.0;
}

}  // namespace

double mish(double x) { return x * std::tanh(softplus(x)); }

double mish_grad(double x) {
  const double t = std::tanh(softplus(x));
  return t + x * (1.0 - t * t) * sigmoid(x);
}

int Mlp::input_dim() const {
  if (layers.empty()) throw InvalidInput("mlp: no layers");
  return static_cast<int>(layers.front().w.cols());
}

int Mlp::output_dim() const {
  if (layers.empty()) throw InvalidInput("mlp: no layers");
  return static_cast<int>(layers.back().w.rows());
}

int Mlp::parameter_count() const {
  int n = 0;
  for (const Layer& l : layers) n += static_cast<int>(l.w.size() + l.b.size());
  return n;
}

void Mlp::validate() const {
  if (layers.empty()) throw InvalidInput("mlp: no layers");
  for (size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    if (l.w.rows() == 0 || l.w.cols() == 0) throw InvalidInput("mlp: empty layer");
    if (l.b.size() != l.w.rows()) throw InvalidInput("mlp: bias size mismatch");
    if (i > 0 && layers[i - 1].w.rows() != l.w.cols())
      throw InvalidInput("mlp: consecutive layer dims incompatible");
    if (l.residual && l.w.rows() != l.w.cols())
      throw InvalidInput("mlp: residual layer must be square");
    if (!l.w.allFinite() || !l.b.allFinite())
      throw InvalidInput("mlp: non-finite parameters");
  }
}

VecX Mlp::get_parameters() const {
  VecX flat(parameter_count());
  int at = 0;
  for (const Layer& l : layers) {
    for (int r = 0; r < l.w.rows(); ++r)
      for (int c = 0; c < l.w.cols(); ++c) flat[at++] = l.w(r, c);
    for (int r = 0; r < l.b.size(); ++r) flat[at++] = l.b[r];
  }
  return flat;
}

void Mlp::set_parameters(const VecX& flat) {
  if (flat.size() != parameter_count()) throw InvalidInput("mlp: parameter size mismatch");
  int at = 0;
  for (Layer& l : layers) {
    for (int r = 0; r < l.w.rows(); ++r)
      for (int c = 0; c < l.w.cols(); ++c) l.w(r, c) = flat[at++];
    for (int r = 0; r < l.b.size(); ++r) l.b[r] = flat[at++];
  }
}

Mlp make_mlp(const std::vector<int>& sizes, const std::vector<Activation>& acts,
             const std::vector<bool>& residual, std::mt19937_64& rng) {
  if (sizes.size() < 2) throw InvalidInput("make_mlp: need at least input and output size");
  const size_t n_layers = sizes.size() - 1;
  if (acts.size() != n_layers || residual.size() != n_layers)
    throw InvalidInput("make_mlp: activation or residual list length mismatch");
  std::normal_distribution<double> normal(0.0, 1.0);
  Mlp net;
  for (size_t i = 0; i < n_layers; ++i) {
    Layer l;
    const int in = sizes[i];
    const int out = sizes[i + 1];
    const double scale = std::sqrt(2.0 / in);
    l.w.resize(out, in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) l.w(r, c) = scale * normal(rng);
    l.b = VecX::Zero(out);
    l.act = acts[i];
    l.residual = residual[i];
    net.layers.push_back(std::move(l));
  }
  net.validate();
  return net;
}

MatX mlp_forward(const Mlp& net, const MatX& x, ForwardCache* cache) {
  if (x.rows() != net.input_dim()) throw InvalidInput("mlp_forward: input dim mismatch");
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  MatX cur = x;
  for (const Layer& l : net.layers) {
    if (cache) cache->inputs.push_back(cur);
    MatX pre = (l.w * cur).colwise() + l.b;
    if (cache) cache->pre.push_back(pre);
    MatX post = pre.unaryExpr([&](double v) { return activate(l.act, v); });
    if (l.residual) post += cur;
    cur = std::move(post);
  }
  return cur;
}

VecX mlp_forward(const Mlp& net, const VecX& x) {
  return mlp_forward(net, MatX(x), nullptr).col(0);
}

VecX MlpGradients::flat(const Mlp& net) const {
  VecX out(net.parameter_count());
  int at = 0;
  for (size_t i = 0; i < net.layers.size(); ++i) {
    const MatX& w = dw[i];
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) out[at++] = w(r, c);
    for (int r = 0; r < db[i].size(); ++r) out[at++] = db[i][r];
  }
  return out;
}

MlpGradients mlp_backward(const Mlp& net, const ForwardCache& cache, const MatX& dy) {
  const size_t n = net.layers.size();
  if (cache.inputs.size() != n || cache.pre.size() != n)
    throw InvalidInput("mlp_backward: cache does not match network");
  if (dy.rows() != net.output_dim()) throw InvalidInput("mlp_backward: gradient dim mismatch");

  MlpGradients g;
  g.dw.resize(n);
  g.db.resize(n);
  MatX dcur = dy;
  for (int i = static_cast<int>(n) - 1; i >= 0; --i) {
    const Layer& l = net.layers[i];
    MatX dpre =
        dcur.array() *
        cache.pre[i].unaryExpr([&](double v) { return activate_grad(l.act, v); }).array();
    g.dw[i] = dpre * cache.inputs[i].transpose();
    g.db[i] = dpre.rowwise().sum();
    MatX dx = l.w.transpose() * dpre;
    if (l.residual) dx += dcur;
    dcur = std::move(dx);
  }
  g.dx = dcur;
  return g;
}

VecX sinusoidal_embed(double t, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw InvalidInput("sinusoidal_embed: dim must be even");
  const int pairs = dim / 2;
  VecX out(dim);
  for (int j = 0; j < pairs; ++j) {
    const double expo = pairs == 1 ? 0.0 : 4.0 * j / (pairs - 1);
    const double omega = std::pow(10.0, expo);
    out[2 * j] = std::sin(omega * t);
    out[2 * j + 1] = std::cos(omega * t);
  }
  return out;
}

namespace {

VecX descriptor_impl(const SceneCloud& cloud, int index, double radius, int dim,
                     double min_world_z) {
  if (dim < kDescriptorBase) throw InvalidInput("local_descriptor: dim too small");
  const int n = static_cast<int>(cloud.size());
  if (index < 0 || index >= n) throw InvalidInput("local_descriptor: index out of range");
  if (!(radius > 0.0)) throw InvalidInput("local_descriptor: radius must be positive");

  const Vec3 p = cloud.point(index);
  std::vector<int> nbr;
  for (int i = 0; i < n; ++i)
    if ((cloud.point(i) - p).norm() <= radius) nbr.push_back(i);

  VecX f = VecX::Zero(dim);
  if (static_cast<int>(nbr.size()) < 3) {
    f[18] = 1.0;
    return f;
  }

  Vec3 mean = Vec3::Zero();
  for (int i : nbr) mean += cloud.point(i);
  mean /= static_cast<double>(nbr.size());

  Mat3 cov = Mat3::Zero();
  for (int i : nbr) {
    const Vec3 d = cloud.point(i) - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(nbr.size());

  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  f.segment<3>(0) = eig.eigenvalues() / (radius * radius);

  Vec3 normal = eig.eigenvectors().col(0);
  const double outward = normal.dot(p - mean);
  if (std::abs(outward) > 1e-9 * radius) {
    if (outward < 0.0) normal = -normal;
  } else if (std::abs(normal.z()) > 1e-9) {
    if (normal.z() > 0.0) normal = -normal;
  } else if ((normal.x() != 0.0 ? normal.x() : normal.y()) < 0.0) {
    normal = -normal;
  }
  f.segment<3>(3) = normal;

  f[6] = (cloud.camera_pose.apply(p).z() - min_world_z) / radius;
  f.segment<3>(7) = (mean - p) / radius;

  const double shell = radius / 8.0;
  for (int i : nbr) {
    const double d = (cloud.point(i) - p).norm();
    const int bin = std::min(7, static_cast<int>(d / shell));
    f[10 + bin] += 1.0;
  }
  f.segment<8>(10) /= static_cast<double>(nbr.size());
  return f;
}

double min_world_height(const SceneCloud& cloud) {
  double z = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < cloud.size(); ++i)
    z = std::min(z, cloud.camera_pose.apply(cloud.point(i)).z());
  return z;
}

}  // namespace

VecX local_descriptor(const SceneCloud& cloud, int index, double radius, int dim) {
  if (cloud.size() == 0) throw InvalidInput("local_descriptor: empty cloud");
  return descriptor_impl(cloud, index, radius, dim, min_world_height(cloud));
}

MatX compute_features(const SceneCloud& cloud, double radius, int dim) {
  const int n = static_cast<int>(cloud.size());
  if (n == 0) throw InvalidInput("compute_features: empty cloud");
  const double z0 = min_world_height(cloud);
  MatX out(n, dim);
  for (int i = 0; i < n; ++i)
    out.row(i) = descriptor_impl(cloud, i, radius, dim, z0).transpose();
  return out;
}

VecX rotate_descriptor(const VecX& f, double angle) {
  if (f.size() < kDescriptorBase) throw InvalidInput("rotate_descriptor: vector too short");
  const Mat3 rz = Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
  VecX out = f;
  out.segment<3>(3) = rz * f.segment<3>(3);
  out.segment<3>(7) = rz * f.segment<3>(7);
  return out;
}

GraspModel GraspModel::make(int feature_dim, int dof, std::uint64_t seed) {
  if (feature_dim < kDescriptorBase || feature_dim % 2 != 0)
    throw InvalidInput("grasp model: feature_dim must be even and hold the descriptor");
  if (dof < 1) throw InvalidInput("grasp model: dof must be positive");
  GraspModel m;
  m.feature_dim = feature_dim;
  m.dof = dof;

  std::mt19937_64 rng_g(split_seed(seed, 1));
  std::mt19937_64 rng_d(split_seed(seed, 2));
  std::mt19937_64 rng_j(split_seed(seed, 3));

  m.graspness_head = make_mlp({feature_dim, 3}, {Activation::identity}, {false}, rng_g);

  m.denoiser = make_mlp({12 + feature_dim, 512, 256, 12},
                        {Activation::mish, Activation::mish, Activation::identity},
                        {false, false, false}, rng_d);
  m.denoiser.layers.back().w.setZero();
  m.denoiser.layers.back().b.setZero();

  m.joint_head = make_mlp(
      {feature_dim + 12, 128, 128, 128, 128, 128, dof},
      {Activation::relu, Activation::relu, Activation::relu, Activation::relu,
       Activation::relu, Activation::identity},
      {false, true, true, true, true, false}, rng_j);

  m.validate();
  return m;
}

void GraspModel::validate() const {
  if (feature_dim < kDescriptorBase) throw InvalidInput("grasp model: feature_dim too small");
  if (dof < 1) throw InvalidInput("grasp model: dof must be positive");
  if (!(descriptor_radius > 0.0)) throw InvalidInput("grasp model: radius must be positive");
  if (!(k_trans > 0.0)) throw InvalidInput("grasp model: k_trans must be positive");
  graspness_head.validate();
  denoiser.validate();
  joint_head.validate();
  if (graspness_head.input_dim() != feature_dim || graspness_head.output_dim() != 3)
    throw InvalidInput("grasp model: graspness head shape");
  if (denoiser.input_dim() != 12 + feature_dim || denoiser.output_dim() != 12)
    throw InvalidInput("grasp model: denoiser shape");
  if (joint_head.input_dim() != feature_dim + 12 || joint_head.output_dim() != dof)
    throw InvalidInput("grasp model: joint head shape");
}

VecX GraspModel::get_parameters() const {
  VecX flat(parameter_count());
  flat << graspness_head.get_parameters(), denoiser.get_parameters(),
      joint_head.get_parameters();
  return flat;
}

void GraspModel::set_parameters(const VecX& flat) {
  const int a = graspness_head.parameter_count();
  const int b = denoiser.parameter_count();
  const int c = joint_head.parameter_count();
  if (flat.size() != a + b + c) throw InvalidInput("grasp model: parameter size mismatch");
  graspness_head.set_parameters(flat.head(a));
  denoiser.set_parameters(flat.segment(a, b));
  joint_head.set_parameters(flat.tail(c));
}

int GraspModel::parameter_count() const {
  return graspness_head.parameter_count() + denoiser.parameter_count() +
         joint_head.parameter_count();
}

VecX predict_graspness(const GraspModel& m, const VecX& f) {
  return mlp_forward(m.graspness_head, f);
}

Vec12 predict_velocity(const GraspModel& m, const Vec12& g_hat, const VecX& f, double t) {
  if (f.size() != m.feature_dim) throw InvalidInput("predict_velocity: feature dim mismatch");
  VecX x(12 + m.feature_dim);
  x.head<12>() = g_hat;
  x.tail(m.feature_dim) = f + sinusoidal_embed(t, m.feature_dim);
  return mlp_forward(m.denoiser, x);
}

VecX predict_joints(const GraspModel& m, const VecX& f, const Vec3& t_rel, const Mat3& r_rel) {
  if (f.size() != m.feature_dim) throw InvalidInput("predict_joints: feature dim mismatch");
  VecX x(m.feature_dim + 12);
  x.head(m.feature_dim) = f;
  x.segment<3>(m.feature_dim) = m.k_trans * t_rel;
  for (int i = 0; i < 3; ++i)
    x.segment<3>(m.feature_dim + 3 + 3 * i) = r_rel.row(i).transpose();
  return mlp_forward(m.joint_head, x);
}

diffusion::VelocityField velocity_field(const GraspModel& m, const VecX& f) {
  return [model = m, feat = f](const Vec12& g_hat, double t) -> Vec12 {
    return predict_velocity(model, g_hat, feat, t);
  };
}

double cross_entropy(const Eigen::Vector2d& logits, int label, Eigen::Vector2d* grad) {
  if (label != 0 && label != 1) throw InvalidInput("cross_entropy: label must be 0 or 1");
  const double m = logits.maxCoeff();
  const double lse = m + std::log(std::exp(logits[0] - m) + std::exp(logits[1] - m));
  if (grad) {
    (*grad)[0] = std::exp(logits[0] - lse);
    (*grad)[1] = std::exp(logits[1] - lse);
    (*grad)[label] -= 1.0;
  }
  return lse - logits[label];
}

double smooth_l1(const VecX& pred, const VecX& target, double beta, VecX* grad) {
  if (pred.size() != target.size()) throw InvalidInput("smooth_l1: size mismatch");
  if (!(beta > 0.0)) throw InvalidInput("smooth_l1: beta must be positive");
  const int n = static_cast<int>(pred.size());
  if (n == 0) throw InvalidInput("smooth_l1: empty input");
  if (grad) grad->resize(n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double e = pred[i] - target[i];
    const double a = std::abs(e);
    if (a < beta) {
      total += 0.5 * e * e / beta;
      if (grad) (*grad)[i] = e / beta / n;
    } else {
      total += a - 0.5 * beta;
      if (grad) (*grad)[i] = (e > 0.0 ? 1.0 : -1.0) / n;
    }
  }
  return total / n;
}

double mse(const VecX& pred, const VecX& target, VecX* grad) {
  if (pred.size() != target.size()) throw InvalidInput("mse: size mismatch");
  const int n = static_cast<int>(pred.size());
  if (n == 0) throw InvalidInput("mse: empty input");
  const VecX e = pred - target;
  if (grad) *grad = 2.0 * e / n;
  return e.squaredNorm() / n;
}

void AdamState::init(int n) {
  m = VecX::Zero(n);
  v = VecX::Zero(n);
  step = 0;
}

void AdamState::update(VecX& params, const VecX& grad, double lr) {
  if (params.size() != m.size() || grad.size() != m.size())
    throw InvalidInput("adam: size mismatch");
  ++step;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

double cosine_lr(long iteration, long total, double lr0) {
  if (total < 1) throw InvalidInput("cosine_lr: total must be positive");
  const double frac = std::min(1.0, static_cast<double>(iteration) / total);
  return 0.5 * lr0 * (1.0 + std::cos(M_PI * frac));
}

std::vector<int> rebalanced_sample(const std::vector<int>& label_object_ids, int count,
                                   std::mt19937_64& rng) {
  if (label_object_ids.empty()) throw InvalidInput("rebalanced_sample: no labels");
  if (count < 1) throw InvalidInput("rebalanced_sample: count must be positive");

  std::vector<int> order;  // object ids in first-appearance order
  std::vector<std::vector<int>> groups;
  for (size_t i = 0; i < label_object_ids.size(); ++i) {
    const int id = label_object_ids[i];
    auto it = std::find(order.begin(), order.end(), id);
    size_t g;
    if (it == order.end()) {
      order.push_back(id);
      groups.emplace_back();
      g = groups.size() - 1;
    } else {
      g = static_cast<size_t>(it - order.begin());
    }
    groups[g].push_back(static_cast<int>(i));
  }

  std::uniform_int_distribution<size_t> pick_obj(0, groups.size() - 1);
  std::vector<int> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    const auto& g = groups[pick_obj(rng)];
    std::uniform_int_distribution<size_t> pick_label(0, g.size() - 1);
    out.push_back(g[pick_label(rng)]);
  }
  return out;
}

void TrainingView::validate() const {
  const int n = static_cast<int>(cloud.size());
  if (n == 0) throw InvalidInput("training view: empty cloud");
  if (graspness_target.size() != n || static_cast<int>(is_object.size()) != n)
    throw InvalidInput("training view: per-point target sizes mismatch");
  if (features.rows() != n) throw InvalidInput("training view: feature rows mismatch");
  if (labels.size() != seed_index.size())
    throw InvalidInput("training view: label and seed lists differ");
  for (int s : seed_index)
    if (s < 0 || s >= n) throw InvalidInput("training view: seed index out of range");
}

RotatedView augment_rotation(const SceneCloud& cloud,
                             const std::vector<graspness::GraspLabel>& labels,
                             double angle) {
  const Mat3 rz = Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
  RotatedView out;
  out.cloud = cloud;
  for (Eigen::Index i = 0; i < cloud.size(); ++i)
    out.cloud.points.row(i) = (rz * cloud.point(i)).transpose();

  const Mat3 rc = cloud.camera_pose.rotation;
  const Vec3 tc = cloud.camera_pose.translation;
  const Mat3 q = rc * rz * rc.transpose();
  out.labels = labels;
  for (auto& l : out.labels) {
    l.wrist.translation = q * (l.wrist.translation - tc) + tc;
    l.wrist.rotation = q * l.wrist.rotation;
  }
  return out;
}

void TrainingConfig::validate() const {
  if (scenes_per_batch < 1 || grasps_per_scene < 1 || iterations < 1 || point_count < 1)
    throw InvalidInput("training config: counts must be positive");
  if (!(lr0 > 0.0)) throw InvalidInput("training config: lr0 must be positive");
  if (lambda_o < 0.0 || lambda_g < 0.0 || lambda_d < 0.0 || lambda_theta < 0.0)
    throw InvalidInput("training config: loss weights must be non-negative");
}

namespace {

struct ViewLabelData {
  int seed = 0;
  int object_id = 0;
  Vec3 t_rel = Vec3::Zero();
  Mat3 r_rel = Mat3::Identity();
  VecX theta;
};

std::string loss_report(long iter, double lo, double lg, double ld, double lt) {
  std::ostringstream os;
  os << "train_loop: non-finite loss at iteration " << iter << " (L_o=" << lo
     << " L_g=" << lg << " L_d=" << ld << " L_theta=" << lt << ")";
  return os.str();
}

}  // namespace

TrainResult train_loop(const std::vector<TrainingView>& views,
                       const diffusion::DiffusionSchedule& sched,
                       const TrainingConfig& cfg, GraspModel model) {
  cfg.validate();
  sched.validate();
  model.validate();
  if (views.empty()) throw InvalidInput("train_loop: no training views");
  for (const auto& v : views) {
    v.validate();
    if (v.features.cols() != model.feature_dim)
      throw InvalidInput("train_loop: feature width does not match the model");
  }
  const bool use_labels = cfg.lambda_d > 0.0 || cfg.lambda_theta > 0.0;

  std::vector<std::vector<ViewLabelData>> label_data(views.size());
  std::vector<std::vector<int>> label_objects(views.size());
  for (size_t vi = 0; vi < views.size(); ++vi) {
    const TrainingView& v = views[vi];
    for (size_t li = 0; li < v.labels.size(); ++li) {
      const auto& lab = v.labels[li];
      if (use_labels && lab.theta.size() != model.dof)
        throw InvalidInput("train_loop: label joint vector does not match the model dof");
      const Vec3 seed_world = v.cloud.point_world(v.seed_index[li]);
      const auto rel = graspness::relative_grasp(lab, seed_world, v.cloud.camera_pose);
      label_data[vi].push_back({v.seed_index[li], lab.object_id, rel.t, rel.r, rel.theta});
      label_objects[vi].push_back(lab.object_id);
    }
    if (use_labels && label_data[vi].empty())
      throw InvalidInput("train_loop: view without grasp labels");
  }

  const int fdim = model.feature_dim;
  const int np = model.parameter_count();
  const int off_g = 0;
  const int off_d = model.graspness_head.parameter_count();
  const int off_j = off_d + model.denoiser.parameter_count();

  VecX params = model.get_parameters();
  AdamState adam;
  adam.init(np);

  std::mt19937_64 rng(split_seed(cfg.seed, 0x7261696e));
  std::uniform_int_distribution<size_t> pick_view(0, views.size() - 1);
  std::uniform_real_distribution<double> pick_angle(0.0, 2.0 * M_PI);
  std::uniform_int_distribution<int> pick_step(1, sched.t_train);
  std::normal_distribution<double> normal(0.0, 1.0);

  TrainResult result;
  result.curve.reserve(cfg.iterations);

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const double lr = cosine_lr(iter, cfg.iterations, cfg.lr0);
    VecX grad = VecX::Zero(np);
    double sum_o = 0.0, sum_g = 0.0, sum_d = 0.0, sum_t = 0.0;
    const double inv_d = 1.0 / cfg.scenes_per_batch;

    for (int d = 0; d < cfg.scenes_per_batch; ++d) {
      const size_t vi = pick_view(rng);
      const TrainingView& view = views[vi];
      const double angle = pick_angle(rng);
      const Mat3 rz = Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
      const int n = static_cast<int>(view.cloud.size());

      MatX feat(fdim, n);  // rotated descriptors, one column per point
      for (int i = 0; i < n; ++i) feat.col(i) = view.features.row(i).transpose();
      feat.middleRows<3>(3) = rz * feat.middleRows<3>(3);
      feat.middleRows<3>(7) = rz * feat.middleRows<3>(7);

      ForwardCache cache_g;
      const MatX y = mlp_forward(model.graspness_head, feat, &cache_g);
      MatX dy = MatX::Zero(3, n);

      double l_o = 0.0;
      int n_obj = 0;
      for (int i = 0; i < n; ++i) {
        Eigen::Vector2d lg;
        l_o += cross_entropy(y.col(i).head<2>(), view.is_object[i] ? 1 : 0, &lg);
        dy.col(i).head<2>() = lg / static_cast<double>(n);
        if (view.is_object[i]) ++n_obj;
      }
      l_o /= n;

      double l_g = 0.0;
      if (n_obj > 0) {
        VecX pred(n_obj), target(n_obj);
        std::vector<int> obj_idx(n_obj);
        int at = 0;
        for (int i = 0; i < n; ++i) {
          if (!view.is_object[i]) continue;
          pred[at] = y(2, i);
          target[at] = view.graspness_target[i];
          obj_idx[at] = i;
          ++at;
        }
        VecX gg;
        l_g = smooth_l1(pred, target, 1.0, &gg);
        for (int k = 0; k < n_obj; ++k) dy(2, obj_idx[k]) = gg[k];
      }

      dy.topRows<2>() *= cfg.lambda_o * inv_d;
      dy.row(2) *= cfg.lambda_g * inv_d;
      const MlpGradients gg = mlp_backward(model.graspness_head, cache_g, dy);
      grad.segment(off_g, model.graspness_head.parameter_count()) += gg.flat(model.graspness_head);

      sum_o += l_o * inv_d;
      sum_g += l_g * inv_d;

      if (!use_labels || label_data[vi].empty()) continue;

      const int b = cfg.grasps_per_scene;
      const std::vector<int> chosen = rebalanced_sample(label_objects[vi], b, rng);

      MatX den_in(12 + fdim, b);
      MatX den_target(12, b);
      MatX joint_in(fdim + 12, b);
      MatX joint_target(model.dof, b);

      for (int k = 0; k < b; ++k) {
        const ViewLabelData& ld = label_data[vi][chosen[k]];
        const Vec3 t_rel = rz * ld.t_rel;
        const Mat3 r_rel = rz * ld.r_rel;
        const Vec12 g = diffusion::embed_wrist(t_rel, r_rel, model.k_trans);

        const int step_i = pick_step(rng);
        Vec12 eps;
        for (int j = 0; j < 12; ++j) eps[j] = normal(rng);
        const Vec12 g_hat = diffusion::noise_sample(g, step_i, sched, eps);
        const Vec12 v_tar = diffusion::velocity_target(g, step_i, sched, eps);

        const double ab = sched.alpha_bar_at(step_i);
        const Vec12 recon = std::sqrt(ab) * g_hat - std::sqrt(1.0 - ab) * v_tar;
        if ((recon - g).cwiseAbs().maxCoeff() > 1e-9)
          throw DegenerateInput("train_loop: noising identities violated");

        const double t = static_cast<double>(step_i) / sched.t_train;
        den_in.col(k).head<12>() = g_hat;
        den_in.col(k).tail(fdim) = feat.col(ld.seed) + sinusoidal_embed(t, fdim);
        den_target.col(k) = v_tar;

        joint_in.col(k).head(fdim) = feat.col(ld.seed);
        joint_in.col(k).segment<3>(fdim) = model.k_trans * t_rel;
        for (int r = 0; r < 3; ++r)
          joint_in.col(k).segment<3>(fdim + 3 + 3 * r) = r_rel.row(r).transpose();
        joint_target.col(k) = ld.theta;
      }

      ForwardCache cache_d;
      const MatX v_hat = mlp_forward(model.denoiser, den_in, &cache_d);
      const MatX e_d = v_hat - den_target;
      const double l_d = e_d.squaredNorm() / e_d.size();
      const MatX dv = (2.0 / e_d.size()) * e_d * (cfg.lambda_d * inv_d);
      const MlpGradients gd = mlp_backward(model.denoiser, cache_d, dv);
      grad.segment(off_d, model.denoiser.parameter_count()) += gd.flat(model.denoiser);
      sum_d += l_d * inv_d;

      ForwardCache cache_j;
      const MatX th_hat = mlp_forward(model.joint_head, joint_in, &cache_j);
      double l_t = 0.0;
      MatX dth(model.dof, b);
      {
        Eigen::Map<const VecX> pm(th_hat.data(), th_hat.size());
        Eigen::Map<const VecX> tm(joint_target.data(), joint_target.size());
        VecX gt;
        l_t = smooth_l1(pm, tm, 1.0, &gt);
        dth = Eigen::Map<MatX>(gt.data(), model.dof, b) * (cfg.lambda_theta * inv_d);
      }
      const MlpGradients gj = mlp_backward(model.joint_head, cache_j, dth);
      grad.segment(off_j, model.joint_head.parameter_count()) += gj.flat(model.joint_head);
      sum_t += l_t * inv_d;
    }

    const double total = cfg.lambda_o * sum_o + cfg.lambda_g * sum_g +
                         cfg.lambda_d * sum_d + cfg.lambda_theta * sum_t;
    if (!std::isfinite(total))
      throw DegenerateInput(loss_report(iter, sum_o, sum_g, sum_d, sum_t));

    adam.update(params, grad, lr);
    model.set_parameters(params);
    result.curve.push_back({iter, sum_o, sum_g, sum_d, sum_t, total, lr});
  }

  result.model = std::move(model);
  return result;
}

void write_loss_csv(const std::vector<LossRow>& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("write_loss_csv: cannot open " + path);
  out << "iteration,loss_objectness,loss_graspness,loss_denoise,loss_joints,total,lr\n";
  out << std::setprecision(17);
  for (const auto& r : curve)
    out << r.iteration << ',' << r.l_o << ',' << r.l_g << ',' << r.l_d << ','
        << r.l_theta << ',' << r.total << ',' << r.lr << '\n';
  if (!out) throw InvalidInput("write_loss_csv: write failed for " + path);
}

namespace {

constexpr std::uint32_t kMagic = 0x444B5431;  // "DKT1"
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw InvalidInput("load_checkpoint: truncated file");
  return v;
}

void put_mlp(std::ofstream& out, const Mlp& net) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers.size()));
  for (const Layer& l : net.layers) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.w.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.w.cols()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(l.act));
    put<std::uint8_t>(out, l.residual ? 1 : 0);
    for (int r = 0; r < l.w.rows(); ++r)
      for (int c = 0; c < l.w.cols(); ++c) put<double>(out, l.w(r, c));
    for (int r = 0; r < l.b.size(); ++r) put<double>(out, l.b[r]);
  }
}

Mlp get_mlp(std::ifstream& in) {
  const auto n = get<std::uint32_t>(in);
  if (n == 0 || n > 64) throw InvalidInput("load_checkpoint: bad layer count");
  Mlp net;
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto rows = get<std::uint32_t>(in);
    const auto cols = get<std::uint32_t>(in);
    if (rows == 0 || cols == 0 || rows > 100000 || cols > 100000)
      throw InvalidInput("load_checkpoint: bad layer shape");
    const auto act = get<std::uint8_t>(in);
    if (act > 2) throw InvalidInput("load_checkpoint: bad activation code");
    const auto residual = get<std::uint8_t>(in);
    Layer l;
    l.w.resize(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) l.w(r, c) = get<double>(in);
    l.b.resize(rows);
    for (std::uint32_t r = 0; r < rows; ++r) l.b[r] = get<double>(in);
    l.act = static_cast<Activation>(act);
    l.residual = residual != 0;
    net.layers.push_back(std::move(l));
  }
  net.validate();
  return net;
}

}  // namespace

void save_checkpoint(const GraspModel& m, const std::string& path) {
  m.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("save_checkpoint: cannot open " + path);
  put<std::uint32_t>(out, kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::int32_t>(out, m.feature_dim);
  put<std::int32_t>(out, m.dof);
  put<double>(out, m.descriptor_radius);
  put<double>(out, m.k_trans);
  put_mlp(out, m.graspness_head);
  put_mlp(out, m.denoiser);
  put_mlp(out, m.joint_head);
  if (!out) throw InvalidInput("save_checkpoint: write failed for " + path);
}

GraspModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("load_checkpoint: cannot open " + path);
  if (get<std::uint32_t>(in) != kMagic) throw InvalidInput("load_checkpoint: bad magic");
  if (get<std::uint32_t>(in) != kVersion) throw InvalidInput("load_checkpoint: bad version");
  GraspModel m;
  m.feature_dim = get<std::int32_t>(in);
  m.dof = get<std::int32_t>(in);
  m.descriptor_radius = get<double>(in);
  m.k_trans = get<double>(in);
  m.graspness_head = get_mlp(in);
  m.denoiser = get_mlp(in);
  m.joint_head = get_mlp(in);
  m.validate();
  return m;
}

}  // namespace dexkit::nn
