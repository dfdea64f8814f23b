#include "dexkit/wrench.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace dexkit::wrench {

namespace {

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

}  // namespace

void ContactSet::validate() const {
  if (points.rows() == 0) throw InvalidInput("contact set is empty");
  if (points.cols() != 3 || directions.cols() != 3)
    throw InvalidInput("contact arrays must have 3 columns");
  if (points.rows() != directions.rows())
    throw InvalidInput("contact points and directions differ in count");
  if (!points.allFinite() || !directions.allFinite())
    throw InvalidInput("contact data contains non-finite values");
  for (int i = 0; i < points.rows(); ++i) {
    if (std::abs(directions.row(i).norm() - 1.0) > 1e-6)
      throw InvalidInput("contact directions must be unit vectors");
  }
}

MatX grasp_matrix(const ContactSet& contacts, const Vec3& ref) {
  contacts.validate();
  const int n = contacts.size();
  MatX g = MatX::Zero(6, 3 * n);
  for (int i = 0; i < n; ++i) {
    g.block<3, 3>(0, 3 * i) = Mat3::Identity();
    g.block<3, 3>(3, 3 * i) = skew(Vec3(contacts.points.row(i)) - ref);
  }
  return g;
}

namespace {

// Columns of the reduced system: a_i = G_i c_i, one 6-vector per contact.
MatX contact_wrench_columns(const ContactSet& contacts, const Vec3& ref) {
  const int n = contacts.size();
  MatX a(6, n);
  for (int i = 0; i < n; ++i) {
    const Vec3 c = contacts.directions.row(i);
    const Vec3 p = contacts.points.row(i);
    a.col(i).head<3>() = c;
    a.col(i).tail<3>() = (p - ref).cross(c);
  }
  return a;
}

// Projected gradient on the face lambda_pivot = 1, remaining entries boxed to
// [0, 1]. Polishes candidates when the active-set enumeration hits a
// rank-deficient free block. `h` is the Gram matrix of the wrench columns.
VecX refine_on_face(const MatX& h, int pivot, VecX lambda, int iters) {
  const int n = static_cast<int>(h.cols());
  double lip = 2.0 * h.norm();
  if (lip < 1e-12) return lambda;
  const double step = 1.0 / lip;
  for (int it = 0; it < iters; ++it) {
    VecX grad = 2.0 * (h * lambda);
    lambda -= step * grad;
    for (int i = 0; i < n; ++i) lambda[i] = std::clamp(lambda[i], 0.0, 1.0);
    lambda[pivot] = 1.0;
  }
  return lambda;
}

// Solves sys * x = rhs for k <= 3 by Cramer's rule. Returns false when the
// system is too close to singular to trust.
bool solve_small(const MatX& sys, const VecX& rhs, VecX& x) {
  const int k = static_cast<int>(sys.rows());
  const double scale = std::max(1e-30, sys.diagonal().cwiseAbs().maxCoeff());
  if (k == 1) {
    if (std::abs(sys(0, 0)) < 1e-13 * scale) return false;
    x.resize(1);
    x[0] = rhs[0] / sys(0, 0);
    return true;
  }
  if (k == 2) {
    const double det = sys(0, 0) * sys(1, 1) - sys(0, 1) * sys(1, 0);
    if (std::abs(det) < 1e-13 * scale * scale) return false;
    x.resize(2);
    x[0] = (rhs[0] * sys(1, 1) - rhs[1] * sys(0, 1)) / det;
    x[1] = (sys(0, 0) * rhs[1] - sys(1, 0) * rhs[0]) / det;
    return true;
  }
  if (k == 3) {
    Mat3 m = sys;
    const double det = m.determinant();
    if (std::abs(det) < 1e-13 * scale * scale * scale) return false;
    x = m.inverse() * Vec3(rhs);
    return true;
  }
  Eigen::LDLT<MatX> ldlt(sys);
  if (ldlt.info() != Eigen::Success) return false;
  x = ldlt.solve(rhs);
  return (sys * x - rhs).cwiseAbs().maxCoeff() < 1e-8 * (1.0 + rhs.cwiseAbs().maxCoeff());
}

}  // namespace

ContactScaleResult optimal_contact_scale(const ContactSet& contacts, const Vec3& ref) {
  contacts.validate();
  const int n = contacts.size();
  const MatX a = contact_wrench_columns(contacts, ref);
  const MatX h = a.transpose() * a;

  const auto value_sq = [&](const VecX& lam) {
    return std::max(0.0, static_cast<double>(lam.transpose() * h * lam));
  };

  ContactScaleResult best;
  best.lambda = VecX::Ones(n);
  double best_sq = value_sq(best.lambda);

  if (n == 1) {
    best.p_t = std::sqrt(best_sq);
    return best;
  }

  const bool enumerate = n <= 10;
  if (enumerate) {
    // States for each non-pivot variable: clamped to 0, clamped to 1, or free.
    std::vector<int> others(n - 1);
    std::vector<int> free_idx;
    VecX lambda(n), rhs, x;
    MatX sys;
    for (int pivot = 0; pivot < n; ++pivot) {
      int oi = 0;
      for (int i = 0; i < n; ++i)
        if (i != pivot) others[oi++] = i;
      const int combos = static_cast<int>(std::pow(3.0, n - 1) + 0.5);
      for (int code = 0; code < combos; ++code) {
        int rest = code;
        lambda.setZero();
        lambda[pivot] = 1.0;
        free_idx.clear();
        for (int k = 0; k < n - 1; ++k) {
          const int state = rest % 3;
          rest /= 3;
          if (state == 1)
            lambda[others[k]] = 1.0;
          else if (state == 2)
            free_idx.push_back(others[k]);
        }
        if (!free_idx.empty()) {
          const int k = static_cast<int>(free_idx.size());
          sys.resize(k, k);
          rhs.resize(k);
          for (int r = 0; r < k; ++r) {
            for (int c2 = 0; c2 < k; ++c2) sys(r, c2) = h(free_idx[r], free_idx[c2]);
            double b = 0;
            for (int i = 0; i < n; ++i)
              if (lambda[i] == 1.0) b += h(free_idx[r], i);
            rhs[r] = -b;
          }
          if (!solve_small(sys, rhs, x)) continue;
          bool ok = true;
          for (int i = 0; i < k; ++i) {
            if (x[i] < -1e-9 || x[i] > 1.0 + 1e-9) {
              ok = false;
              break;
            }
          }
          if (!ok) continue;
          for (int i = 0; i < k; ++i) lambda[free_idx[i]] = std::clamp(x[i], 0.0, 1.0);
        }
        const double value = value_sq(lambda);
        if (value < best_sq - 1e-20) {
          best_sq = value;
          best.lambda = lambda;
        }
      }
    }
  }

  // Refinement pass covers degenerate enumerations (and n > 10 entirely).
  const int refine_iters = enumerate ? 100 : 2000;
  for (int pivot = 0; pivot < n; ++pivot) {
    VecX start = best.lambda;
    start[pivot] = 1.0;
    VecX lam = refine_on_face(h, pivot, start, refine_iters);
    double value = value_sq(lam);
    if (value < best_sq - 1e-20) {
      best_sq = value;
      best.lambda = lam;
    }
    VecX mid = refine_on_face(h, pivot, VecX::Constant(n, 0.5), refine_iters);
    value = value_sq(mid);
    if (value < best_sq - 1e-20) {
      best_sq = value;
      best.lambda = mid;
    }
  }
  // The Gram quadratic form cancels catastrophically near zero; report the
  // achieved norm from the original columns instead.
  best.p_t = (a * best.lambda).norm();
  return best;
}

FcEnergyResult fc_energy(const ContactSet& contacts, const Vec3& ref,
                         bool bernoulli_pass, double tau_fc, double tau_lambda) {
  FcEnergyResult out;
  ContactScaleResult scale = optimal_contact_scale(contacts, ref);
  out.p_t = scale.p_t;
  out.lambda = scale.lambda;
  const bool qualifies = bernoulli_pass && scale.p_t < tau_fc &&
                         scale.lambda.minCoeff() >= tau_lambda;
  if (qualifies) {
    out.value = scale.p_t;
    out.regularized = true;
  } else {
    const MatX a = contact_wrench_columns(contacts, ref);
    out.value = (a * VecX::Ones(contacts.size())).norm();
    out.regularized = false;
  }
  return out;
}

MatX friction_cone_edges(const Vec3& direction, double mu, int n_edges) {
  if (n_edges < 3) throw InvalidInput("friction cone needs at least 3 edges");
  if (mu < 0) throw InvalidInput("friction coefficient must be non-negative");
  const Vec3 c = direction;
  if (std::abs(c.norm() - 1.0) > 1e-6)
    throw InvalidInput("cone direction must be a unit vector");

  int least = 0;
  for (int i = 1; i < 3; ++i)
    if (std::abs(c[i]) < std::abs(c[least])) least = i;
  Vec3 axis = Vec3::Zero();
  axis[least] = 1.0;
  Vec3 t1 = (axis - axis.dot(c) * c).normalized();
  Vec3 t2 = c.cross(t1);

  MatX edges(n_edges, 3);
  for (int k = 0; k < n_edges; ++k) {
    const double ang = 2.0 * M_PI * k / n_edges;
    edges.row(k) = c + mu * (std::cos(ang) * t1 + std::sin(ang) * t2);
  }
  return edges;
}

namespace {

// Phase-1 simplex feasibility for {x >= 0 : eq * x = rhs}. Bland's rule keeps
// it cycle-free; the artificial objective must reach (near) zero.
bool equality_system_feasible(MatX eq, VecX rhs, double tol) {
  const int m = static_cast<int>(eq.rows());
  const int nv = static_cast<int>(eq.cols());
  for (int i = 0; i < m; ++i) {
    if (rhs[i] < 0) {
      rhs[i] = -rhs[i];
      eq.row(i) = -eq.row(i);
    }
  }

  // Tableau columns: structural vars, artificial vars, rhs.
  MatX t = MatX::Zero(m + 1, nv + m + 1);
  t.block(0, 0, m, nv) = eq;
  t.block(0, nv, m, m) = MatX::Identity(m, m);
  t.col(nv + m).head(m) = rhs;

  std::vector<int> basis(m);
  for (int i = 0; i < m; ++i) basis[i] = nv + i;

  // Phase-1 cost row: minimize the artificial sum.
  for (int j = 0; j <= nv + m; ++j) {
    double s = 0;
    for (int i = 0; i < m; ++i) s += t(i, j);
    t(m, j) = (j >= nv && j < nv + m) ? 0.0 : -s;
  }

  const int max_pivots = 200 * (m + nv);
  for (int iter = 0; iter < max_pivots; ++iter) {
    int enter = -1;
    for (int j = 0; j < nv + m; ++j) {
      if (t(m, j) < -tol) {
        enter = j;
        break;
      }
    }
    if (enter < 0) break;

    int leave = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
      if (t(i, enter) > tol) {
        const double ratio = t(i, nv + m) / t(i, enter);
        if (ratio < best_ratio - 1e-12 ||
            (ratio < best_ratio + 1e-12 && (leave < 0 || basis[i] < basis[leave]))) {
          best_ratio = ratio;
          leave = i;
        }
      }
    }
    if (leave < 0) break;  // unbounded below cannot happen for phase 1

    const double pv = t(leave, enter);
    t.row(leave) /= pv;
    for (int i = 0; i <= m; ++i) {
      if (i == leave) continue;
      const double f = t(i, enter);
      if (f != 0.0) t.row(i) -= f * t.row(leave);
    }
    basis[leave] = enter;
  }

  // Remaining artificial objective equals -t(m, last) after the pivots.
  return std::abs(t(m, nv + m)) <= tol * 100;
}

}  // namespace

bool can_balance_force(const ContactSet& contacts, const Vec3& ref,
                       const Vec3& load, const GravityCheckConfig& config) {
  if (contacts.points.rows() == 0) return false;
  contacts.validate();
  const int n = contacts.size();
  const int k = config.cone_edges;

  // Variables: edge coefficients (n*k) then one cap slack per contact.
  MatX eq = MatX::Zero(6 + n, n * k + n);
  VecX rhs = VecX::Zero(6 + n);
  for (int i = 0; i < n; ++i) {
    const Vec3 p = contacts.points.row(i);
    const Vec3 c = contacts.directions.row(i);
    const MatX edges = friction_cone_edges(c, config.mu, k);
    for (int e = 0; e < k; ++e) {
      const Vec3 dir = edges.row(e);
      const int col = i * k + e;
      eq.col(col).head<3>() = dir;
      eq.col(col).segment<3>(3) = (p - ref).cross(dir);
      // Unnormalized edges have unit projection on c, so the coefficient sum
      // is exactly the normal force at this contact.
      eq(6 + i, col) = 1.0;
    }
    eq(6 + i, n * k + i) = 1.0;
    rhs[6 + i] = config.force_cap;
  }
  rhs.head<3>() = -load;

  return equality_system_feasible(eq, rhs, 1e-9);
}

bool resists_gravity_6dir(const ContactSet& contacts, const Vec3& ref,
                          const GravityCheckConfig& config) {
  if (contacts.points.rows() == 0) return false;
  const double w = config.mass * config.gravity;
  for (int axis = 0; axis < 3; ++axis) {
    for (int sign : {-1, 1}) {
      Vec3 load = Vec3::Zero();
      load[axis] = sign * w;
      if (!can_balance_force(contacts, ref, load, config)) return false;
    }
  }
  return true;
}

}  // namespace dexkit::wrench
