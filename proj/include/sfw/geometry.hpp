#pragma once

// Oracles over l1 balls {x : ||x||_1 <= radius}: linear minimization over
// the ball and over the minimal face of a point, away directions, and exact
// maximal feasible step lengths.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sfw/errors.hpp"

namespace sfw {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

/// Norm choice for a block of variables (and, separately, for y).
enum class Norm { L1, L2 };

/// Default zero threshold used to classify coordinates into faces.
inline constexpr double kFaceTol = 1e-12;

/// Primal norm of `v` under `norm`.
template <typename Derived>
typename Derived::Scalar primal_norm(const Eigen::MatrixBase<Derived>& v, Norm norm) {
  using S = typename Derived::Scalar;
  if (v.size() == 0) return S(0);
  return norm == Norm::L1 ? v.template lpNorm<1>() : v.norm();
}

/// Dual norm: l2 is self-dual, the dual of l1 is l-infinity.
template <typename Derived>
typename Derived::Scalar dual_norm(const Eigen::MatrixBase<Derived>& v, Norm norm) {
  using S = typename Derived::Scalar;
  if (v.size() == 0) return S(0);
  return norm == Norm::L1 ? v.template lpNorm<Eigen::Infinity>() : v.norm();
}

/// The feasible set of one block: an l1 ball of the given radius, measured in
/// `norm_x` for diameter and step-size purposes.
template <typename Scalar = double>
class L1Ball {
 public:
  L1Ball(Index dim, Scalar radius, Norm norm_x = Norm::L2) : dim_(dim), radius_(radius), norm_(norm_x) {
    if (dim < 1) detail::fail_input("L1Ball: dim must be >= 1");
    if (!(radius > Scalar(0)) || !std::isfinite(static_cast<double>(radius)))
      detail::fail_input("L1Ball: radius must be positive and finite");
  }

  Index dim() const { return dim_; }
  Scalar radius() const { return radius_; }
  Norm norm() const { return norm_; }

  /// The farthest vertex pair is +radius*e_j, -radius*e_j under either norm.
  Scalar diameter() const { return Scalar(2) * radius_; }

  template <typename Derived>
  bool contains(const Eigen::MatrixBase<Derived>& x, Scalar tol = Scalar(kFaceTol)) const {
    return x.size() == dim_ && x.template lpNorm<1>() <= radius_ + tol;
  }

  template <typename Derived>
  void check_dim(const Eigen::MatrixBase<Derived>& v, const char* who) const {
    if (v.size() != dim_)
      detail::fail_input(std::string(who) + ": expected length " + std::to_string(dim_) + ", got " +
                         std::to_string(v.size()));
  }

 private:
  Index dim_;
  Scalar radius_;
  Norm norm_;
};

/// Extreme point sign * radius * e_index of an l1 ball.
template <typename Scalar = double>
struct Vertex {
  Index index = 0;
  int sign = 1;
  Vec<Scalar> value;

  static Vertex make(const L1Ball<Scalar>& ball, Index j, int s) {
    Vertex v{j, s, Vec<Scalar>::Zero(ball.dim())};
    v.value[j] = Scalar(s) * ball.radius();
    return v;
  }
};

/// Minimal face of a point: signed support plus whether the point is on the sphere.
struct Face {
  std::vector<Index> j_plus;
  std::vector<Index> j_minus;
  std::vector<Index> j_zero;
  bool on_boundary = false;

  bool support_empty() const { return j_plus.empty() && j_minus.empty(); }
};

/// argmin_{v in ball} g^T v.  The minimizer is -sgn(g_j) radius e_j at the
/// largest |g_j|; ties go to the lowest index, and g_j = 0 gives sign +.
template <typename Scalar, typename Derived>
Vertex<Scalar> lmo(const L1Ball<Scalar>& ball, const Eigen::MatrixBase<Derived>& g) {
  ball.check_dim(g, "lmo");
  Index best = 0;
  Scalar best_abs = std::abs(g[0]);
  for (Index j = 1; j < g.size(); ++j) {
    const Scalar a = std::abs(g[j]);
    if (a > best_abs) {
      best_abs = a;
      best = j;
    }
  }
  if (!std::isfinite(static_cast<double>(best_abs))) detail::fail_input("lmo: gradient is not finite");
  return Vertex<Scalar>::make(ball, best, g[best] > Scalar(0) ? -1 : 1);
}

template <typename Scalar, typename Derived>
Face minimal_face(const L1Ball<Scalar>& ball, const Eigen::MatrixBase<Derived>& x, Scalar tol = Scalar(kFaceTol)) {
  ball.check_dim(x, "minimal_face");
  const Scalar l1 = x.template lpNorm<1>();
  if (l1 > ball.radius() + tol) detail::fail_input("minimal_face: point lies outside the ball");
  Face f;
  for (Index j = 0; j < x.size(); ++j) {
    if (x[j] > tol)
      f.j_plus.push_back(j);
    else if (x[j] < -tol)
      f.j_minus.push_back(j);
    else
      f.j_zero.push_back(j);
  }
  f.on_boundary = std::abs(l1 - ball.radius()) <= tol;
  return f;
}

/// argmin of c^T v over the extreme points sgn(x_j) radius e_j of a boundary
/// face, j ranging over the signed support.  Interior points have the whole
/// ball as their face; use `lmo` for those.
template <typename Scalar, typename Derived>
Vertex<Scalar> in_face_lmo(const L1Ball<Scalar>& ball, const Face& face, const Eigen::MatrixBase<Derived>& c) {
  ball.check_dim(c, "in_face_lmo");
  if (!face.on_boundary) throw ContractError("in_face_lmo: face is the whole ball; call lmo instead");
  if (face.support_empty()) throw ContractError("in_face_lmo: face has empty support");
  Index best = -1;
  int best_sign = 1;
  Scalar best_val = std::numeric_limits<Scalar>::infinity();
  // Merge J+ and J- in index order so ties resolve to the lowest index.
  auto ip = face.j_plus.begin();
  auto im = face.j_minus.begin();
  while (ip != face.j_plus.end() || im != face.j_minus.end()) {
    Index j;
    int s;
    if (im == face.j_minus.end() || (ip != face.j_plus.end() && *ip < *im)) {
      j = *ip++;
      s = 1;
    } else {
      j = *im++;
      s = -1;
    }
    const Scalar val = Scalar(s) * c[j];
    if (val < best_val) {
      best_val = val;
      best = j;
      best_sign = s;
    }
  }
  if (best < 0 || !std::isfinite(static_cast<double>(best_val)))
    detail::fail_input("in_face_lmo: direction is not finite");
  return Vertex<Scalar>::make(ball, best, best_sign);
}

template <typename Scalar = double>
struct AwayDirection {
  Vec<Scalar> d;
  bool accepted = false;
};

/// Away direction d = x_bar - x_check, where x_check maximizes g_check^T x
/// over the minimal face of x_bar.  Accepted only when it is a strict descent
/// direction for g_check and ||d|| <= diam.
template <typename Scalar, typename D1, typename D2>
AwayDirection<Scalar> away_direction(const L1Ball<Scalar>& ball, const Eigen::MatrixBase<D1>& x_bar,
                                     const Eigen::MatrixBase<D2>& g_check, Scalar tol = Scalar(kFaceTol)) {
  ball.check_dim(g_check, "away_direction");
  const Face face = minimal_face(ball, x_bar, tol);
  const Vec<Scalar> neg = -g_check;
  const Vertex<Scalar> x_check =
      (face.on_boundary && !face.support_empty()) ? in_face_lmo(ball, face, neg) : lmo(ball, neg);
  AwayDirection<Scalar> out;
  out.d = x_bar - x_check.value;
  const Scalar slope = g_check.dot(out.d);
  const Scalar len = primal_norm(out.d, ball.norm());
  out.accepted = slope < -tol && len <= ball.diameter() * (Scalar(1) + Scalar(1e-12));
  return out;
}

namespace detail {

template <typename Scalar>
struct StepLimit {
  Scalar alpha = std::numeric_limits<Scalar>::infinity();
  Index blocking = -1;  // coordinate driven to zero by the in-face cap, if any
};

// Largest alpha with ||x + alpha d||_1 <= radius.  phi(alpha) is convex and
// piecewise linear with kinks at -x_j/d_j; scan the kinks in order.
template <typename Scalar, typename D1, typename D2>
Scalar l1_boundary_step(Scalar radius, const Eigen::MatrixBase<D1>& x, const Eigen::MatrixBase<D2>& d) {
  std::vector<std::pair<Scalar, Scalar>> kinks;  // (alpha, |d_j|)
  Scalar val = x.template lpNorm<1>();
  Scalar slope = 0;
  for (Index j = 0; j < x.size(); ++j) {
    if (d[j] == Scalar(0)) continue;
    if (x[j] == Scalar(0)) {
      slope += std::abs(d[j]);
      continue;
    }
    slope += (x[j] > 0 ? d[j] : -d[j]);
    const Scalar t = -x[j] / d[j];
    if (t > Scalar(0)) kinks.emplace_back(t, std::abs(d[j]));
  }
  std::sort(kinks.begin(), kinks.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // Along a face of the sphere the slope is zero up to round-off; a point
  // already on the sphere must not be stuck at alpha = 0 by that residue.
  const Scalar scale = radius + val + d.template lpNorm<1>();
  if (std::abs(slope) <= Scalar(64) * std::numeric_limits<Scalar>::epsilon() * scale) slope = 0;
  val = std::min(val, radius);
  Scalar alpha = 0;
  for (const auto& [t, ad] : kinks) {
    if (slope > Scalar(0) && val + slope * (t - alpha) >= radius) break;
    val += slope * (t - alpha);
    alpha = t;
    slope += Scalar(2) * ad;
  }
  // slope > 0 here: every nonzero d_j contributes +|d_j| beyond its kink.
  return std::max(alpha, alpha + (radius - val) / slope);
}

template <typename Scalar, typename D1, typename D2>
StepLimit<Scalar> feasible_step_limit(const L1Ball<Scalar>& ball, const Eigen::MatrixBase<D1>& x_bar,
                                      const Eigen::MatrixBase<D2>& d, bool in_face, Scalar tol) {
  ball.check_dim(x_bar, "max_feasible_step");
  ball.check_dim(d, "max_feasible_step");
  if (!ball.contains(x_bar, tol)) fail_input("max_feasible_step: x_bar is infeasible");
  if (d.isZero(0)) fail_input("max_feasible_step: direction is zero");
  StepLimit<Scalar> lim;
  lim.alpha = l1_boundary_step(ball.radius(), x_bar, d);
  if (in_face) {
    const Face face = minimal_face(ball, x_bar, tol);
    if (face.on_boundary) {
      for (Index j : face.j_zero)
        if (d[j] != Scalar(0)) fail_input("max_feasible_step: in-face direction leaves the face");
      for (Index j = 0; j < x_bar.size(); ++j) {
        if (std::abs(x_bar[j]) <= tol || d[j] == Scalar(0) || (x_bar[j] > 0) == (d[j] > 0)) continue;
        const Scalar t = -x_bar[j] / d[j];
        if (t <= lim.alpha) {
          if (t < lim.alpha || lim.blocking < 0) lim.blocking = j;
          lim.alpha = t;
        }
      }
    }
  }
  return lim;
}

}  // namespace detail

/// Largest alpha >= 0 with x_bar + alpha d in the ball, computed exactly.
/// With `in_face` on a boundary point, alpha is also capped so that no
/// coordinate of the signed support crosses zero (the step stays in the
/// closed minimal face); interior points have the whole ball as face.
template <typename Scalar, typename D1, typename D2>
Scalar max_feasible_step(const L1Ball<Scalar>& ball, const Eigen::MatrixBase<D1>& x_bar,
                         const Eigen::MatrixBase<D2>& d, bool in_face, Scalar tol = Scalar(kFaceTol)) {
  return detail::feasible_step_limit(ball, x_bar, d, in_face, tol).alpha;
}

}  // namespace sfw
