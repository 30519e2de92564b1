#pragma once

// Modified Frank-Wolfe gap: G = G~ * sqrt(2 L / C) + ||grad_y||_*, where
// G~ = sum_i max_{v in S_i} g_i^T (x_i - v).  The stochastic estimator uses
// the same formula with sampled partial gradients.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "sfw/errors.hpp"
#include "sfw/geometry.hpp"

namespace sfw {

template <typename Scalar = double>
using Blocks = std::vector<Vec<Scalar>>;

/// Tolerance below which a negative per-block G~ is treated as round-off.
inline constexpr double kGapRoundoff = 1e-12;

template <typename Scalar = double>
class GapConstants {
 public:
  GapConstants(Scalar l_nabla, Scalar c_bar_total) : l_nabla_(l_nabla), c_bar_(c_bar_total) {
    if (!(l_nabla > 0)) detail::fail_input("GapConstants: l_nabla must be positive");
    if (!(c_bar_total > 0)) detail::fail_input("GapConstants: c_bar_total must be positive");
    scale_ = std::sqrt(Scalar(2) * l_nabla_ / c_bar_);
  }

  /// Sums per-block curvature constants and checks C_i >= 2 L diam(S_i)^2.
  static GapConstants from_blocks(Scalar l_nabla, std::span<const Scalar> c_bar_per_block,
                                  std::span<const L1Ball<Scalar>> balls) {
    if (c_bar_per_block.size() != balls.size())
      detail::fail_input("GapConstants: one curvature constant per block is required");
    Scalar total = 0;
    for (std::size_t i = 0; i < balls.size(); ++i) {
      const Scalar diam = balls[i].diameter();
      if (c_bar_per_block[i] < Scalar(2) * l_nabla * diam * diam * (Scalar(1) - Scalar(1e-12)))
        detail::fail_input("GapConstants: block " + std::to_string(i) + " has C_i < 2 L diam^2");
      total += c_bar_per_block[i];
    }
    // With no constrained blocks G~ is identically zero and the scale is unused.
    return GapConstants(l_nabla, balls.empty() ? Scalar(1) : total);
  }

  Scalar l_nabla() const { return l_nabla_; }
  Scalar c_bar_total() const { return c_bar_; }
  Scalar scale() const { return scale_; }

 private:
  Scalar l_nabla_;
  Scalar c_bar_;
  Scalar scale_;
};

template <typename Scalar = double>
struct GapEstimate {
  std::vector<Scalar> g_tilde_blocks;
  Scalar g_tilde = 0;
  Scalar h_dual_norm = 0;
  Scalar value = 0;
};

namespace detail {
template <typename Scalar>
Scalar clamp_gap(Scalar g, std::size_t block) {
  if (g >= Scalar(0)) return g;
  if (g > -Scalar(kGapRoundoff)) return Scalar(0);
  throw ConsistencyError("frank-wolfe gap of block " + std::to_string(block) +
                         " is negative: " + std::to_string(static_cast<double>(g)));
}
}  // namespace detail

/// Per-block G~_i = g_i^T (x_i - lmo(g_i)); clamped at zero within round-off.
template <typename Scalar, typename D1, typename D2>
Scalar block_fw_gap(const L1Ball<Scalar>& ball, const Eigen::MatrixBase<D1>& x, const Eigen::MatrixBase<D2>& g,
                    std::size_t block = 0) {
  ball.check_dim(x, "gap_estimate");
  const Vertex<Scalar> v = lmo(ball, g);
  return detail::clamp_gap<Scalar>(g.dot(x - v.value), block);
}

template <typename Scalar>
GapEstimate<Scalar> gap_estimate(std::span<const Vec<Scalar>> x_blocks, std::span<const Vec<Scalar>> g_hat_blocks,
                                 const Vec<Scalar>& h_hat, std::span<const L1Ball<Scalar>> balls, Norm norm_y,
                                 const GapConstants<Scalar>& constants) {
  if (x_blocks.size() != balls.size() || g_hat_blocks.size() != balls.size())
    detail::fail_input("gap_estimate: block count mismatch");
  GapEstimate<Scalar> est;
  est.g_tilde_blocks.reserve(balls.size());
  for (std::size_t i = 0; i < balls.size(); ++i) {
    const Scalar gi = block_fw_gap(balls[i], x_blocks[i], g_hat_blocks[i], i);
    est.g_tilde_blocks.push_back(gi);
    est.g_tilde += gi;
  }
  est.h_dual_norm = dual_norm(h_hat, norm_y);
  est.value = est.g_tilde * constants.scale() + est.h_dual_norm;
  return est;
}

/// Gap at (x, y) using the problem's exact partial gradients.
template <typename Problem, typename Scalar>
GapEstimate<Scalar> exact_gap(const Problem& problem, std::span<const Vec<Scalar>> x_blocks, const Vec<Scalar>& y,
                              std::span<const L1Ball<Scalar>> balls, Norm norm_y,
                              const GapConstants<Scalar>& constants) {
  if (!problem.has_exact_gradient()) throw UnsupportedError("exact_gap: problem has no exact gradient");
  const auto grad = problem.exact_gradient(x_blocks, y);
  return gap_estimate<Scalar>(x_blocks, grad.x_blocks, grad.y, balls, norm_y, constants);
}

}  // namespace sfw
