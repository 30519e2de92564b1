#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sfw/errors.hpp"
#include "sfw/gap.hpp"
#include "sfw/rng.hpp"

namespace sfw {

using Eigen::VectorXd;
using BlockVectors = Blocks<double>;

/// Dimensions of a problem: constrained block sizes p_i and the free dimension q.
struct ProblemShape {
  std::vector<Index> block_dims;
  Index y_dim = 0;
};

/// Full (or per-sample) partial gradients.
struct Gradient {
  BlockVectors x_blocks;
  VectorXd y;

  static Gradient zeros(const ProblemShape& shape);
  Gradient& operator+=(const Gradient& other);
  Gradient& operator/=(double s);
};

/// Batch-mean gradient, the batch-mean loss, and the batch size behind them.
struct GradientEstimate {
  Gradient grad;
  double objective = 0.0;
  Index batch_size = 0;
};

/// One sampled gradient with its loss value.
struct SampleGradient {
  Gradient grad;
  double loss = 0.0;
};

/// Stochastic first-order oracle for F(x, y) = E_z f(x, y, z).
/// Implementations are immutable; all randomness comes from the caller's Rng.
class StochasticProblem {
 public:
  virtual ~StochasticProblem() = default;

  virtual ProblemShape shape() const = 0;

  /// Gradient and loss of f(x, y, z) for one z drawn from `rng`.
  virtual SampleGradient sample_gradient(std::span<const VectorXd> x, const VectorXd& y, Rng& rng) const = 0;

  /// Mean of `b` i.i.d. sample gradients, summed in draw order.
  virtual GradientEstimate sample_batch(std::span<const VectorXd> x, const VectorXd& y, Index b, Rng& rng) const;

  virtual bool has_exact_gradient() const { return false; }
  virtual Gradient exact_gradient(std::span<const VectorXd> x, const VectorXd& y) const;
  virtual double exact_objective(std::span<const VectorXd> x, const VectorXd& y) const;
};

/// Empirical distribution over n stored samples, drawn with replacement.
class FiniteSumProblem : public StochasticProblem {
 public:
  virtual Index num_samples() const = 0;

  /// Mean gradient and loss over the given sample indices, summed in order.
  virtual GradientEstimate gradient_at(std::span<const VectorXd> x, const VectorXd& y,
                                       std::span<const Index> indices) const = 0;

  SampleGradient sample_gradient(std::span<const VectorXd> x, const VectorXd& y, Rng& rng) const override;
  GradientEstimate sample_batch(std::span<const VectorXd> x, const VectorXd& y, Index b, Rng& rng) const override;

  /// The full-batch mean is the exact gradient of the empirical objective.
  bool has_exact_gradient() const override { return true; }
  Gradient exact_gradient(std::span<const VectorXd> x, const VectorXd& y) const override;
  double exact_objective(std::span<const VectorXd> x, const VectorXd& y) const override;
};

/// Max over all coordinates of |fd - g| / max(1, |fd|, |g|), where fd is the
/// central difference of the exact objective with step `epsilon`.
double finite_difference_check(const StochasticProblem& problem, std::span<const VectorXd> x, const VectorXd& y,
                               double epsilon = 1e-5);

/// Options for a random strongly convex quadratic
/// F(z) = 0.5 (z - z*)^T H (z - z*) + f_star, z = (x_1, ..., x_N, y).
struct QuadraticOptions {
  std::uint64_t seed = 0;
  std::vector<Index> block_dims;
  Index q = 0;
  double l_nabla = 1.0;
  double noise_sigma = 0.0;
  /// Smallest eigenvalue as a fraction of l_nabla; 0 allows a singular H.
  double min_curvature_ratio = 0.1;
  /// ||x*_i||_1 for every block; below the ball radius keeps x* interior.
  double x_star_l1 = 0.5;
  double y_star_scale = 1.0;
  double f_star = 0.0;
};

/// Quadratic with known minimizer and spectrum, plus additive spherical
/// Gaussian gradient noise with E||noise||_2^2 = noise_sigma^2.
class QuadraticInstance : public StochasticProblem {
 public:
  explicit QuadraticInstance(const QuadraticOptions& opts);

  ProblemShape shape() const override { return shape_; }
  SampleGradient sample_gradient(std::span<const VectorXd> x, const VectorXd& y, Rng& rng) const override;
  bool has_exact_gradient() const override { return true; }
  Gradient exact_gradient(std::span<const VectorXd> x, const VectorXd& y) const override;
  double exact_objective(std::span<const VectorXd> x, const VectorXd& y) const override;

  const Eigen::MatrixXd& hessian() const { return hessian_; }
  const BlockVectors& x_star() const { return x_star_; }
  const VectorXd& y_star() const { return y_star_; }
  double l_nabla() const { return l_nabla_; }
  double min_eigenvalue() const { return min_eig_; }
  double f_star() const { return f_star_; }
  double noise_sigma() const { return noise_sigma_; }

  VectorXd stack(std::span<const VectorXd> x, const VectorXd& y) const;

 private:
  Gradient split(const VectorXd& z) const;

  ProblemShape shape_;
  Index dim_ = 0;
  Eigen::MatrixXd hessian_;
  BlockVectors x_star_;
  VectorXd y_star_;
  VectorXd z_star_;
  double l_nabla_;
  double min_eig_ = 0.0;
  double f_star_;
  double noise_sigma_;
};

/// Single-block convenience form; p = 0 gives an unconstrained problem.
QuadraticInstance make_quadratic(std::uint64_t seed, Index p, Index q, double l_nabla, double noise_sigma);

/// Batch-mean gradient with b >= 1 samples.
GradientEstimate sample_gradient_batch(const StochasticProblem& problem, std::span<const VectorXd> x,
                                       const VectorXd& y, Index b, Rng& rng);

}  // namespace sfw
