#include "sfw/problem.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

namespace sfw {

Gradient Gradient::zeros(const ProblemShape& shape) {
  Gradient g;
  g.x_blocks.reserve(shape.block_dims.size());
  for (Index p : shape.block_dims) g.x_blocks.push_back(VectorXd::Zero(p));
  g.y = VectorXd::Zero(shape.y_dim);
  return g;
}

Gradient& Gradient::operator+=(const Gradient& other) {
  for (std::size_t i = 0; i < x_blocks.size(); ++i) x_blocks[i] += other.x_blocks[i];
  y += other.y;
  return *this;
}

Gradient& Gradient::operator/=(double s) {
  for (auto& b : x_blocks) b /= s;
  y /= s;
  return *this;
}

GradientEstimate StochasticProblem::sample_batch(std::span<const VectorXd> x, const VectorXd& y, Index b,
                                                 Rng& rng) const {
  GradientEstimate est{Gradient::zeros(shape()), 0.0, b};
  for (Index i = 0; i < b; ++i) {
    const SampleGradient s = sample_gradient(x, y, rng);
    est.grad += s.grad;
    est.objective += s.loss;
  }
  est.grad /= static_cast<double>(b);
  est.objective /= static_cast<double>(b);
  return est;
}

Gradient StochasticProblem::exact_gradient(std::span<const VectorXd>, const VectorXd&) const {
  throw UnsupportedError("problem does not provide an exact gradient");
}

double StochasticProblem::exact_objective(std::span<const VectorXd>, const VectorXd&) const {
  throw UnsupportedError("problem does not provide an exact objective");
}

SampleGradient FiniteSumProblem::sample_gradient(std::span<const VectorXd> x, const VectorXd& y, Rng& rng) const {
  const Index i = static_cast<Index>(rng.index(static_cast<std::uint64_t>(num_samples())));
  GradientEstimate est = gradient_at(x, y, std::span<const Index>(&i, 1));
  return {std::move(est.grad), est.objective};
}

GradientEstimate FiniteSumProblem::sample_batch(std::span<const VectorXd> x, const VectorXd& y, Index b,
                                                Rng& rng) const {
  std::vector<Index> idx(static_cast<std::size_t>(b));
  for (auto& i : idx) i = static_cast<Index>(rng.index(static_cast<std::uint64_t>(num_samples())));
  return gradient_at(x, y, idx);
}

Gradient FiniteSumProblem::exact_gradient(std::span<const VectorXd> x, const VectorXd& y) const {
  std::vector<Index> idx(static_cast<std::size_t>(num_samples()));
  std::iota(idx.begin(), idx.end(), Index{0});
  return gradient_at(x, y, idx).grad;
}

double FiniteSumProblem::exact_objective(std::span<const VectorXd> x, const VectorXd& y) const {
  std::vector<Index> idx(static_cast<std::size_t>(num_samples()));
  std::iota(idx.begin(), idx.end(), Index{0});
  return gradient_at(x, y, idx).objective;
}

double finite_difference_check(const StochasticProblem& problem, std::span<const VectorXd> x, const VectorXd& y,
                               double epsilon) {
  const Gradient g = problem.exact_gradient(x, y);
  BlockVectors xs(x.begin(), x.end());
  VectorXd ys = y;
  double worst = 0.0;
  auto probe = [&](double& coord, double analytic) {
    const double saved = coord;
    coord = saved + epsilon;
    const double fp = problem.exact_objective(xs, ys);
    coord = saved - epsilon;
    const double fm = problem.exact_objective(xs, ys);
    coord = saved;
    const double fd = (fp - fm) / (2.0 * epsilon);
    const double denom = std::max({1.0, std::abs(fd), std::abs(analytic)});
    worst = std::max(worst, std::abs(fd - analytic) / denom);
  };
  for (std::size_t b = 0; b < xs.size(); ++b)
    for (Index j = 0; j < xs[b].size(); ++j) probe(xs[b][j], g.x_blocks[b][j]);
  for (Index j = 0; j < ys.size(); ++j) probe(ys[j], g.y[j]);
  return worst;
}

QuadraticInstance::QuadraticInstance(const QuadraticOptions& opts)
    : l_nabla_(opts.l_nabla), f_star_(opts.f_star), noise_sigma_(opts.noise_sigma) {
  shape_.block_dims = opts.block_dims;
  shape_.y_dim = opts.q;
  const Index p = std::accumulate(opts.block_dims.begin(), opts.block_dims.end(), Index{0});
  dim_ = p + opts.q;
  if (dim_ == 0) detail::fail_input("make_quadratic: p and q cannot both be zero");
  if (opts.q < 0 || std::any_of(opts.block_dims.begin(), opts.block_dims.end(), [](Index d) { return d < 1; }))
    detail::fail_input("make_quadratic: dimensions must be positive");
  if (!(opts.l_nabla > 0)) detail::fail_input("make_quadratic: l_nabla must be positive");
  if (opts.noise_sigma < 0) detail::fail_input("make_quadratic: noise_sigma must be nonnegative");
  if (opts.min_curvature_ratio < 0 || opts.min_curvature_ratio > 1)
    detail::fail_input("make_quadratic: min_curvature_ratio must lie in [0, 1]");

  Rng rng(opts.seed, Stream::kInit);
  Eigen::MatrixXd gauss(dim_, dim_);
  for (Index c = 0; c < dim_; ++c)
    for (Index r = 0; r < dim_; ++r) gauss(r, c) = rng.normal();
  const Eigen::MatrixXd basis = Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ();

  VectorXd eig(dim_);
  const double lo = opts.min_curvature_ratio * opts.l_nabla;
  for (Index i = 0; i < dim_; ++i) eig[i] = rng.uniform(lo, opts.l_nabla);
  eig[0] = opts.l_nabla;
  if (dim_ > 1) eig[dim_ - 1] = lo;
  min_eig_ = eig.minCoeff();
  hessian_ = basis * eig.asDiagonal() * basis.transpose();
  hessian_ = 0.5 * (hessian_ + hessian_.transpose()).eval();

  z_star_.resize(dim_);
  Index off = 0;
  for (Index d : opts.block_dims) {
    VectorXd xs(d);
    for (Index j = 0; j < d; ++j) xs[j] = rng.normal();
    const double l1 = xs.lpNorm<1>();
    if (l1 > 0) xs *= opts.x_star_l1 / l1;
    z_star_.segment(off, d) = xs;
    x_star_.push_back(xs);
    off += d;
  }
  y_star_.resize(opts.q);
  for (Index j = 0; j < opts.q; ++j) y_star_[j] = opts.y_star_scale * rng.normal();
  z_star_.tail(opts.q) = y_star_;
}

VectorXd QuadraticInstance::stack(std::span<const VectorXd> x, const VectorXd& y) const {
  if (x.size() != shape_.block_dims.size() || y.size() != shape_.y_dim)
    detail::fail_input("QuadraticInstance: point shape mismatch");
  VectorXd z(dim_);
  Index off = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != shape_.block_dims[i]) detail::fail_input("QuadraticInstance: block length mismatch");
    z.segment(off, x[i].size()) = x[i];
    off += x[i].size();
  }
  z.tail(y.size()) = y;
  return z;
}

Gradient QuadraticInstance::split(const VectorXd& z) const {
  Gradient g;
  Index off = 0;
  for (Index d : shape_.block_dims) {
    g.x_blocks.push_back(z.segment(off, d));
    off += d;
  }
  g.y = z.tail(shape_.y_dim);
  return g;
}

Gradient QuadraticInstance::exact_gradient(std::span<const VectorXd> x, const VectorXd& y) const {
  return split(hessian_ * (stack(x, y) - z_star_));
}

double QuadraticInstance::exact_objective(std::span<const VectorXd> x, const VectorXd& y) const {
  const VectorXd r = stack(x, y) - z_star_;
  return 0.5 * r.dot(hessian_ * r) + f_star_;
}

SampleGradient QuadraticInstance::sample_gradient(std::span<const VectorXd> x, const VectorXd& y, Rng& rng) const {
  const VectorXd r = stack(x, y) - z_star_;
  VectorXd g = hessian_ * r;
  if (noise_sigma_ > 0) {
    const double s = noise_sigma_ / std::sqrt(static_cast<double>(dim_));
    for (Index j = 0; j < dim_; ++j) g[j] += s * rng.normal();
  }
  return {split(g), 0.5 * r.dot(hessian_ * r) + f_star_};
}

QuadraticInstance make_quadratic(std::uint64_t seed, Index p, Index q, double l_nabla, double noise_sigma) {
  QuadraticOptions opts;
  opts.seed = seed;
  if (p > 0) opts.block_dims = {p};
  opts.q = q;
  opts.l_nabla = l_nabla;
  opts.noise_sigma = noise_sigma;
  return QuadraticInstance(opts);
}

GradientEstimate sample_gradient_batch(const StochasticProblem& problem, std::span<const VectorXd> x,
                                       const VectorXd& y, Index b, Rng& rng) {
  if (b < 1) detail::fail_input("sample_gradient_batch: batch size must be >= 1");
  return problem.sample_batch(x, y, b, rng);
}

}  // namespace sfw
