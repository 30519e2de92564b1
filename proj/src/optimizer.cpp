#include "sfw/optimizer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

namespace sfw {

Index BatchSchedule::at(Index k, Index total_iterations) const {
  switch (kind) {
    case Kind::Constant:
      return size;
    case Kind::LinearInK:
      return std::max<Index>(total_iterations, 1);
    case Kind::LinearInIter:
      return k + 1;
  }
  return size;
}

void OptimizerConfig::validate(std::span<const Ball> balls) const {
  if (!(l_nabla > 0) || !std::isfinite(l_nabla)) detail::fail_input("optimizer: l_nabla must be positive");
  if (iterations < 0) detail::fail_input("optimizer: iteration budget must be >= 0");
  if (batch.kind == BatchSchedule::Kind::Constant && batch.size < 1)
    detail::fail_input("optimizer: constant batch size must be >= 1");
  if (face_tol < 0) detail::fail_input("optimizer: face_tol must be nonnegative");
  // Checks C_i against 2 L diam(S_i)^2; the L_f part of the requirement is the caller's.
  (void)gap_constants(balls);
}

GapConstants<double> OptimizerConfig::gap_constants(std::span<const Ball> balls) const {
  return GapConstants<double>::from_blocks(l_nabla, std::span<const double>(c_bar_per_block), balls);
}

void OptimizerConfig::set_c_bar_from_diameters(std::span<const Ball> balls, double factor) {
  c_bar_per_block.clear();
  for (const Ball& b : balls) c_bar_per_block.push_back(factor * 2.0 * l_nabla * b.diameter() * b.diameter());
}

Index count_nonzeros(const VectorXd& v, double threshold) {
  Index n = 0;
  for (Index j = 0; j < v.size(); ++j)
    if (threshold > 0 ? std::abs(v[j]) >= threshold : v[j] != 0.0) ++n;
  return n;
}

namespace {

void check_blocks(std::span<const VectorXd> x, std::span<const Ball> balls, const char* who) {
  if (x.size() != balls.size()) detail::fail_input(std::string(who) + ": block count mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) balls[i].check_dim(x[i], who);
}

}  // namespace

FwStepResult fw_step(std::span<const VectorXd> x, std::span<const VectorXd> g_hat, std::span<const Ball> balls,
                     const OptimizerConfig& config) {
  check_blocks(x, balls, "fw_step");
  check_blocks(g_hat, balls, "fw_step");
  if (config.c_bar_per_block.size() != balls.size()) detail::fail_input("fw_step: one C_i per block is required");
  FwStepResult out;
  const std::size_t n = balls.size();
  out.x_bar.reserve(n);
  out.g_tilde.resize(n);
  out.alpha_bar.resize(n);
  out.clamped.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const Vertex<double> v = lmo(balls[i], g_hat[i]);
    const double gap = detail::clamp_gap(g_hat[i].dot(x[i] - v.value), i);
    double alpha = gap / config.c_bar_per_block[i];
    if (config.alpha_clamp && alpha > 1.0) {
      alpha = 1.0;
      out.clamped[i] = true;
    }
    out.g_tilde[i] = gap;
    out.alpha_bar[i] = alpha;
    out.x_bar.push_back(alpha == 0.0 ? x[i] : VectorXd(x[i] + alpha * (v.value - x[i])));
  }
  return out;
}

SdStepResult sd_step(const VectorXd& y, const VectorXd& h_hat, const OptimizerConfig& config) {
  if (y.size() != h_hat.size()) detail::fail_input("sd_step: y and h have different lengths");
  SdStepResult out{y, 0.0};
  const double dn = dual_norm(h_hat, config.norm_y);
  if (dn == 0.0) return out;
  out.alpha = dn / (2.0 * config.l_nabla);
  if (config.norm_y == Norm::L2) {
    out.y_next = y - out.alpha * (h_hat / dn);
  } else {
    // Greedy coordinate step on the largest |h_j| (lowest index on ties).
    Index j = 0;
    for (Index i = 1; i < h_hat.size(); ++i)
      if (std::abs(h_hat[i]) > std::abs(h_hat[j])) j = i;
    out.y_next[j] -= out.alpha * (h_hat[j] > 0 ? 1.0 : -1.0);
  }
  return out;
}

AltStepResult alt_step(std::span<const VectorXd> x_bar, std::span<const VectorXd> g_check,
                       std::span<const Ball> balls, const OptimizerConfig& config) {
  check_blocks(x_bar, balls, "alt_step");
  check_blocks(g_check, balls, "alt_step");
  if (config.c_bar_per_block.size() != balls.size()) detail::fail_input("alt_step: one C_i per block is required");
  AltStepResult out;
  out.x_next.reserve(balls.size());
  out.info.resize(balls.size());
  for (std::size_t i = 0; i < balls.size(); ++i) {
    const Ball& ball = balls[i];
    const AwayDirection<double> away = away_direction(ball, x_bar[i], g_check[i], config.face_tol);
    AltBlockInfo& info = out.info[i];
    if (!away.accepted) {
      out.x_next.push_back(x_bar[i]);
      continue;
    }
    info.a = -g_check[i].dot(away.d);
    const auto lim = detail::feasible_step_limit(ball, x_bar[i], away.d, true, config.face_tol);
    info.alpha_stop = lim.alpha;
    const double beta = info.a / config.c_bar_per_block[i];
    info.hit_stop = beta >= lim.alpha;
    info.beta_bar = info.hit_stop ? lim.alpha : beta;
    info.taken = true;
    VectorXd next = x_bar[i] + info.beta_bar * away.d;
    if (info.hit_stop && lim.blocking >= 0) next[lim.blocking] = 0.0;
    // On a boundary face, round-off must not flip the sign of a support
    // coordinate.  Interior steps may legitimately cross zero.
    if (minimal_face(ball, x_bar[i], config.face_tol).on_boundary)
      for (Index j = 0; j < next.size(); ++j)
        if ((x_bar[i][j] > 0 && next[j] < 0) || (x_bar[i][j] < 0 && next[j] > 0)) next[j] = 0.0;
    out.x_next.push_back(std::move(next));
  }
  return out;
}

namespace {

class Digest {
 public:
  void add(const VectorXd& v) {
    for (Index j = 0; j < v.size(); ++j) add_word(std::bit_cast<std::uint64_t>(v[j]));
  }
  void add(const Iterate& it) {
    add_word(static_cast<std::uint64_t>(it.k));
    for (const auto& b : it.x_blocks) add(b);
    add(it.y);
  }
  std::uint64_t value() const { return h_; }

 private:
  void add_word(std::uint64_t w) {
    for (int i = 0; i < 8; ++i) {
      h_ ^= (w >> (8 * i)) & 0xffu;
      h_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

// Batch source: i.i.d. draws from a per-(purpose, k) stream, or slices of
// shuffled epochs for finite-sum problems.
class BatchSource {
 public:
  BatchSource(const StochasticProblem& problem, const OptimizerConfig& config) : problem_(problem), config_(config) {
    if (config.sampling == Sampling::ShuffledEpochs) {
      finite_ = dynamic_cast<const FiniteSumProblem*>(&problem);
      if (finite_ == nullptr) detail::fail_input("optimizer: shuffled epochs need a finite-sum problem");
    }
  }

  GradientEstimate draw(std::span<const VectorXd> x, const VectorXd& y, Index b, Stream purpose, Index k) {
    if (b < 1) detail::fail_input("optimizer: batch size must be >= 1");
    consumed_ += static_cast<std::uint64_t>(b);
    GradientEstimate est;
    if (finite_ == nullptr) {
      Rng rng(config_.seed, purpose, static_cast<std::uint64_t>(k));
      est = problem_.sample_batch(x, y, b, rng);
    } else {
      est = finite_->gradient_at(x, y, next_indices(b));
    }
    bool finite = std::isfinite(est.objective) && est.grad.y.allFinite();
    for (const auto& g : est.grad.x_blocks) finite = finite && g.allFinite();
    if (!finite) throw DivergenceError("optimizer diverged: non-finite gradient at iteration " + std::to_string(k));
    return est;
  }

  std::uint64_t consumed() const { return consumed_; }

 private:
  std::vector<Index> next_indices(Index b) {
    std::vector<Index> idx;
    idx.reserve(static_cast<std::size_t>(b));
    while (static_cast<Index>(idx.size()) < b) {
      if (cursor_ >= perm_.size()) reshuffle();
      idx.push_back(perm_[cursor_++]);
    }
    return idx;
  }

  void reshuffle() {
    perm_.resize(static_cast<std::size_t>(finite_->num_samples()));
    std::iota(perm_.begin(), perm_.end(), Index{0});
    Rng rng(config_.seed, Stream::kEpoch, epoch_++);
    for (std::size_t i = perm_.size(); i > 1; --i) std::swap(perm_[i - 1], perm_[rng.index(i)]);
    cursor_ = 0;
  }

  const StochasticProblem& problem_;
  const OptimizerConfig& config_;
  const FiniteSumProblem* finite_ = nullptr;
  std::vector<Index> perm_;
  std::size_t cursor_ = 0;
  std::uint64_t epoch_ = 0;
  std::uint64_t consumed_ = 0;
};

}  // namespace

RunResult run(const StochasticProblem& problem, std::span<const Ball> balls, const VectorXd& y0,
              std::span<const VectorXd> x0_blocks, const OptimizerConfig& config, const IterateObserver& observer) {
  config.validate(balls);
  const ProblemShape shape = problem.shape();
  if (shape.block_dims.size() != balls.size()) detail::fail_input("run: problem and balls disagree on block count");
  for (std::size_t i = 0; i < balls.size(); ++i)
    if (shape.block_dims[i] != balls[i].dim()) detail::fail_input("run: block dimension mismatch");
  if (y0.size() != shape.y_dim) detail::fail_input("run: y0 has the wrong length");
  check_blocks(x0_blocks, balls, "run");
  for (std::size_t i = 0; i < balls.size(); ++i)
    if (!balls[i].contains(x0_blocks[i], 1e-10)) detail::fail_input("run: x0 block " + std::to_string(i) + " is infeasible");

  const GapConstants<double> constants = config.gap_constants(balls);
  const Index total = config.iterations;

  RunResult result;
  Rng out_rng(config.seed, Stream::kOutputIndex);
  result.output_index = static_cast<Index>(out_rng.index(static_cast<std::uint64_t>(total) + 1));
  result.trace.reserve(static_cast<std::size_t>(total));

  Iterate cur{BlockVectors(x0_blocks.begin(), x0_blocks.end()), y0, 0};
  Digest digest;
  auto visit = [&](const Iterate& it) {
    digest.add(it);
    if (it.k == result.output_index) result.output = it;
    if (observer) observer(it);
  };
  visit(cur);

  BatchSource source(problem, config);
  for (Index k = 0; k < total; ++k) {
    const Index b = config.batch.at(k, total);
    const GradientEstimate est = source.draw(cur.x_blocks, cur.y, b, Stream::kSampling, k);

    TraceRecord rec;
    rec.k = k;
    rec.objective_estimate = est.objective;
    rec.gap_hat = gap_estimate<double>(cur.x_blocks, est.grad.x_blocks, est.grad.y, balls, config.norm_y, constants).value;

    FwStepResult fw = fw_step(cur.x_blocks, est.grad.x_blocks, balls, config);
    SdStepResult sd = sd_step(cur.y, est.grad.y, config);
    rec.alpha_bar_per_block = fw.alpha_bar;
    rec.alpha_clamped = fw.clamped;
    rec.alpha_sd = sd.alpha;

    BlockVectors next;
    if (config.alternative_directions) {
      const GradientEstimate check = source.draw(fw.x_bar, sd.y_next, b, Stream::kAltBatch, k);
      AltStepResult alt = alt_step(fw.x_bar, check.grad.x_blocks, balls, config);
      rec.beta_bar_per_block.reserve(balls.size());
      for (const AltBlockInfo& info : alt.info) {
        rec.alt_step_taken.push_back(info.taken);
        rec.beta_bar_per_block.push_back(info.taken ? std::optional<double>(info.beta_bar) : std::nullopt);
      }
      next = std::move(alt.x_next);
    } else {
      next = std::move(fw.x_bar);
    }

    cur = Iterate{std::move(next), std::move(sd.y_next), k + 1};
    rec.nnz_per_block.reserve(balls.size());
    for (const auto& blk : cur.x_blocks) rec.nnz_per_block.push_back(count_nonzeros(blk, config.nnz_threshold));
    result.trace.push_back(std::move(rec));
    visit(cur);
  }

  result.final_iterate = std::move(cur);
  result.digest = digest.value();
  result.samples_consumed = source.consumed();
  return result;
}

}  // namespace sfw
