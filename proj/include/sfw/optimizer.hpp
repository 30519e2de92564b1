#pragma once

// Stochastic Frank-Wolfe / steepest-descent engine over a product of l1
// balls (constrained blocks x_i) and a free vector y, with optional in-face
// away steps.  Each block takes its own dynamic step G~_i / C_i.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sfw/gap.hpp"
#include "sfw/geometry.hpp"
#include "sfw/problem.hpp"

namespace sfw {

using Ball = L1Ball<double>;

struct BatchSchedule {
  enum class Kind { Constant, LinearInK, LinearInIter };
  Kind kind = Kind::Constant;
  Index size = 1;  // used by Constant

  /// b_k: `size`, K, or k + 1.
  Index at(Index k, Index total_iterations) const;

  static BatchSchedule constant(Index b) { return {Kind::Constant, b}; }
  static BatchSchedule linear_in_k() { return {Kind::LinearInK, 0}; }
  static BatchSchedule linear_in_iter() { return {Kind::LinearInIter, 0}; }
};

/// How the engine draws batches from a finite-sum problem.
enum class Sampling {
  WithReplacement,  // i.i.d. draws, the model the convergence analysis assumes
  ShuffledEpochs,   // consecutive slices of per-epoch permutations
};

struct OptimizerConfig {
  double l_nabla = 1.0;
  std::vector<double> c_bar_per_block;
  BatchSchedule batch = BatchSchedule::constant(1);
  bool alternative_directions = false;
  Norm norm_y = Norm::L2;
  Index iterations = 0;
  std::uint64_t seed = 0;
  bool alpha_clamp = true;
  double face_tol = kFaceTol;
  double nnz_threshold = 1e-3;
  Sampling sampling = Sampling::WithReplacement;

  /// Throws InputError unless every C_i >= 2 L diam(S_i)^2 and the rest is in range.
  void validate(std::span<const Ball> balls) const;

  GapConstants<double> gap_constants(std::span<const Ball> balls) const;

  /// Fills c_bar_per_block with factor * 2 L diam(S_i)^2.
  void set_c_bar_from_diameters(std::span<const Ball> balls, double factor = 1.0);
};

struct Iterate {
  BlockVectors x_blocks;
  VectorXd y;
  Index k = 0;
};

struct TraceRecord {
  Index k = 0;
  double gap_hat = 0.0;
  double objective_estimate = 0.0;
  std::vector<double> alpha_bar_per_block;
  std::vector<bool> alpha_clamped;
  double alpha_sd = 0.0;
  std::vector<std::optional<double>> beta_bar_per_block;  // empty without alt steps
  std::vector<bool> alt_step_taken;
  std::vector<Index> nnz_per_block;  // of x_{k+1}
};

struct FwStepResult {
  BlockVectors x_bar;
  std::vector<double> g_tilde;
  std::vector<double> alpha_bar;
  std::vector<bool> clamped;
};

/// Per-block Frank-Wolfe step toward the LMO vertex with alpha_i = G~_i / C_i.
FwStepResult fw_step(std::span<const VectorXd> x, std::span<const VectorXd> g_hat, std::span<const Ball> balls,
                     const OptimizerConfig& config);

struct SdStepResult {
  VectorXd y_next;
  double alpha = 0.0;
};

/// Steepest descent in y: y - (||h||_* / 2L) * argmax_{||u|| <= 1} h^T u.
SdStepResult sd_step(const VectorXd& y, const VectorXd& h_hat, const OptimizerConfig& config);

struct AltBlockInfo {
  double a = 0.0;  // -g_check^T d
  double alpha_stop = 0.0;
  double beta_bar = 0.0;
  bool taken = false;
  bool hit_stop = false;  // beta_bar == alpha_stop
};

struct AltStepResult {
  BlockVectors x_next;
  std::vector<AltBlockInfo> info;
};

/// Per-block away step restricted to the minimal face of x_bar, with step
/// min(A_i / C_i, alpha_stop_i).  Blocks whose away direction is not a strict
/// descent direction stay at x_bar.  Coordinates that reach the end of the
/// face are set to exactly zero.
AltStepResult alt_step(std::span<const VectorXd> x_bar, std::span<const VectorXd> g_check,
                       std::span<const Ball> balls, const OptimizerConfig& config);

struct RunResult {
  Iterate output;            // uniformly drawn from x_0..x_K
  Index output_index = 0;
  Iterate final_iterate;     // x_K
  std::vector<TraceRecord> trace;
  std::uint64_t digest = 0;  // FNV-1a over all iterates in order
  std::uint64_t samples_consumed = 0;
};

/// Called with x_0, x_1, ..., x_K as they are produced.
using IterateObserver = std::function<void(const Iterate&)>;

RunResult run(const StochasticProblem& problem, std::span<const Ball> balls, const VectorXd& y0,
              std::span<const VectorXd> x0_blocks, const OptimizerConfig& config,
              const IterateObserver& observer = {});

/// Number of entries with |v_j| >= threshold.
Index count_nonzeros(const VectorXd& v, double threshold);

}  // namespace sfw
