#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sfw/config.hpp"
#include "sfw/io.hpp"
#include "sfw/mlp.hpp"

namespace sfw {

/// Datasets an experiment trains and evaluates on.
struct ExperimentData {
  std::shared_ptr<const Dataset> train, val, test;
};

ExperimentData load_data(const ExperimentConfig& cfg);

struct TrainOutcome {
  std::string report;     // "key = value" lines, deterministic given the config
  std::string trace_csv;
  std::optional<Checkpoint> checkpoint;  // network problems only
  std::map<std::string, double> metrics;
  double wall_seconds = 0.0;
};

/// Trains per `cfg` on preloaded data; writes nothing.
TrainOutcome train(const ExperimentConfig& cfg, const ExperimentData& data);

/// Loads data, trains, and writes trace, report, and checkpoint files.
TrainOutcome cmd_train(const ExperimentConfig& cfg);

/// CSV "theta,loss,accuracy": one row per theta after hard thresholding the
/// checkpoint's fw layers.
std::string threshold_eval_csv(const Checkpoint& ckpt, const Dataset& data, std::span<const double> thetas);

/// Writes <prefix>_{train,val,test}.{csv|bin} and <prefix>_true.ckpt.
void cmd_synth(const SynthSpec& synth, const std::string& prefix, bool binary);

/// Checks that every node of the teacher's sparse layers has exactly m
/// incoming weights, all +-1.  Throws FormatError otherwise.
void validate_teacher(const Checkpoint& teacher, Index m);

/// Trailing moving average; entry k averages the last min(k+1, window) values.
std::vector<double> smooth_trailing(std::span<const double> series, Index window);

/// Reads a trace CSV and returns "k,gap_hat,gap_hat_smoothed".
std::string gap_trace_csv(const std::string& trace_csv_text, Index window);

/// Header row of the trace CSV for the given column counts.
std::string trace_header(std::size_t n_blocks, std::span<const Index> nnz_layers);

struct GridPoint {
  double l_nabla = 0.0;
  std::vector<double> deltas;
  std::uint64_t seed = 0;
  double val_loss = 0.0;
  double test_loss = 0.0;
};

struct GridOutcome {
  std::vector<GridPoint> points;  // in enumeration order
  std::size_t best = 0;           // lowest validation loss, earliest on ties
  std::string csv;
};

/// Cross-validates (L, per-layer delta) over the configured grids.
GridOutcome cmd_grid(const ExperimentConfig& cfg);

}  // namespace sfw
