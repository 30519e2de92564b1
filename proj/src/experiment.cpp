#include "sfw/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "sfw/optimizer.hpp"

namespace sfw {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out = open_for_writing(path, true);
  out << text;
  if (!out) throw FormatError("write failed: " + path);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

OptimizerConfig optimizer_config(const ExperimentConfig& cfg, std::span<const Ball> balls, Index iterations) {
  OptimizerConfig oc;
  oc.l_nabla = cfg.l_nabla;
  oc.batch = cfg.batch;
  oc.alternative_directions = cfg.method == Method::SFW_IF;
  oc.norm_y = cfg.norm_y;
  oc.iterations = iterations;
  oc.seed = cfg.seed;
  oc.alpha_clamp = cfg.alpha_clamp;
  oc.face_tol = cfg.face_tol;
  oc.nnz_threshold = cfg.nnz_threshold;
  oc.sampling = cfg.sampling;
  oc.set_c_bar_from_diameters(balls, cfg.c_bar_scale);
  return oc;
}

std::string trace_csv(const RunResult& r, const std::vector<std::vector<double>>& nnz_layers,
                      std::span<const Index> layers, std::size_t n_blocks, Index window) {
  std::vector<double> gaps;
  gaps.reserve(r.trace.size());
  for (const TraceRecord& t : r.trace) gaps.push_back(t.gap_hat);
  const std::vector<double> smooth = smooth_trailing(gaps, window);
  std::string out = trace_header(n_blocks, layers);
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    const TraceRecord& t = r.trace[i];
    out += std::to_string(t.k) + "," + num(t.objective_estimate) + "," + num(t.gap_hat) + "," + num(smooth[i]);
    for (double a : t.alpha_bar_per_block) out += "," + num(a);
    out += "," + num(t.alpha_sd);
    if (i + 1 < nnz_layers.size())
      for (double v : nnz_layers[i + 1]) out += "," + num(v);
    out += "\n";
  }
  return out;
}

TrainOutcome train_quadratic(const ExperimentConfig& cfg) {
  QuadraticOptions qo;
  qo.seed = derive_seed(cfg.seed, Stream::kData);
  if (cfg.quad_p > 0) qo.block_dims = {cfg.quad_p};
  qo.q = cfg.quad_q;
  qo.l_nabla = cfg.l_nabla;
  qo.noise_sigma = cfg.quad_noise;
  qo.x_star_l1 = 0.5 * cfg.quad_radius;
  const QuadraticInstance problem(qo);
  std::vector<Ball> balls;
  if (cfg.quad_p > 0) balls.emplace_back(cfg.quad_p, cfg.quad_radius, cfg.norm_x);
  const Index iters = cfg.effective_iterations(0);
  const OptimizerConfig oc = optimizer_config(cfg, balls, iters);
  const BlockVectors x0(balls.size(), VectorXd::Zero(cfg.quad_p));
  const RunResult r = run(problem, balls, VectorXd::Zero(cfg.quad_q), x0, oc);
  const Iterate& it = cfg.output == OutputChoice::Final ? r.final_iterate : r.output;
  const GapEstimate<double> g =
      exact_gap<QuadraticInstance, double>(problem, it.x_blocks, it.y, balls, cfg.norm_y, oc.gap_constants(balls));

  TrainOutcome out;
  out.trace_csv = trace_csv(r, {}, {}, balls.size(), cfg.smoothing_window);
  out.metrics["effective_iterations"] = static_cast<double>(iters);
  out.metrics["samples_consumed"] = static_cast<double>(r.samples_consumed);
  out.metrics["output_index"] = static_cast<double>(r.output_index);
  out.metrics["final_objective"] = problem.exact_objective(it.x_blocks, it.y);
  out.metrics["f_star"] = problem.f_star();
  out.metrics["final_gap"] = g.value;
  std::string rep = cfg.source.echo();
  rep += std::string(kResultsMarker) + "\n";
  rep += "iterate_digest = " + std::to_string(r.digest) + "\n";
  for (const auto& [k, v] : out.metrics) rep += k + " = " + num(v) + "\n";
  out.report = std::move(rep);
  return out;
}

}  // namespace

std::string trace_header(std::size_t n_blocks, std::span<const Index> nnz_layers) {
  std::string h = "k,objective_estimate,gap_hat,gap_hat_smoothed";
  for (std::size_t i = 0; i < n_blocks; ++i) h += ",alpha_bar_" + std::to_string(i);
  h += ",alpha_sd";
  for (Index t : nnz_layers) h += ",nnz_layer_" + std::to_string(t);
  return h + "\n";
}

ExperimentData load_data(const ExperimentConfig& cfg) {
  ExperimentData d;
  if (cfg.problem == ProblemKind::SyntheticNet) {
    SynthData s = generate_synthetic(cfg.synth);
    d.train = std::make_shared<const Dataset>(std::move(s.train));
    d.val = std::make_shared<const Dataset>(std::move(s.val));
    d.test = std::make_shared<const Dataset>(std::move(s.test));
  } else if (cfg.problem == ProblemKind::DatasetFile) {
    d.train = std::make_shared<const Dataset>(read_dataset(cfg.train_data));
    if (!cfg.val_data.empty()) d.val = std::make_shared<const Dataset>(read_dataset(cfg.val_data));
    if (!cfg.test_data.empty()) d.test = std::make_shared<const Dataset>(read_dataset(cfg.test_data));
  }
  return d;
}

TrainOutcome train(const ExperimentConfig& cfg, const ExperimentData& data) {
  const auto start = std::chrono::steady_clock::now();
  TrainOutcome out;
  if (cfg.problem == ProblemKind::Quadratic) {
    out = train_quadratic(cfg);
  } else {
    if (!data.train) throw InputError("train: no training data");
    const MLPSpec& model = cfg.net;
    MLPSpec train_spec = model;
    if (cfg.method == Method::SGD) {
      train_spec.fw_layers.clear();
      train_spec.delta_per_layer.clear();
    }
    const NetProblem problem(train_spec, data.train);
    const ParamLayout& layout = problem.layout();
    const auto [x0, y0] = layout.pack(init_params(train_spec, cfg.seed));
    const std::vector<Ball> balls = layout.balls(cfg.norm_x);
    const Index iters = cfg.effective_iterations(data.train->size());
    const OptimizerConfig oc = optimizer_config(cfg, balls, iters);

    std::vector<std::vector<double>> nnz_trace;
    nnz_trace.reserve(static_cast<std::size_t>(iters) + 1);
    const RunResult r = run(problem, balls, y0, x0, oc, [&](const Iterate& it) {
      nnz_trace.push_back(nnz_metrics(layout.unpack(it.x_blocks, it.y), model.fw_layers, cfg.nnz_threshold));
    });
    const Iterate& it = cfg.output == OutputChoice::Final ? r.final_iterate : r.output;
    const MLPParams params = layout.unpack(it.x_blocks, it.y);

    out.trace_csv = trace_csv(r, nnz_trace, model.fw_layers, balls.size(), cfg.smoothing_window);
    out.checkpoint = Checkpoint{model, params};
    auto& m = out.metrics;
    m["effective_iterations"] = static_cast<double>(iters);
    m["samples_consumed"] = static_cast<double>(r.samples_consumed);
    m["output_index"] = static_cast<double>(r.output_index);
    m["train_loss"] = evaluate(model, params, *data.train).loss;
    if (data.val && data.val->size() > 0) m["val_loss"] = evaluate(model, params, *data.val).loss;
    const std::vector<double> nnz = nnz_metrics(params, model.fw_layers, cfg.nnz_threshold);
    for (std::size_t i = 0; i < nnz.size(); ++i) m["nnz_layer_" + std::to_string(model.fw_layers[i])] = nnz[i];
    if (data.test && data.test->size() > 0) {
      const Evaluation ev = evaluate(model, params, *data.test);
      m["test_loss"] = ev.loss;
      if (model.loss == Loss::SoftmaxCrossEntropy) m["test_accuracy"] = ev.accuracy;
      for (double theta : cfg.thetas) {
        const Evaluation th = evaluate(model, hard_threshold(params, model.fw_layers, theta), *data.test);
        const std::string key = "threshold_" + num(theta);
        m[key + "_test_loss"] = th.loss;
        if (model.loss == Loss::SoftmaxCrossEntropy) m[key + "_test_accuracy"] = th.accuracy;
      }
    }
    if (!r.trace.empty()) {
      std::vector<double> gaps;
      for (const TraceRecord& t : r.trace) gaps.push_back(t.gap_hat);
      m["final_gap_hat_smoothed"] = smooth_trailing(gaps, cfg.smoothing_window).back();
    }
    std::string rep = cfg.source.echo();
    rep += std::string(kResultsMarker) + "\n";
    rep += "iterate_digest = " + std::to_string(r.digest) + "\n";
    for (const auto& [k, v] : m) rep += k + " = " + num(v) + "\n";
    out.report = std::move(rep);
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

TrainOutcome cmd_train(const ExperimentConfig& cfg) {
  TrainOutcome out = train(cfg, load_data(cfg));
  write_text(cfg.trace_path, out.trace_csv);
  write_text(cfg.report_path, out.report);
  if (out.checkpoint) write_checkpoint(cfg.checkpoint_path, *out.checkpoint);
  return out;
}

std::string threshold_eval_csv(const Checkpoint& ckpt, const Dataset& data, std::span<const double> thetas) {
  if (data.features.rows() != ckpt.spec.input_dim() || data.targets.rows() != ckpt.spec.output_dim())
    throw InputError("threshold-eval: dataset shape does not match the checkpoint");
  std::string out = "theta,loss,accuracy\n";
  for (double theta : thetas) {
    const Evaluation ev = evaluate(ckpt.spec, hard_threshold(ckpt.params, ckpt.spec.fw_layers, theta), data);
    out += num(theta) + "," + num(ev.loss) + "," +
           (ckpt.spec.loss == Loss::SoftmaxCrossEntropy ? num(ev.accuracy) : std::string()) + "\n";
  }
  return out;
}

void cmd_synth(const SynthSpec& synth, const std::string& prefix, bool binary) {
  const SynthData s = generate_synthetic(synth);
  const std::string ext = binary ? ".bin" : ".csv";
  const auto write = binary ? write_dataset_binary : write_dataset_csv;
  write(prefix + "_train" + ext, s.train);
  write(prefix + "_val" + ext, s.val);
  write(prefix + "_test" + ext, s.test);
  write_checkpoint(prefix + "_true.ckpt", Checkpoint{s.true_spec, s.true_params});
}

void validate_teacher(const Checkpoint& teacher, Index m) {
  for (Index t : teacher.spec.fw_layers) {
    const MatrixXd& w = teacher.params.weights[t];
    for (Index r = 0; r < w.rows(); ++r) {
      Index nz = 0;
      for (Index c = 0; c < w.cols(); ++c) {
        if (w(r, c) == 0.0) continue;
        if (std::abs(w(r, c)) != 1.0) throw FormatError("teacher weight is not +-1");
        ++nz;
      }
      if (nz != m)
        throw FormatError("teacher layer " + std::to_string(t) + " node " + std::to_string(r) + " has " +
                          std::to_string(nz) + " incoming edges, expected " + std::to_string(m));
    }
  }
}

std::vector<double> smooth_trailing(std::span<const double> series, Index window) {
  if (window < 1) throw InputError("smoothing window must be >= 1");
  const auto w = static_cast<std::size_t>(window);
  std::vector<double> out(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    const std::size_t first = i + 1 >= w ? i + 1 - w : 0;
    double sum = 0.0;
    for (std::size_t j = first; j <= i; ++j) sum += series[j];
    out[i] = sum / static_cast<double>(i + 1 - first);
  }
  return out;
}

std::string gap_trace_csv(const std::string& text, Index window) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("gap-trace: empty trace");
  std::vector<std::string> cols;
  {
    std::stringstream hs(line);
    std::string c;
    while (std::getline(hs, c, ',')) cols.push_back(c);
  }
  std::size_t k_col = cols.size(), g_col = cols.size();
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] == "k") k_col = i;
    if (cols[i] == "gap_hat") g_col = i;
  }
  if (k_col == cols.size() || g_col == cols.size()) throw FormatError("gap-trace: missing k or gap_hat column");
  std::vector<std::string> ks;
  std::vector<double> gaps;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    if (cells.size() != cols.size())
      throw FormatError("gap-trace: line " + std::to_string(lineno) + " has the wrong number of columns");
    char* end = nullptr;
    const double g = std::strtod(cells[g_col].c_str(), &end);
    if (end == cells[g_col].c_str() || *end != '\0')
      throw FormatError("gap-trace: line " + std::to_string(lineno) + ": bad gap_hat value");
    ks.push_back(cells[k_col]);
    gaps.push_back(g);
  }
  const std::vector<double> s = smooth_trailing(gaps, window);
  std::string out = "k,gap_hat,gap_hat_smoothed\n";
  for (std::size_t i = 0; i < gaps.size(); ++i) out += ks[i] + "," + num(gaps[i]) + "," + num(s[i]) + "\n";
  return out;
}

GridOutcome cmd_grid(const ExperimentConfig& cfg) {
  if (cfg.problem == ProblemKind::Quadratic) throw ConfigError("grid search applies to network problems");
  const ExperimentData data = load_data(cfg);
  if (!data.val || data.val->size() == 0) throw ConfigError("grid search needs a validation set");

  const bool uses_delta = cfg.method != Method::SGD && !cfg.net.fw_layers.empty();
  if (cfg.grid_l_nabla.empty() || (uses_delta && cfg.grid_delta.empty()))
    throw ConfigError("grid search needs nonempty grid_l_nabla and grid_delta");
  const std::size_t n_layers = uses_delta ? cfg.net.fw_layers.size() : 0;
  std::vector<GridPoint> points;
  std::vector<std::size_t> digits(n_layers, 0);
  for (double l : cfg.grid_l_nabla) {
    while (true) {
      GridPoint p;
      p.l_nabla = l;
      for (std::size_t i = 0; i < n_layers; ++i) p.deltas.push_back(cfg.grid_delta[digits[i]]);
      if (!uses_delta) p.deltas = cfg.net.delta_per_layer;
      std::string key = "l=" + num(l);
      for (double d : p.deltas) key += ";d=" + num(d);
      p.seed = derive_seed(cfg.seed, Stream::kInit, fnv1a(key));
      points.push_back(std::move(p));
      std::size_t i = 0;
      while (i < n_layers && ++digits[i] == cfg.grid_delta.size()) digits[i++] = 0;
      if (i == n_layers) break;
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= points.size()) return;
      try {
        KeyValueConfig kv = cfg.source;
        kv.set("l_nabla", num(points[i].l_nabla));
        std::string ds;
        for (double d : points[i].deltas) ds += (ds.empty() ? "" : ",") + num(d);
        kv.set("deltas", ds);
        kv.set("seed", std::to_string(points[i].seed));
        const TrainOutcome o = train(ExperimentConfig::from(kv), data);
        points[i].val_loss = o.metrics.at("val_loss");
        const auto t = o.metrics.find("test_loss");
        points[i].test_loss = t == o.metrics.end() ? std::numeric_limits<double>::quiet_NaN() : t->second;
      } catch (const DivergenceError&) {
        points[i].val_loss = std::numeric_limits<double>::infinity();
        points[i].test_loss = std::numeric_limits<double>::quiet_NaN();
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (Index t = 1; t < cfg.grid_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);

  GridOutcome out;
  for (std::size_t i = 1; i < points.size(); ++i)
    if (points[i].val_loss < points[out.best].val_loss) out.best = i;
  out.csv = "l_nabla";
  for (std::size_t i = 0; i < cfg.net.delta_per_layer.size(); ++i) out.csv += ",delta_" + std::to_string(i);
  out.csv += ",seed,val_loss,test_loss,best\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const GridPoint& p = points[i];
    out.csv += num(p.l_nabla);
    for (double d : p.deltas) out.csv += "," + num(d);
    out.csv += "," + std::to_string(p.seed) + "," + num(p.val_loss) + "," + num(p.test_loss) + "," +
               (i == out.best ? "1" : "0") + "\n";
  }
  out.points = std::move(points);
  write_text(cfg.grid_path, out.csv);
  return out;
}

}  // namespace sfw
