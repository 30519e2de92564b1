#include "sfw/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace sfw {

namespace {

double activate(Activation a, double z) {
  if (a == Activation::Sigmoid) return 1.0 / (1.0 + std::exp(-z));
  return z > 0.0 ? z : 0.0;
}

// Derivative expressed through the pre-activation z and activation value s.
double activate_grad(Activation a, double z, double s) {
  if (a == Activation::Sigmoid) return s * (1.0 - s);
  return z > 0.0 ? 1.0 : 0.0;
}

VectorXd softmax(const VectorXd& logits) {
  const double mx = logits.maxCoeff();
  VectorXd e = (logits.array() - mx).exp();
  return e / e.sum();
}

}  // namespace

bool MLPSpec::is_fw_layer(Index t) const { return std::find(fw_layers.begin(), fw_layers.end(), t) != fw_layers.end(); }

double MLPSpec::delta_for(Index t) const {
  for (std::size_t i = 0; i < fw_layers.size(); ++i)
    if (fw_layers[i] == t) return delta_per_layer[i];
  detail::fail_input("MLPSpec: layer " + std::to_string(t) + " is not a Frank-Wolfe layer");
}

void MLPSpec::validate() const {
  if (layer_sizes.size() < 2) detail::fail_input("MLPSpec: need at least input and output sizes");
  for (Index s : layer_sizes)
    if (s < 1) detail::fail_input("MLPSpec: layer sizes must be positive");
  if (fw_layers.size() != delta_per_layer.size()) detail::fail_input("MLPSpec: one delta per fw layer is required");
  for (std::size_t i = 0; i < fw_layers.size(); ++i) {
    if (fw_layers[i] < 0 || fw_layers[i] >= num_weight_layers())
      detail::fail_input("MLPSpec: fw layer " + std::to_string(fw_layers[i]) + " out of range");
    if (!(delta_per_layer[i] > 0)) detail::fail_input("MLPSpec: deltas must be positive");
    for (std::size_t j = 0; j < i; ++j)
      if (fw_layers[j] == fw_layers[i]) detail::fail_input("MLPSpec: duplicate fw layer");
  }
  if (loss == Loss::SoftmaxCrossEntropy && output_dim() < 2)
    detail::fail_input("MLPSpec: cross-entropy needs at least two outputs");
}

MLPParams MLPParams::zeros(const MLPSpec& spec) {
  MLPParams p;
  for (Index t = 0; t < spec.num_weight_layers(); ++t) {
    p.weights.push_back(MatrixXd::Zero(spec.layer_sizes[t + 1], spec.layer_sizes[t]));
    if (spec.bias) p.biases.push_back(VectorXd::Zero(spec.layer_sizes[t + 1]));
  }
  return p;
}

MLPParams& MLPParams::operator+=(const MLPParams& o) {
  for (std::size_t t = 0; t < weights.size(); ++t) weights[t] += o.weights[t];
  for (std::size_t t = 0; t < biases.size(); ++t) biases[t] += o.biases[t];
  return *this;
}

MLPParams& MLPParams::operator*=(double s) {
  for (auto& w : weights) w *= s;
  for (auto& b : biases) b *= s;
  return *this;
}

ParamLayout::ParamLayout(MLPSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::vector<Index> sorted = spec_.fw_layers;
  std::sort(sorted.begin(), sorted.end());
  for (Index t : sorted)
    for (Index i = 0; i < spec_.layer_sizes[t + 1]; ++i) blocks_.push_back({t, i});
  for (Index t = 0; t < spec_.num_weight_layers(); ++t) {
    if (!spec_.is_fw_layer(t)) y_dim_ += spec_.layer_sizes[t + 1] * spec_.layer_sizes[t];
    if (spec_.bias) y_dim_ += spec_.layer_sizes[t + 1];
  }
}

ProblemShape ParamLayout::shape() const {
  ProblemShape s;
  for (const BlockRef& b : blocks_) s.block_dims.push_back(spec_.layer_sizes[b.layer]);
  s.y_dim = y_dim_;
  return s;
}

std::pair<BlockVectors, VectorXd> ParamLayout::pack(const MLPParams& p) const {
  BlockVectors x;
  x.reserve(blocks_.size());
  for (const BlockRef& b : blocks_) x.push_back(p.weights[b.layer].row(b.node).transpose());
  VectorXd y(y_dim_);
  Index off = 0;
  for (Index t = 0; t < spec_.num_weight_layers(); ++t) {
    if (spec_.is_fw_layer(t)) continue;
    const MatrixXd& w = p.weights[t];
    for (Index r = 0; r < w.rows(); ++r)
      for (Index c = 0; c < w.cols(); ++c) y[off++] = w(r, c);
  }
  for (const VectorXd& b : p.biases) {
    y.segment(off, b.size()) = b;
    off += b.size();
  }
  return {std::move(x), std::move(y)};
}

MLPParams ParamLayout::unpack(std::span<const VectorXd> x, const VectorXd& y) const {
  if (x.size() != blocks_.size() || y.size() != y_dim_) detail::fail_input("ParamLayout::unpack: shape mismatch");
  MLPParams p = MLPParams::zeros(spec_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (x[i].size() != spec_.layer_sizes[blocks_[i].layer]) detail::fail_input("ParamLayout::unpack: block length");
    p.weights[blocks_[i].layer].row(blocks_[i].node) = x[i].transpose();
  }
  Index off = 0;
  for (Index t = 0; t < spec_.num_weight_layers(); ++t) {
    if (spec_.is_fw_layer(t)) continue;
    MatrixXd& w = p.weights[t];
    for (Index r = 0; r < w.rows(); ++r)
      for (Index c = 0; c < w.cols(); ++c) w(r, c) = y[off++];
  }
  for (VectorXd& b : p.biases) {
    b = y.segment(off, b.size());
    off += b.size();
  }
  return p;
}

std::vector<Ball> ParamLayout::balls(Norm norm_x) const {
  std::vector<Ball> out;
  out.reserve(blocks_.size());
  for (const BlockRef& b : blocks_) out.emplace_back(spec_.layer_sizes[b.layer], spec_.delta_for(b.layer), norm_x);
  return out;
}

MatrixXd forward(const MLPSpec& spec, const MLPParams& params, const MatrixXd& inputs) {
  if (inputs.rows() != spec.input_dim()) detail::fail_input("forward: input dimension mismatch");
  if (static_cast<Index>(params.weights.size()) != spec.num_weight_layers())
    detail::fail_input("forward: parameter layer count mismatch");
  MatrixXd a = inputs;
  const Index n_layers = spec.num_weight_layers();
  for (Index t = 0; t < n_layers; ++t) {
    if (params.weights[t].cols() != a.rows()) detail::fail_input("forward: weight shape mismatch");
    MatrixXd z = params.weights[t] * a;
    if (spec.bias) z.colwise() += params.biases[t];
    if (t + 1 < n_layers) z = z.unaryExpr([&](double v) { return activate(spec.activation, v); });
    a = std::move(z);
  }
  return a;
}

double sample_loss(const MLPSpec& spec, const VectorXd& output, const VectorXd& target) {
  if (spec.loss == Loss::MSE) return (output - target).squaredNorm() / static_cast<double>(output.size());
  const double mx = output.maxCoeff();
  const double lse = mx + std::log((output.array() - mx).exp().sum());
  return -(target.array() * (output.array() - lse)).sum();
}

double accumulate_sample_gradient(const MLPSpec& spec, const MLPParams& params, const VectorXd& input,
                                  const VectorXd& target, MLPParams& grad) {
  const Index n_layers = spec.num_weight_layers();
  std::vector<VectorXd> acts(static_cast<std::size_t>(n_layers) + 1);
  std::vector<VectorXd> pre(static_cast<std::size_t>(n_layers));
  acts[0] = input;
  for (Index t = 0; t < n_layers; ++t) {
    VectorXd z = params.weights[t] * acts[t];
    if (spec.bias) z += params.biases[t];
    pre[t] = z;
    if (t + 1 < n_layers) z = z.unaryExpr([&](double v) { return activate(spec.activation, v); });
    acts[t + 1] = std::move(z);
  }
  const VectorXd& out = acts[n_layers];
  const double loss = sample_loss(spec, out, target);

  VectorXd delta;
  if (spec.loss == Loss::MSE)
    delta = 2.0 * (out - target) / static_cast<double>(out.size());
  else
    delta = softmax(out) * target.sum() - target;

  for (Index t = n_layers - 1; t >= 0; --t) {
    grad.weights[t].noalias() += delta * acts[t].transpose();
    if (spec.bias) grad.biases[t] += delta;
    if (t == 0) break;
    VectorXd back = params.weights[t].transpose() * delta;
    for (Index j = 0; j < back.size(); ++j) back[j] *= activate_grad(spec.activation, pre[t - 1][j], acts[t][j]);
    delta = std::move(back);
  }
  return loss;
}

std::pair<MLPParams, double> per_sample_gradient(const MLPSpec& spec, const MLPParams& params,
                                                 const VectorXd& input, const VectorXd& target) {
  if (input.size() != spec.input_dim() || target.size() != spec.output_dim())
    detail::fail_input("per_sample_gradient: sample shape mismatch");
  MLPParams g = MLPParams::zeros(spec);
  const double loss = accumulate_sample_gradient(spec, params, input, target, g);
  return {std::move(g), loss};
}

Evaluation evaluate(const MLPSpec& spec, const MLPParams& params, const Dataset& data) {
  Evaluation ev;
  const Index n = data.size();
  if (n == 0) return ev;
  const MatrixXd out = forward(spec, params, data.features);
  Index correct = 0;
  for (Index i = 0; i < n; ++i) {
    ev.loss += sample_loss(spec, out.col(i), data.targets.col(i));
    Index pi = 0, ti = 0;
    out.col(i).maxCoeff(&pi);
    data.targets.col(i).maxCoeff(&ti);
    if (pi == ti) ++correct;
  }
  ev.loss /= static_cast<double>(n);
  ev.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(n);
  return ev;
}

std::vector<double> nnz_metrics(const MLPParams& params, std::span<const Index> layers, double threshold) {
  std::vector<double> out;
  for (Index t : layers) {
    if (t < 0 || t >= static_cast<Index>(params.weights.size())) detail::fail_input("nnz_metrics: bad layer index");
    const MatrixXd& w = params.weights[t];
    double sum = 0.0;
    for (Index r = 0; r < w.rows(); ++r) {
      Index nz = 0;
      for (Index c = 0; c < w.cols(); ++c)
        if (std::abs(w(r, c)) >= threshold) ++nz;
      sum += 100.0 * static_cast<double>(nz) / static_cast<double>(w.cols());
    }
    out.push_back(sum / static_cast<double>(w.rows()));
  }
  return out;
}

MLPParams hard_threshold(const MLPParams& params, std::span<const Index> layers, double theta_percent) {
  if (!(theta_percent > 0.0) || theta_percent > 100.0) detail::fail_input("hard_threshold: theta must be in (0, 100]");
  MLPParams out = params;
  for (Index t : layers) {
    if (t < 0 || t >= static_cast<Index>(out.weights.size())) detail::fail_input("hard_threshold: bad layer index");
    MatrixXd& w = out.weights[t];
    const Index cols = w.cols();
    const Index count = w.size();
    const auto keep = static_cast<Index>(std::ceil(theta_percent / 100.0 * static_cast<double>(count) - 1e-9));
    std::vector<Index> order(static_cast<std::size_t>(count));
    std::iota(order.begin(), order.end(), Index{0});
    auto mag = [&](Index flat) { return std::abs(w(flat / cols, flat % cols)); };
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return mag(a) > mag(b); });
    for (Index i = keep; i < count; ++i) w(order[i] / cols, order[i] % cols) = 0.0;
  }
  return out;
}

MLPParams init_params(const MLPSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed, Stream::kInit);
  MLPParams p = MLPParams::zeros(spec);
  const Index n_layers = spec.num_weight_layers();
  for (Index t = 0; t < n_layers; ++t) {
    MatrixXd& w = p.weights[t];
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    if (spec.is_fw_layer(t)) {
      for (Index r = 0; r < w.rows(); ++r) w(r, static_cast<Index>(rng.index(w.cols()))) = rng.sign();
    } else {
      for (Index r = 0; r < w.rows(); ++r)
        for (Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-bound, bound);
    }
    if (spec.bias)
      for (Index r = 0; r < w.rows(); ++r) p.biases[t][r] = rng.uniform(-bound, bound);
  }
  // Outgoing edges: a node feeding a following fw layer must drive at least one node there.
  for (Index t = 0; t + 1 < n_layers; ++t) {
    if (!spec.is_fw_layer(t) || !spec.is_fw_layer(t + 1)) continue;
    MatrixXd& next = p.weights[t + 1];
    for (Index c = 0; c < next.cols(); ++c)
      if (next.col(c).isZero(0)) next(static_cast<Index>(rng.index(next.rows())), c) = rng.sign();
  }
  for (Index t : spec.fw_layers) {
    MatrixXd& w = p.weights[t];
    const double delta = spec.delta_for(t);
    for (Index r = 0; r < w.rows(); ++r) {
      const Index nz = count_nonzeros(w.row(r).transpose(), 0.0);
      const double mag = delta / (2.0 * static_cast<double>(nz));
      for (Index c = 0; c < w.cols(); ++c)
        if (w(r, c) != 0.0) w(r, c) = w(r, c) > 0 ? mag : -mag;
    }
  }
  return p;
}

NetProblem::NetProblem(MLPSpec spec, std::shared_ptr<const Dataset> data)
    : layout_(std::move(spec)), data_(std::move(data)) {
  if (!data_) detail::fail_input("NetProblem: no dataset");
  if (data_->features.rows() != layout_.spec().input_dim() || data_->targets.rows() != layout_.spec().output_dim())
    detail::fail_input("NetProblem: dataset shape does not match the network");
  if (data_->size() < 1) detail::fail_input("NetProblem: empty dataset");
}

GradientEstimate NetProblem::gradient_at(std::span<const VectorXd> x, const VectorXd& y,
                                         std::span<const Index> indices) const {
  if (indices.empty()) detail::fail_input("NetProblem: empty batch");
  const MLPSpec& spec = layout_.spec();
  const MLPParams params = layout_.unpack(x, y);
  MLPParams acc = MLPParams::zeros(spec);
  double loss = 0.0;
  for (Index i : indices) {
    loss += accumulate_sample_gradient(spec, params, data_->features.col(i), data_->targets.col(i), acc);
  }
  const double n = static_cast<double>(indices.size());
  auto [gx, gy] = layout_.pack(acc);
  GradientEstimate est;
  est.grad.x_blocks = std::move(gx);
  est.grad.y = std::move(gy);
  est.grad /= n;
  est.objective = loss / n;
  est.batch_size = static_cast<Index>(indices.size());
  return est;
}

void SynthSpec::validate() const {
  if (layer_sizes.size() < 2) detail::fail_input("synth: need at least two layer sizes");
  for (Index s : layer_sizes)
    if (s < 1) detail::fail_input("synth: layer sizes must be positive");
  if (m < 1) detail::fail_input("synth: m must be >= 1");
  for (std::size_t t = 0; t + 2 < layer_sizes.size(); ++t)
    if (m > layer_sizes[t]) detail::fail_input("synth: m exceeds the fan-in of layer " + std::to_string(t));
  if (!(snr > 0) || !std::isfinite(snr)) detail::fail_input("synth: snr must be positive and finite");
  if (n_train < 1 || n_val < 0 || n_test < 0) detail::fail_input("synth: split sizes must be positive");
}

namespace {

Dataset gaussian_inputs(Index d, Index n, Rng& rng) {
  Dataset ds;
  ds.features.resize(d, n);
  for (Index c = 0; c < n; ++c)
    for (Index r = 0; r < d; ++r) ds.features(r, c) = rng.normal();
  return ds;
}

}  // namespace

SynthData generate_synthetic(const SynthSpec& synth) {
  synth.validate();
  SynthData out;
  MLPSpec& spec = out.true_spec;
  spec.layer_sizes = synth.layer_sizes;
  spec.activation = synth.activation;
  spec.loss = Loss::MSE;
  spec.bias = false;
  const Index n_layers = spec.num_weight_layers();
  for (Index t = 0; t + 1 < n_layers; ++t) {
    spec.fw_layers.push_back(t);
    spec.delta_per_layer.push_back(static_cast<double>(synth.m));
  }

  Rng net_rng(synth.seed, Stream::kInit);
  out.true_params = MLPParams::zeros(spec);
  for (Index t = 0; t < n_layers; ++t) {
    MatrixXd& w = out.true_params.weights[t];
    if (t + 1 < n_layers) {
      std::vector<Index> cols(static_cast<std::size_t>(w.cols()));
      for (Index r = 0; r < w.rows(); ++r) {
        std::iota(cols.begin(), cols.end(), Index{0});
        // Partial Fisher-Yates: the first m entries are a uniform m-subset.
        for (Index i = 0; i < synth.m; ++i) {
          const Index j = i + static_cast<Index>(net_rng.index(static_cast<std::uint64_t>(w.cols() - i)));
          std::swap(cols[i], cols[j]);
          w(r, cols[i]) = net_rng.sign();
        }
      }
    } else {
      for (Index r = 0; r < w.rows(); ++r)
        for (Index c = 0; c < w.cols(); ++c) w(r, c) = net_rng.sign();
    }
  }

  Rng data_rng(synth.seed, Stream::kData);
  const Index d = spec.input_dim();
  out.train = gaussian_inputs(d, synth.n_train, data_rng);
  out.val = gaussian_inputs(d, synth.n_val, data_rng);
  out.test = gaussian_inputs(d, synth.n_test, data_rng);
  for (Dataset* ds : {&out.train, &out.val, &out.test}) ds->targets = forward(spec, out.true_params, ds->features);

  // Var(eps) = Var_train(f) / snr, averaging the per-output variances.
  const MatrixXd& f = out.train.targets;
  const VectorXd mean = f.rowwise().mean();
  const double var = (f.colwise() - mean).squaredNorm() / static_cast<double>(f.size());
  out.noise_std = std::sqrt(var / synth.snr);
  for (Dataset* ds : {&out.train, &out.val, &out.test})
    for (Index c = 0; c < ds->targets.cols(); ++c)
      for (Index r = 0; r < ds->targets.rows(); ++r) ds->targets(r, c) += out.noise_std * data_rng.normal();
  return out;
}

}  // namespace sfw
