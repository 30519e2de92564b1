#pragma once

// Dense feedforward network whose per-node incoming weight vectors in
// selected layers are l1-constrained blocks; everything else (other layers,
// all biases) is the free vector y.

#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sfw/optimizer.hpp"
#include "sfw/problem.hpp"

namespace sfw {

using Eigen::MatrixXd;

enum class Activation { Sigmoid, ReLU };
enum class Loss { MSE, SoftmaxCrossEntropy };

struct MLPSpec {
  std::vector<Index> layer_sizes;  // input, hidden..., output
  Activation activation = Activation::Sigmoid;
  Loss loss = Loss::MSE;
  std::vector<Index> fw_layers;       // weight-layer indices, 0 = input -> first hidden
  std::vector<double> delta_per_layer;  // parallel to fw_layers
  bool bias = false;

  Index num_weight_layers() const { return static_cast<Index>(layer_sizes.size()) - 1; }
  Index input_dim() const { return layer_sizes.front(); }
  Index output_dim() const { return layer_sizes.back(); }
  bool is_fw_layer(Index t) const;
  double delta_for(Index t) const;
  void validate() const;
};

/// weights[t] is (layer_sizes[t+1] x layer_sizes[t]); row i holds the
/// incoming weights of node i in layer t+1.  biases is empty when the spec
/// has no bias.
struct MLPParams {
  std::vector<MatrixXd> weights;
  std::vector<VectorXd> biases;

  static MLPParams zeros(const MLPSpec& spec);
  MLPParams& operator+=(const MLPParams& o);
  MLPParams& operator*=(double s);
};

/// Samples are columns.
struct Dataset {
  MatrixXd features;  // d x n
  MatrixXd targets;   // l x n

  Index size() const { return features.cols(); }
};

/// Bijection between MLPParams and (constrained blocks, free vector).
/// Blocks are ordered by (fw layer, node); y holds the non-fw weight
/// matrices row-major in layer order followed by all biases in layer order.
class ParamLayout {
 public:
  struct BlockRef {
    Index layer;
    Index node;
  };

  explicit ParamLayout(MLPSpec spec);

  const MLPSpec& spec() const { return spec_; }
  const std::vector<BlockRef>& blocks() const { return blocks_; }
  ProblemShape shape() const;
  Index y_dim() const { return y_dim_; }

  std::pair<BlockVectors, VectorXd> pack(const MLPParams& p) const;
  MLPParams unpack(std::span<const VectorXd> x, const VectorXd& y) const;

  /// One ball per block with that layer's radius.
  std::vector<Ball> balls(Norm norm_x = Norm::L2) const;

 private:
  MLPSpec spec_;
  std::vector<BlockRef> blocks_;
  Index y_dim_ = 0;
};

/// Predictions (l x n): activation on hidden layers, identity on the output
/// (regression values or logits).
MatrixXd forward(const MLPSpec& spec, const MLPParams& params, const MatrixXd& inputs);

/// Loss of one sample given the network output.
double sample_loss(const MLPSpec& spec, const VectorXd& output, const VectorXd& target);

/// Reverse-mode gradient of the loss of one sample, added into `grad`;
/// returns the loss.  ReLU uses derivative 0 at the kink.
double accumulate_sample_gradient(const MLPSpec& spec, const MLPParams& params, const VectorXd& input,
                                  const VectorXd& target, MLPParams& grad);

std::pair<MLPParams, double> per_sample_gradient(const MLPSpec& spec, const MLPParams& params,
                                                 const VectorXd& input, const VectorXd& target);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;  // argmax agreement; only meaningful for classification
};

Evaluation evaluate(const MLPSpec& spec, const MLPParams& params, const Dataset& data);

/// Per listed layer: mean over nodes of 100 * #{|w| >= threshold} / fan-in.
std::vector<double> nnz_metrics(const MLPParams& params, std::span<const Index> layers, double threshold = 1e-3);

/// In each listed layer keep the ceil(theta/100 * count) largest-magnitude
/// weights (ties: lower row-major index first) and zero the rest.
MLPParams hard_threshold(const MLPParams& params, std::span<const Index> layers, double theta_percent);

/// fw layers: each node gets one random incoming edge, and every node feeding
/// a following fw layer gets an outgoing edge; each block is then set to
/// equal magnitudes with ||w||_1 = delta / 2.  Other weights and biases are
/// uniform on +-1/sqrt(fan_in).
MLPParams init_params(const MLPSpec& spec, std::uint64_t seed);

/// Training objective over a stored dataset, sampled with replacement.
class NetProblem : public FiniteSumProblem {
 public:
  NetProblem(MLPSpec spec, std::shared_ptr<const Dataset> data);

  const ParamLayout& layout() const { return layout_; }
  const Dataset& data() const { return *data_; }

  ProblemShape shape() const override { return layout_.shape(); }
  Index num_samples() const override { return data_->size(); }
  GradientEstimate gradient_at(std::span<const VectorXd> x, const VectorXd& y,
                               std::span<const Index> indices) const override;

 private:
  ParamLayout layout_;
  std::shared_ptr<const Dataset> data_;
};

struct SynthSpec {
  std::vector<Index> layer_sizes{50, 50, 50, 1};
  Index m = 5;
  double snr = 10.0;
  Activation activation = Activation::Sigmoid;
  Index n_train = 100000;
  Index n_val = 20000;
  Index n_test = 100000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthData {
  Dataset train, val, test;
  MLPSpec true_spec;  // sparse layers listed as fw layers with delta = m
  MLPParams true_params;
  double noise_std = 0.0;
};

/// Random sparse teacher network (m incoming +-1 edges per node in all but
/// the last layer, dense +-1 last layer, no biases), standard Gaussian
/// features, and targets f(X) + eps with Var(eps) = Var_train(f) / snr.
SynthData generate_synthetic(const SynthSpec& synth);

}  // namespace sfw
