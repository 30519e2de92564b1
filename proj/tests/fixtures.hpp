#pragma once

// Random networks and datasets shared by the unit and acceptance tests.

#include <memory>
#include <utility>
#include <vector>

#include "sfw/mlp.hpp"

namespace fixture {

using namespace sfw;

inline MLPSpec make_spec(std::vector<Index> sizes, Activation a, Loss l, std::vector<Index> fw, std::vector<double> deltas,
                         bool bias) {
  MLPSpec s;
  s.layer_sizes = std::move(sizes);
  s.activation = a;
  s.loss = l;
  s.fw_layers = std::move(fw);
  s.delta_per_layer = std::move(deltas);
  s.bias = bias;
  return s;
}

inline MLPParams random_params(const MLPSpec& spec, Rng& rng, double scale = 1.0) {
  MLPParams p = MLPParams::zeros(spec);
  for (auto& w : p.weights)
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = scale * rng.normal();
  for (auto& b : p.biases)
    for (Index i = 0; i < b.size(); ++i) b[i] = scale * rng.normal();
  return p;
}

inline std::shared_ptr<Dataset> net_data(const MLPSpec& spec, Index n, Rng& rng) {
  auto d = std::make_shared<Dataset>();
  d->features.resize(spec.input_dim(), n);
  d->targets.resize(spec.output_dim(), n);
  for (Index i = 0; i < d->features.size(); ++i) d->features.data()[i] = rng.normal();
  if (spec.loss == Loss::MSE) {
    for (Index i = 0; i < d->targets.size(); ++i) d->targets.data()[i] = rng.normal();
  } else {
    d->targets.setZero();
    for (Index c = 0; c < n; ++c) d->targets(static_cast<Index>(rng.index(spec.output_dim())), c) = 1.0;
  }
  return d;
}

}  // namespace fixture
