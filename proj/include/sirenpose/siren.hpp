#pragma once

// Sinusoidal representation networks.
//
//   h^0 = x,  h^l = sin(omega0 * (W^l h^{l-1} + b^l)),  output = W^L h^{L-1} + b^L
//
// The output layer is linear so predicted coordinates are not confined to
// [-1, 1]. Initialization:
//   first layer   W ~ U(-1/n0, 1/n0)
//   later layers  W ~ U(-sqrt(6/n_in), sqrt(6/n_in))      (variance 2/n_in)
// Biases use the same bound as their layer's weights.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sirenpose/autodiff.hpp"
#include "sirenpose/errors.hpp"
#include "sirenpose/tensor.hpp"

namespace sirenpose {

inline constexpr double kDefaultOmega0 = 30.0;

struct SirenLayer {
  Tensor weight;  // [n_out x n_in]
  Tensor bias;    // [n_out]
  double omega0 = kDefaultOmega0;
  bool is_first = false;
  bool is_linear_output = false;

  std::size_t fan_in() const { return weight.shape()[1]; }
  std::size_t fan_out() const { return weight.shape()[0]; }
};

/// Uniform bound used to initialize a layer with the given fan-in.
inline double siren_init_bound(std::size_t fan_in, bool is_first) {
  const double n = static_cast<double>(fan_in);
  return is_first ? 1.0 / n : std::sqrt(6.0 / n);
}

class SirenNetwork {
 public:
  SirenNetwork() = default;
  explicit SirenNetwork(std::vector<SirenLayer> layers, std::uint64_t seed = 0)
      : layers_(std::move(layers)), seed_(seed) {
    validate();
  }

  const std::vector<SirenLayer>& layers() const { return layers_; }
  std::vector<SirenLayer>& layers() { return layers_; }
  std::size_t depth() const { return layers_.size(); }
  std::size_t input_dim() const { return layers_.front().fan_in(); }
  std::size_t output_dim() const { return layers_.back().fan_out(); }
  std::uint64_t seed() const { return seed_; }

  std::vector<std::size_t> hidden_dims() const {
    std::vector<std::size_t> dims;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) dims.push_back(layers_[l].fan_out());
    return dims;
  }

  /// Weight then bias for each layer, in layer order.
  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for (auto& l : layers_) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }
  std::vector<const Tensor*> parameters() const {
    std::vector<const Tensor*> out;
    for (const auto& l : layers_) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->size();
    return n;
  }

  void validate() const {
    if (layers_.empty()) throw ValidationError("siren: network has no layers");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      if (layer.weight.rank() != 2 || layer.bias.rank() != 1 ||
          layer.bias.shape()[0] != layer.fan_out()) {
        throw ValidationError("siren: layer " + std::to_string(l) + " has weight " +
                              shape_string(layer.weight.shape()) + " and bias " +
                              shape_string(layer.bias.shape()));
      }
      if (!(layer.omega0 > 0.0)) {
        throw ValidationError("siren: layer " + std::to_string(l) + " omega0 must be > 0");
      }
      if (l > 0 && layers_[l - 1].fan_out() != layer.fan_in()) {
        throw ValidationError("siren: layer " + std::to_string(l) + " fan-in " +
                              std::to_string(layer.fan_in()) + " does not chain to " +
                              std::to_string(layers_[l - 1].fan_out()));
      }
      if (layer.is_linear_output != (l + 1 == layers_.size())) {
        throw ValidationError("siren: only the last layer may be (and must be) linear");
      }
    }
  }

 private:
  std::vector<SirenLayer> layers_;
  std::uint64_t seed_ = 0;
};

/// Builds and initializes a network with len(hidden_dims) sine layers
/// followed by a linear head.
inline SirenNetwork init_siren(std::size_t input_dim, const std::vector<std::size_t>& hidden_dims,
                               std::size_t output_dim, double omega0, std::uint64_t seed) {
  if (input_dim == 0 || output_dim == 0) {
    throw ValidationError("siren: input and output dims must be >= 1");
  }
  for (auto d : hidden_dims) {
    if (d == 0) throw ValidationError("siren: hidden dims must be >= 1");
  }
  if (!(omega0 > 0.0) || !std::isfinite(omega0)) {
    throw ValidationError("siren: omega0 must be a positive finite number");
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
  dims.push_back(output_dim);

  std::vector<SirenLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    SirenLayer layer;
    layer.is_first = l == 0;
    layer.is_linear_output = l + 2 == dims.size();
    layer.omega0 = omega0;
    const double bound = siren_init_bound(dims[l], layer.is_first);
    std::uniform_real_distribution<double> dist(-bound, bound);
    layer.weight = Tensor({dims[l + 1], dims[l]});
    for (double& w : layer.weight.values()) w = dist(rng);
    layer.bias = Tensor({dims[l + 1]});
    for (double& b : layer.bias.values()) b = dist(rng);
    layers.push_back(std::move(layer));
  }
  return SirenNetwork(std::move(layers), seed);
}

/// Network parameters placed on a tape.
struct BoundSiren {
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;
};

/// Trainable parameters become leaves; otherwise they are constants.
inline BoundSiren bind(ad::Tape& tape, const SirenNetwork& net, bool trainable = true) {
  BoundSiren bound;
  for (const auto& layer : net.layers()) {
    bound.weights.push_back(trainable ? tape.leaf(layer.weight) : tape.constant(layer.weight));
    bound.biases.push_back(trainable ? tape.leaf(layer.bias) : tape.constant(layer.bias));
  }
  return bound;
}

namespace detail {

inline void check_input(const SirenNetwork& net, const Tensor& x) {
  if (x.rank() != 2 || x.shape()[1] != net.input_dim()) {
    throw ValidationError("siren: input shape " + shape_string(x.shape()) +
                          " does not match input dim " + std::to_string(net.input_dim()));
  }
}

}  // namespace detail

/// Differentiable forward pass. `hidden`, when given, receives each sine
/// layer's activation node.
inline ad::Var forward(const SirenNetwork& net, const BoundSiren& params, const ad::Var& x,
                       std::vector<ad::Var>* hidden = nullptr) {
  detail::check_input(net, x.value());
  ad::Var h = x;
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const auto& layer = net.layers()[l];
    ad::Var affine = ad::add_bias(ad::matmul(h, ad::transpose(params.weights[l])), params.biases[l]);
    if (layer.is_linear_output) {
      h = affine;
    } else {
      h = ad::sin(ad::scale(affine, layer.omega0));
      if (hidden) hidden->push_back(h);
    }
  }
  return h;
}

/// Plain evaluation: x [batch x n0] -> [batch x output_dim].
inline Tensor forward(const SirenNetwork& net, const Tensor& x) {
  ad::Tape tape;
  auto params = bind(tape, net, false);
  return forward(net, params, tape.constant(x)).value();
}

/// Evaluation that also returns every sine-layer activation.
inline Tensor forward_with_activations(const SirenNetwork& net, const Tensor& x,
                                       std::vector<Tensor>& activations) {
  ad::Tape tape;
  auto params = bind(tape, net, false);
  std::vector<ad::Var> hidden;
  Tensor out = forward(net, params, tape.constant(x), &hidden).value();
  activations.clear();
  for (const auto& h : hidden) activations.push_back(h.value());
  return out;
}

struct LayerStats {
  double mean = 0.0;      // of W h + b
  double variance = 0.0;  // of W h + b
  double scaled_mean = 0.0;  // of omega0 (W h + b)
  double scaled_variance = 0.0;
};

/// Pre-activation statistics of each sine layer over a batch (population
/// variance). The linear head is not reported.
inline std::vector<LayerStats> preactivation_stats(const SirenNetwork& net, const Tensor& x) {
  detail::check_input(net, x);
  if (x.shape()[0] < 16) {
    throw ValidationError("preactivation_stats: batch of " + std::to_string(x.shape()[0]) +
                          " is below the minimum of 16");
  }
  std::vector<LayerStats> stats;
  ad::Tape tape;
  auto params = bind(tape, net, false);
  ad::Var h = tape.constant(x);
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const auto& layer = net.layers()[l];
    if (layer.is_linear_output) break;
    ad::Var affine = ad::add_bias(ad::matmul(h, ad::transpose(params.weights[l])), params.biases[l]);
    const auto& v = affine.value().values();
    double mean = 0.0;
    for (double a : v) mean += a;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double a : v) var += (a - mean) * (a - mean);
    var /= static_cast<double>(v.size());

    LayerStats s;
    s.mean = mean;
    s.variance = var;
    s.scaled_mean = layer.omega0 * mean;
    s.scaled_variance = layer.omega0 * layer.omega0 * var;
    stats.push_back(s);
    h = ad::sin(ad::scale(affine, layer.omega0));
  }
  return stats;
}

}  // namespace sirenpose
