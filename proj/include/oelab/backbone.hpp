// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "oelab/error.hpp"
#include "oelab/linalg.hpp"
#include "oelab/rng.hpp"

namespace oelab {

enum class Activation { none, relu };

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;
  Activation activation = Activation::none;

  std::size_t in_dim() const noexcept { return weights.cols(); }
  std::size_t out_dim() const noexcept { return weights.rows(); }
};

/// Fully connected feature extractor z = Z(x): affine layers with ReLU
/// between them and a linear final layer.
struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }

  /// He-normal weights (stddev sqrt(2 / fan_in)), zero biases.
  /// `widths` lists input, hidden and output sizes, e.g. {2, 64, 64, 8}.
  static MlpParams he_init(std::span<const std::size_t> widths, Rng& rng) {
    if (widths.size() < 2) throw Error("MlpParams: need at least input and output width");
    MlpParams p;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      DenseLayer layer{Matrix(widths[l + 1], widths[l]), Vector(widths[l + 1], 0.0),
                       l + 2 == widths.size() ? Activation::none : Activation::relu};
      const double scale = std::sqrt(2.0 / static_cast<double>(widths[l]));
      for (double& w : layer.weights.data()) w = scale * rng.normal();
      p.layers.push_back(std::move(layer));
    }
    return p;
  }

  /// Same shapes, all entries zero.
  MlpParams zeros_like() const {
    MlpParams p = *this;
    for (auto& layer : p.layers) {
      std::fill(layer.weights.data().begin(), layer.weights.data().end(), 0.0);
      std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    }
    return p;
  }

  void validate() const {
    if (layers.empty()) throw Error("MlpParams: no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      detail::require_dims(layers[l].bias.size(), layers[l].out_dim(), "MlpParams bias");
      if (l > 0) detail::require_dims(layers[l].in_dim(), layers[l - 1].out_dim(), "MlpParams chain");
    }
    if (layers.back().activation != Activation::none) throw Error("MlpParams: final activation must be none");
  }

  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      fn("backbone.layer" + std::to_string(l) + ".weight", std::span<double>(layers[l].weights.data()));
      fn("backbone.layer" + std::to_string(l) + ".bias", std::span<double>(layers[l].bias));
    }
  }

  bool operator==(const MlpParams& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t l = 0; l < layers.size(); ++l)
      if (layers[l].weights != o.layers[l].weights || layers[l].bias != o.layers[l].bias ||
          layers[l].activation != o.layers[l].activation)
        return false;
    return true;
  }
};

/// Layer inputs and pre-activations recorded by mlp_forward.
struct MlpCache {
  std::vector<Vector> inputs;
  std::vector<Vector> pre_activations;
};

struct MlpForward {
  Vector z;
  MlpCache cache;
};

inline MlpForward mlp_forward(const MlpParams& p, std::span<const double> x) {
  detail::require_dims(x.size(), p.in_dim(), "mlp_forward");
  MlpForward out;
  Vector a(x.begin(), x.end());
  for (const auto& layer : p.layers) {
    Vector pre = matvec(layer.weights, a);
    for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += layer.bias[i];
    Vector next = pre;
    if (layer.activation == Activation::relu)
      for (double& v : next) v = v > 0.0 ? v : 0.0;
    out.cache.inputs.push_back(std::move(a));
    out.cache.pre_activations.push_back(std::move(pre));
    a = std::move(next);
  }
  out.z = std::move(a);
  return out;
}

struct MlpGradients {
  MlpParams d_params;
  Vector d_input;
};

/// Backpropagates d_z through the cached forward pass. ReLU'(0) = 0.
inline MlpGradients mlp_backward(const MlpParams& p, const MlpCache& cache, std::span<const double> d_z) {
  detail::require_dims(d_z.size(), p.out_dim(), "mlp_backward");
  MlpGradients g{p.zeros_like(), {}};
  Vector delta(d_z.begin(), d_z.end());
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    const auto& layer = p.layers[l];
    if (layer.activation == Activation::relu)
      for (std::size_t i = 0; i < delta.size(); ++i)
        if (!(cache.pre_activations[l][i] > 0.0)) delta[i] = 0.0;
    auto& gl = g.d_params.layers[l];
    const Vector& input = cache.inputs[l];
    for (std::size_t r = 0; r < layer.out_dim(); ++r) {
      gl.bias[r] = delta[r];
      if (delta[r] == 0.0) continue;
      auto row = gl.weights.row(r);
      for (std::size_t c = 0; c < layer.in_dim(); ++c) row[c] = delta[r] * input[c];
    }
    delta = matvec_transposed(layer.weights, delta);
  }
  g.d_input = std::move(delta);
  return g;
}

}  // namespace oelab
