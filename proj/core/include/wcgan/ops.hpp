#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wcgan/rng.hpp"
#include "wcgan/tensor.hpp"

namespace wcgan {

enum class Mode { train, eval };

enum class ActivationKind { leaky_relu, tanh, sigmoid, none };

struct Activation {
  ActivationKind kind = ActivationKind::none;
  double slope = 0.2;  // leaky_relu only
};

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

/// Per-channel running averages used by batchnorm in eval mode.
struct RunningStats {
  std::vector<double> mean;
  std::vector<double> var;
  std::uint64_t batches_tracked = 0;

  RunningStats() = default;
  explicit RunningStats(std::size_t channels) : mean(channels, 0.0), var(channels, 1.0) {}
};

// Every op below returns a fresh tensor and, when any input requires a
// gradient, appends a node to `g`. Inputs are never modified.

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);
// x[N×in] · w[in×out] + b[out]
Tensor linear(Graph& g, const Tensor& x, const Tensor& w, const Tensor& b);

Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor sub(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);
Tensor scale(Graph& g, const Tensor& x, double factor);
// a*x + b elementwise
Tensor affine(Graph& g, const Tensor& x, double a, double b);
Tensor sum(Graph& g, const Tensor& x);
Tensor mean(Graph& g, const Tensor& x);
Tensor abs(Graph& g, const Tensor& x);
Tensor log(Graph& g, const Tensor& x);
// Gradient passes where lo <= x <= hi, zero elsewhere.
Tensor clamp(Graph& g, const Tensor& x, double lo, double hi);

Tensor reshape(Graph& g, const Tensor& x, Shape shape);
// [N×...] -> [N×rest]
Tensor flatten(Graph& g, const Tensor& x);
// [N×...] and [M×...] with equal trailing dims -> [(N+M)×...]
Tensor concat_rows(Graph& g, const Tensor& a, const Tensor& b);
// Rows [begin, end) of [N×...].
Tensor slice_rows(Graph& g, const Tensor& x, std::size_t begin, std::size_t end);

/// Cross-correlation with zero padding. Accepts x as [C×H×W] or [N×C×H×W];
/// w is [C_out×C_in×k×k], bias is [C_out].
Tensor conv2d(Graph& g, const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride, std::size_t pad);

/// Nearest-neighbour upsampling of the two trailing spatial dims.
Tensor upsample_nearest(Graph& g, const Tensor& x, std::size_t factor);

/// Standardizes each channel (dim 1) over the batch and any trailing dims.
/// Train mode uses batch statistics and updates `running`; eval mode uses
/// `running` and fails if it was never updated.
Tensor batchnorm(Graph& g, const Tensor& x, const Tensor& gamma, const Tensor& beta, const BatchNormOptions& opts,
                 Mode mode, RunningStats& running);

Tensor leaky_relu(Graph& g, const Tensor& x, double slope);
Tensor tanh(Graph& g, const Tensor& x);
Tensor sigmoid(Graph& g, const Tensor& x);
Tensor activation(Graph& g, const Tensor& x, const Activation& act);

/// Inverted dropout: survivors are scaled by 1/(1-rate) in train mode, eval
/// mode is the identity.
Tensor dropout(Graph& g, const Tensor& x, double rate, Mode mode, Rng& rng);

/// Mean negative log-likelihood of softmax(logits[N×K]) at the given labels.
Tensor softmax_cross_entropy(Graph& g, const Tensor& logits, std::span<const int> labels);

// Row-wise softmax, outside any graph.
Tensor softmax(const Tensor& logits);

}  // namespace wcgan
