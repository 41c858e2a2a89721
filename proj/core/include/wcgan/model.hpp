#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "wcgan/ops.hpp"
#include "wcgan/tensor.hpp"

namespace wcgan {

enum class NetworkKind { generator, discriminator, classifier };

/// Output head of a discriminator: probability (DC-CGAN) or raw critic score
/// (W-CGAN).
enum class CriticVariant { dc, wasserstein };

std::string to_string(NetworkKind kind);
std::string to_string(CriticVariant variant);
std::string to_string(ActivationKind kind);
CriticVariant parse_variant(std::string_view text);

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  bool operator==(const DenseLayer&) const = default;
};

struct ReshapeLayer {
  Shape shape;  // per sample
  bool operator==(const ReshapeLayer&) const = default;
};

struct FlattenLayer {
  bool operator==(const FlattenLayer&) const = default;
};

struct UpsampleLayer {
  std::size_t factor = 2;
  bool operator==(const UpsampleLayer&) const = default;
};

struct ConvLayer {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;
  bool operator==(const ConvLayer&) const = default;
};

struct BatchNormLayer {
  std::size_t channels = 0;
  double eps = 1e-5;
  double momentum = 0.1;
  bool operator==(const BatchNormLayer&) const = default;
};

struct DropoutLayer {
  double rate = 0.25;
  bool operator==(const DropoutLayer&) const = default;
};

struct ActivationLayer {
  ActivationKind kind = ActivationKind::leaky_relu;
  double slope = 0.2;
  bool operator==(const ActivationLayer&) const = default;
};

using LayerDesc = std::variant<DenseLayer, ReshapeLayer, FlattenLayer, UpsampleLayer, ConvLayer, BatchNormLayer,
                               DropoutLayer, ActivationLayer>;

/// Declarative description of a network: the layer stack plus the
/// dimensions it was derived from. Parameter shapes follow from it alone.
struct ModelSpec {
  NetworkKind kind = NetworkKind::generator;
  std::size_t latent_dim = 0;    // generator input size
  std::size_t cond_dim = 0;      // kept for completeness, conditioning is by worker selection
  std::size_t channels = 0;      // image channels, or output dimension for vector data
  std::size_t base_spatial = 0;  // generator reshape side (0 for vector models)
  std::size_t width = 0;         // base channel count / hidden width
  ActivationKind final_activation = ActivationKind::none;
  Shape input_shape;             // per sample
  std::vector<LayerDesc> layers;

  /// Per-sample shape after each layer; front() is the input shape.
  std::vector<Shape> shape_trace() const;
  Shape output_shape() const { return shape_trace().back(); }
  void validate() const;

  /// Canonical text form; from_text(to_text()) == *this.
  std::string to_text() const;
  static ModelSpec from_text(std::string_view text);

  bool operator==(const ModelSpec&) const = default;
};

struct GeneratorOptions {
  double first_bn_eps = 1e-5;
  // Post-convolution batchnorm layers.
  double bn_eps = 0.8;
  double bn_momentum = 0.1;
  double slope = 0.2;
};

struct DiscriminatorOptions {
  double bn_eps = 0.8;
  double bn_momentum = 0.1;
  double slope = 0.2;
  double dropout = 0.25;
};

ModelSpec generator_spec(std::size_t latent_dim, std::size_t channels, std::size_t base_spatial, std::size_t width,
                         const GeneratorOptions& opts = {});
ModelSpec discriminator_spec(std::size_t channels, std::size_t input_spatial, std::size_t width,
                             CriticVariant variant, const DiscriminatorOptions& opts = {});

// Fully connected variants for vector-valued data.
ModelSpec mlp_generator_spec(std::size_t latent_dim, std::size_t out_dim, std::size_t hidden, std::size_t depth,
                             double slope = 0.2);
ModelSpec mlp_discriminator_spec(std::size_t in_dim, std::size_t hidden, std::size_t depth, CriticVariant variant,
                                 double slope = 0.2);
// Softmax classifier; the last hidden layer's activations are its features.
ModelSpec mlp_classifier_spec(std::size_t in_dim, std::size_t hidden, std::size_t feature_dim,
                              std::size_t num_classes, double slope = 0.2);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// DCGAN-style initialization from a per-name stream seeded by (seed, name):
/// weights ~ N(0, 0.02), batchnorm gamma ~ N(1, 0.02), beta and biases zero.
std::vector<NamedTensor> init_params(const ModelSpec& spec, std::uint64_t seed);

/// Expected parameter shapes, in parameter order, from the spec alone.
std::vector<std::pair<std::string, Shape>> parameter_shapes(const ModelSpec& spec);

/// A ModelSpec with instantiated parameters and batchnorm running state.
/// Copies are deep.
class Network {
 public:
  Network() = default;
  Network(ModelSpec spec, std::uint64_t seed);

  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const ModelSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }

  std::vector<NamedTensor>& params() { return params_; }
  const std::vector<NamedTensor>& params() const { return params_; }
  const Tensor& param(std::string_view name) const;
  Tensor& param(std::string_view name);
  std::size_t parameter_count() const;

  std::vector<RunningStats>& running_stats() { return running_; }
  const std::vector<RunningStats>& running_stats() const { return running_; }

  /// Parameters followed by batchnorm buffers, as named tensors (copies).
  std::vector<NamedTensor> state() const;
  /// Inverse of state(); names and shapes must match exactly.
  void load_state(const std::vector<NamedTensor>& tensors);

  /// Runs the layer stack on a batch [N × input_shape...]. With `stop_after`
  /// set, returns the activations after that many layers.
  Tensor forward(Graph& g, const Tensor& batch, Mode mode, Rng& rng,
                 std::size_t stop_after = static_cast<std::size_t>(-1));
  /// Convenience: forward without recording a graph.
  Tensor infer(const Tensor& batch, Mode mode, Rng& rng);

  void set_trainable(bool on);
  void zero_grad();

 private:
  ModelSpec spec_;
  std::uint64_t seed_ = 0;
  std::vector<NamedTensor> params_;
  std::vector<RunningStats> running_;  // one per batchnorm layer, in order
};

Network build_generator(std::size_t latent_dim, std::size_t channels, std::size_t base_spatial, std::size_t width,
                        std::uint64_t seed, const GeneratorOptions& opts = {});
Network build_discriminator(std::size_t channels, std::size_t input_spatial, std::size_t width,
                            CriticVariant variant, std::uint64_t seed, const DiscriminatorOptions& opts = {});

}  // namespace wcgan
