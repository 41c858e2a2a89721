#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wcgan/stats.hpp"
#include "wcgan/tensor.hpp"

namespace wcgan {

/// Affine map from stored values to model space: model = raw * scale + offset.
struct Normalization {
  double scale = 1.0;
  double offset = 0.0;

  double apply(double raw) const { return raw * scale + offset; }
  double invert(double value) const { return (value - offset) / scale; }

  // Bytes [0,255] onto [-1,1], the generator's tanh range.
  static Normalization bytes() { return {1.0 / 127.5, -1.0}; }
  static Normalization identity() { return {}; }
};

/// All training samples of one label; rows of `samples` are samples.
struct ClassShard {
  int label = 0;
  Tensor samples;  // [N × ...]; default-constructed (numel 0) when empty
  Normalization normalization;

  std::size_t size() const { return samples.numel() == 0 ? 0 : samples.dim(0); }
  Shape sample_shape() const;
};

struct MixtureComponent {
  double weight = 1.0;
  std::vector<double> mean;
  std::vector<double> cov;  // row-major dim×dim
};

/// Per-class Gaussian mixtures with known ground truth.
struct MixtureSpec {
  std::size_t dim = 2;
  std::vector<std::vector<MixtureComponent>> classes;
  std::uint64_t seed = 0;

  std::size_t num_classes() const { return classes.size(); }
  void validate() const;
};

/// K classes on a circle of radius `class_radius`; each class has
/// `modes_per_class` isotropic components spread `mode_offset` from its class
/// center, all with standard deviation `sigma`. 2-D only.
MixtureSpec ring_mixture(std::size_t num_classes, std::size_t modes_per_class, double class_radius,
                         double mode_offset, double sigma, std::uint64_t seed);

/// Draws n_per_class samples per class; shard k holds label k. Samples are
/// clipped to [-1,1].
std::vector<ClassShard> synth_conditional_mixture(const MixtureSpec& spec, std::size_t n_per_class);

/// Balls of radius n_sigma * (largest component std) around each component
/// mean of class `label`.
std::vector<ModeBall> ground_truth_modes(const MixtureSpec& spec, int label, double n_sigma = 3.0);

/// Exact mean and covariance of the class mixture.
GaussianSummary ground_truth_summary(const MixtureSpec& spec, int label);

enum class CifarLayout { cifar10, cifar100 };

inline constexpr std::size_t kCifarPixels = 3072;

struct CifarRecord {
  std::uint8_t coarse_label = 0;  // cifar100 only
  std::uint8_t label = 0;         // cifar10 label or cifar100 fine label
  std::array<std::uint8_t, kCifarPixels> pixels{};  // R, G, B planes of 32×32
};

std::size_t cifar_record_size(CifarLayout layout);
std::vector<CifarRecord> read_cifar_records(const std::filesystem::path& path, CifarLayout layout);
void write_cifar_records(const std::filesystem::path& path, std::span<const CifarRecord> records,
                         CifarLayout layout);

/// Parses a CIFAR binary batch into one shard per label, pixels mapped to
/// [-1,1]. Without an explicit layout, 100 expected classes selects the
/// CIFAR-100 record and anything else CIFAR-10.
std::vector<ClassShard> load_cifar_binary(const std::filesystem::path& path, std::size_t expected_classes,
                                          std::optional<CifarLayout> layout = std::nullopt);

/// Binary PPM (P6, C=3) or PGM (P5, C=1) of an image [C×H×W] in [-1,1].
std::vector<std::uint8_t> encode_ppm(const Tensor& image);
void write_ppm(const Tensor& image, const std::filesystem::path& path);

struct ShardResult {
  std::vector<ClassShard> shards;  // one per label 0..K-1
  std::vector<int> empty_labels;
};

/// Stable partition of rows of `samples` by label.
ShardResult shard_by_label(const Tensor& samples, std::span<const int> labels, std::size_t num_classes,
                           Normalization normalization = Normalization::identity());

/// Rows `indices` of `samples`, in order.
Tensor gather_rows(const Tensor& samples, std::span<const std::size_t> indices);

}  // namespace wcgan
