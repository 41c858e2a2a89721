#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wcgan/model.hpp"

namespace wcgan {

struct ClassifierConfig {
  std::size_t hidden = 64;
  std::size_t feature_dim = 32;  // penultimate width, the FID feature space
  std::size_t batch_size = 64;
  std::size_t max_epochs = 200;
  double lr = 1e-3;
  double target_accuracy = 0.9;
  double validation_fraction = 0.2;
};

/// Small softmax classifier standing in for the Inception network: class
/// probabilities feed the inception score, penultimate activations feed the
/// Fréchet distance.
class SurrogateClassifier {
 public:
  SurrogateClassifier(Network net, std::uint64_t seed, double validation_accuracy,
                      std::vector<double> accuracy_curve);

  Tensor probabilities(const Tensor& samples);
  Tensor features(const Tensor& samples);
  std::size_t feature_dim() const;
  std::size_t num_classes() const;

  std::uint64_t seed() const { return seed_; }
  double validation_accuracy() const { return validation_accuracy_; }
  const std::vector<double>& accuracy_curve() const { return curve_; }
  const Network& network() const { return net_; }

 private:
  Tensor flatten_rows(const Tensor& samples) const;

  Network net_;
  std::uint64_t seed_;
  double validation_accuracy_;
  std::vector<double> curve_;
};

/// Trains until validation accuracy reaches config.target_accuracy; throws
/// TrainingError (with the accuracy curve in the message) if max_epochs runs
/// out first. Samples may be vectors or images; they are flattened.
SurrogateClassifier train_surrogate_classifier(const Tensor& samples, std::span<const int> labels,
                                               const ClassifierConfig& config, std::uint64_t seed);

}  // namespace wcgan
