#include "wcgan/classifier.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "wcgan/data.hpp"
#include "wcgan/error.hpp"
#include "wcgan/training.hpp"

namespace wcgan {

namespace {

// Index of the last hidden activation: dense, act, dense, act, dense.
constexpr std::size_t kFeatureLayers = 4;

Tensor as_rows(const Tensor& samples) {
  const std::size_t n = samples.dim(0);
  return Tensor({n, samples.numel() / n}, {samples.data().begin(), samples.data().end()});
}

double accuracy(Network& net, const Tensor& x, std::span<const int> labels) {
  Rng rng(0);
  const auto logits = net.infer(x, Mode::eval, rng);
  const std::size_t k = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = logits.data().subspan(i * k, k);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace

SurrogateClassifier::SurrogateClassifier(Network net, std::uint64_t seed, double validation_accuracy,
                                         std::vector<double> accuracy_curve)
    : net_(std::move(net)), seed_(seed), validation_accuracy_(validation_accuracy), curve_(std::move(accuracy_curve)) {}

Tensor SurrogateClassifier::flatten_rows(const Tensor& samples) const {
  const auto rows = as_rows(samples);
  if (rows.dim(1) != net_.spec().input_shape[0]) {
    throw DimensionError("classifier expects " + std::to_string(net_.spec().input_shape[0]) + " features, got " +
                         shape_to_string(samples.shape()));
  }
  return rows;
}

Tensor SurrogateClassifier::probabilities(const Tensor& samples) {
  Rng rng(0);
  return softmax(net_.infer(flatten_rows(samples), Mode::eval, rng));
}

Tensor SurrogateClassifier::features(const Tensor& samples) {
  Rng rng(0);
  Graph g;
  net_.set_trainable(false);
  auto out = net_.forward(g, flatten_rows(samples), Mode::eval, rng, kFeatureLayers).detach();
  net_.set_trainable(true);
  return out;
}

std::size_t SurrogateClassifier::feature_dim() const { return net_.spec().width; }
std::size_t SurrogateClassifier::num_classes() const { return net_.spec().channels; }

SurrogateClassifier train_surrogate_classifier(const Tensor& samples, std::span<const int> labels,
                                               const ClassifierConfig& config, std::uint64_t seed) {
  if (samples.numel() == 0 || samples.dim(0) != labels.size()) {
    throw DimensionError("classifier: " + std::to_string(labels.size()) + " labels for samples " +
                         shape_to_string(samples.shape()));
  }
  const std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw ContractError("classifier needs at least two classes present");
  if (*distinct.begin() < 0) throw ContractError("classifier labels must be non-negative");
  const auto num_classes = static_cast<std::size_t>(*distinct.rbegin()) + 1;

  const Tensor rows = as_rows(samples);
  const std::size_t n = rows.dim(0);
  Rng split_rng(derive_seed(seed, "split"));
  const auto order = split_rng.permutation(n);
  auto n_val = static_cast<std::size_t>(static_cast<double>(n) * config.validation_fraction);
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  const std::span<const std::size_t> val_idx(order.data(), n_val);
  const std::span<const std::size_t> train_idx(order.data() + n_val, n - n_val);

  const Tensor x_val = gather_rows(rows, val_idx);
  const Tensor x_train = gather_rows(rows, train_idx);
  std::vector<int> y_val, y_train;
  for (auto i : val_idx) y_val.push_back(labels[i]);
  for (auto i : train_idx) y_train.push_back(labels[i]);

  Network net(mlp_classifier_spec(rows.dim(1), config.hidden, config.feature_dim, num_classes),
              derive_seed(seed, "init"));
  auto moments = AdamMoments::zeros_like(net.params());
  const AdamOptions adam{config.lr, 0.9, 0.999, 1e-8};
  const std::size_t bs = std::min(config.batch_size, x_train.dim(0));
  const std::size_t batches = x_train.dim(0) / bs;
  Rng rng(derive_seed(seed, "batches"));
  Rng unused(0);
  std::uint64_t t = 0;
  std::vector<double> curve;

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto perm = rng.permutation(x_train.dim(0));
    for (std::size_t b = 0; b < batches; ++b) {
      const std::span<const std::size_t> idx(perm.data() + b * bs, bs);
      const auto xb = gather_rows(x_train, idx);
      std::vector<int> yb;
      for (auto i : idx) yb.push_back(y_train[i]);
      net.zero_grad();
      Graph g;
      auto loss = softmax_cross_entropy(g, net.forward(g, xb, Mode::train, unused), yb);
      g.backward(loss);
      adam_step(net.params(), moments, ++t, adam);
    }
    curve.push_back(accuracy(net, x_val, y_val));
    const double acc = curve.back();
    if (acc >= config.target_accuracy) {
      return SurrogateClassifier(std::move(net), seed, acc, std::move(curve));
    }
  }
  std::ostringstream os;
  os << "surrogate classifier reached only " << (curve.empty() ? 0.0 : curve.back()) << " validation accuracy (target "
     << config.target_accuracy << ") after " << config.max_epochs << " epochs; curve:";
  for (double a : curve) os << ' ' << a;
  throw TrainingError(os.str());
}

}  // namespace wcgan
