#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "wcgan/data.hpp"
#include "wcgan/model.hpp"
#include "wcgan/stats.hpp"

namespace wcgan {

struct LoopConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 1000;
  std::size_t batch_size = 64;
  std::size_t n_critic = 5;
  double clip_c = 0.01;
  CriticVariant variant = CriticVariant::wasserstein;
  std::uint64_t seed = 0;
  // When > 0, a Gaussian summary of this many generator samples (fixed probe
  // noise) is recorded after every epoch.
  std::size_t summary_samples = 0;

  void validate() const;
};

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment estimates, one buffer per parameter.
struct AdamMoments {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamMoments zeros_like(std::span<const NamedTensor> params);
  bool operator==(const AdamMoments&) const = default;
};

/// One Adam update from the gradients currently held by `params`; `t` is the
/// 1-based step index used for bias correction.
void adam_step(std::span<NamedTensor> params, AdamMoments& moments, std::uint64_t t, const AdamOptions& opts);

/// -(mean(real) - mean(fake)); minimizing it maximizes the critic's
/// Wasserstein estimate.
Tensor critic_loss_w(Graph& g, const Tensor& real_scores, const Tensor& fake_scores);
/// mean(real) - mean(fake), the logged Wasserstein estimate.
double wasserstein_estimate(const Tensor& real_scores, const Tensor& fake_scores);
/// -mean(fake).
Tensor generator_loss_w(Graph& g, const Tensor& fake_scores);

struct DcLosses {
  Tensor disc_loss;
  Tensor gen_loss;
};

/// Binary cross-entropy baseline with probabilities clamped to
/// [1e-7, 1 - 1e-7]; the generator uses the non-saturating form.
DcLosses losses_dc(Graph& g, const Tensor& real_probs, const Tensor& fake_probs);
Tensor generator_loss_dc(Graph& g, const Tensor& fake_probs);

/// Clamps every parameter entry into [-c, c].
void clip_weights(Network& net, double c);

struct TrainingState {
  Network gen;
  Network disc;
  AdamMoments gen_moments;
  AdamMoments disc_moments;
  std::uint64_t t_gen = 0;
  std::uint64_t t_disc = 0;
  LoopConfig config;

  static TrainingState create(const ModelSpec& gen_spec, const ModelSpec& disc_spec, const LoopConfig& config,
                              std::uint64_t gen_seed, std::uint64_t disc_seed);
};

struct TrainCallbacks {
  std::function<void(const MetricsRecord&)> on_epoch;
  // Called after every critic update (and clip), with the updated critic.
  std::function<void(const Network& disc, std::uint64_t t_disc)> on_critic_step;
};

struct TrainResult {
  TrainingState state;
  std::vector<MetricsRecord> metrics;
  std::vector<GaussianSummary> epoch_summaries;
  double wall_s = 0.0;
};

/// Trains one generator/critic pair on a single class. Each minibatch is a
/// critic update; every n_critic-th critic update is followed by one
/// generator update (every update for the dc variant). Deterministic given
/// config.seed.
///
/// The critic always scores real and fake rows as one joint batch, so its
/// train-mode batchnorm statistics span both. Scoring them separately would
/// make the mean score of each batch independent of its inputs whenever a
/// batchnorm layer feeds the linear head, leaving both Wasserstein losses
/// constant.
TrainResult train_pair(TrainingState state, const ClassShard& shard, const TrainCallbacks& callbacks = {});

}  // namespace wcgan
