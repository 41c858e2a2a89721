#include "wcgan/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "wcgan/error.hpp"

namespace wcgan {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void require_nonempty(const char* op, const Tensor& t) {
  if (t.numel() == 0) throw ContractError(std::string(op) + ": empty batch");
}

void require_probabilities(const char* op, const Tensor& t) {
  for (double v : t.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError(std::string(op) + ": probability " + std::to_string(v) + " outside [0,1]");
  }
}

double l2_norm(const Network& net) {
  double s = 0.0;
  for (const auto& p : net.params()) {
    for (double v : p.tensor.data()) s += v * v;
  }
  return std::sqrt(s);
}

Tensor sample_noise(Rng& rng, std::size_t n, std::size_t dim) {
  std::vector<double> z(n * dim);
  rng.fill_normal(z);
  return Tensor({n, dim}, std::move(z));
}

}  // namespace

void LoopConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("lr must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0,1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam eps must be positive");
  if (n_critic < 1) throw ConfigError("n_critic must be >= 1");
  if (!(clip_c > 0.0)) throw ConfigError("clip_c must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

AdamMoments AdamMoments::zeros_like(std::span<const NamedTensor> params) {
  AdamMoments m;
  for (const auto& p : params) {
    m.m.emplace_back(p.tensor.numel(), 0.0);
    m.v.emplace_back(p.tensor.numel(), 0.0);
  }
  return m;
}

void adam_step(std::span<NamedTensor> params, AdamMoments& moments, std::uint64_t t, const AdamOptions& opts) {
  if (t < 1) throw ContractError("adam_step: step index must be >= 1");
  if (moments.m.size() != params.size() || moments.v.size() != params.size()) {
    throw DimensionError("adam_step: moments for " + std::to_string(moments.m.size()) + " parameters, got " +
                         std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (moments.m[i].size() != p.tensor.numel() || moments.v[i].size() != p.tensor.numel()) {
      throw DimensionError("adam_step: moment shape mismatch for '" + p.name + "'");
    }
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw OptimizerError("adam_step: non-finite gradient in parameter '" + p.name + "'");
    }
  }
  const double bc1 = 1.0 - std::pow(opts.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(opts.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].tensor.data();
    auto grad = params[i].tensor.grad();
    if (grad.empty()) continue;  // never received a gradient
    auto& m = moments.m[i];
    auto& v = moments.v[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double g = grad[j];
      m[j] = opts.beta1 * m[j] + (1.0 - opts.beta1) * g;
      v[j] = opts.beta2 * v[j] + (1.0 - opts.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      theta[j] -= opts.lr * mhat / (std::sqrt(vhat) + opts.eps);
    }
  }
}

Tensor critic_loss_w(Graph& g, const Tensor& real_scores, const Tensor& fake_scores) {
  require_nonempty("critic_loss_w", real_scores);
  require_nonempty("critic_loss_w", fake_scores);
  return sub(g, mean(g, fake_scores), mean(g, real_scores));
}

double wasserstein_estimate(const Tensor& real_scores, const Tensor& fake_scores) {
  require_nonempty("wasserstein_estimate", real_scores);
  require_nonempty("wasserstein_estimate", fake_scores);
  double r = 0.0, f = 0.0;
  for (double v : real_scores.data()) r += v;
  for (double v : fake_scores.data()) f += v;
  return r / static_cast<double>(real_scores.numel()) - f / static_cast<double>(fake_scores.numel());
}

Tensor generator_loss_w(Graph& g, const Tensor& fake_scores) {
  require_nonempty("generator_loss_w", fake_scores);
  return scale(g, mean(g, fake_scores), -1.0);
}

namespace {
constexpr double kProbFloor = 1e-7;
}

Tensor generator_loss_dc(Graph& g, const Tensor& fake_probs) {
  require_nonempty("generator_loss_dc", fake_probs);
  require_probabilities("generator_loss_dc", fake_probs);
  auto clamped = clamp(g, fake_probs, kProbFloor, 1.0 - kProbFloor);
  return scale(g, mean(g, log(g, clamped)), -1.0);
}

DcLosses losses_dc(Graph& g, const Tensor& real_probs, const Tensor& fake_probs) {
  require_nonempty("losses_dc", real_probs);
  require_nonempty("losses_dc", fake_probs);
  require_probabilities("losses_dc", real_probs);
  require_probabilities("losses_dc", fake_probs);
  auto real_c = clamp(g, real_probs, kProbFloor, 1.0 - kProbFloor);
  auto fake_c = clamp(g, fake_probs, kProbFloor, 1.0 - kProbFloor);
  auto real_term = mean(g, log(g, real_c));
  auto fake_term = mean(g, log(g, affine(g, fake_c, -1.0, 1.0)));
  auto disc = scale(g, add(g, real_term, fake_term), -1.0);
  return {disc, generator_loss_dc(g, fake_probs)};
}

void clip_weights(Network& net, double c) {
  if (!(c > 0.0)) throw ParameterError("clip_weights: c must be positive");
  for (auto& p : net.params()) {
    for (auto& v : p.tensor.data()) v = std::clamp(v, -c, c);
  }
}

TrainingState TrainingState::create(const ModelSpec& gen_spec, const ModelSpec& disc_spec, const LoopConfig& config,
                                    std::uint64_t gen_seed, std::uint64_t disc_seed) {
  config.validate();
  if (gen_spec.kind != NetworkKind::generator) throw SpecError("first spec must describe a generator");
  if (disc_spec.kind != NetworkKind::discriminator) throw SpecError("second spec must describe a discriminator");
  if (gen_spec.output_shape() != disc_spec.input_shape) {
    throw SpecError("generator output " + shape_to_string(gen_spec.output_shape()) +
                    " does not feed discriminator input " + shape_to_string(disc_spec.input_shape));
  }
  const bool sigmoid_head = disc_spec.final_activation == ActivationKind::sigmoid;
  if (sigmoid_head != (config.variant == CriticVariant::dc)) {
    throw SpecError("discriminator head does not match the " + to_string(config.variant) + " variant");
  }
  TrainingState s;
  s.gen = Network(gen_spec, gen_seed);
  s.disc = Network(disc_spec, disc_seed);
  s.gen_moments = AdamMoments::zeros_like(s.gen.params());
  s.disc_moments = AdamMoments::zeros_like(s.disc.params());
  s.config = config;
  return s;
}

TrainResult train_pair(TrainingState state, const ClassShard& shard, const TrainCallbacks& callbacks) {
  const auto& cfg = state.config;
  cfg.validate();
  const std::size_t n = shard.size();
  if (n == 0) throw ContractError("train_pair: class " + std::to_string(shard.label) + " has no samples");
  if (cfg.batch_size > n) {
    throw ContractError("train_pair: batch size " + std::to_string(cfg.batch_size) + " exceeds shard size " +
                        std::to_string(n));
  }
  if (shard.sample_shape() != state.disc.spec().input_shape) {
    throw DimensionError("train_pair: samples " + shape_to_string(shard.sample_shape()) +
                         " do not match discriminator input " + shape_to_string(state.disc.spec().input_shape));
  }

  const bool wasserstein = cfg.variant == CriticVariant::wasserstein;
  const std::size_t latent = state.gen.spec().latent_dim;
  const std::size_t bs = cfg.batch_size;
  const std::size_t batches = n / bs;
  const AdamOptions adam{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps};

  Rng data_rng(derive_seed(cfg.seed, "data"));
  Rng noise_rng(derive_seed(cfg.seed, "noise"));
  Rng dropout_rng(derive_seed(cfg.seed, "dropout"));

  Tensor probe;
  if (cfg.summary_samples > 0) {
    Rng probe_rng(derive_seed(cfg.seed, "probe"));
    probe = sample_noise(probe_rng, cfg.summary_samples, latent);
  }

  TrainResult result;
  const auto run_start = Clock::now();

  auto fail_numeric = [&](const char* what, std::size_t epoch, std::size_t batch) {
    std::ostringstream os;
    os << "non-finite " << what << " loss for class " << shard.label << " at epoch " << epoch << ", batch " << batch
       << " (t_gen=" << state.t_gen << ", t_disc=" << state.t_disc << "); parameter norms: generator "
       << l2_norm(state.gen) << ", discriminator " << l2_norm(state.disc);
    throw NumericError(os.str());
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    const auto order = data_rng.permutation(n);
    double disc_sum = 0.0, gen_sum = 0.0, w_sum = 0.0;
    std::size_t disc_steps = 0, gen_steps = 0;

    for (std::size_t b = 0; b < batches; ++b) {
      // Critic update. Rows [0, bs) of the joint batch are real, [bs, 2bs) fake.
      {
        const auto real = gather_rows(shard.samples, std::span(order).subspan(b * bs, bs));
        state.gen.set_trainable(false);
        state.disc.set_trainable(true);
        state.disc.zero_grad();
        Graph g;
        auto z = sample_noise(noise_rng, bs, latent);
        auto fake = state.gen.forward(g, z, Mode::train, dropout_rng).detach();
        auto scores = state.disc.forward(g, concat_rows(g, real, fake), Mode::train, dropout_rng);
        auto real_scores = slice_rows(g, scores, 0, bs);
        auto fake_scores = slice_rows(g, scores, bs, 2 * bs);
        Tensor loss = wasserstein ? critic_loss_w(g, real_scores, fake_scores)
                                  : losses_dc(g, real_scores, fake_scores).disc_loss;
        if (!std::isfinite(loss.item())) fail_numeric("critic", epoch, b);
        g.backward(loss);
        adam_step(state.disc.params(), state.disc_moments, ++state.t_disc, adam);
        if (wasserstein) clip_weights(state.disc, cfg.clip_c);
        disc_sum += loss.item();
        w_sum += wasserstein_estimate(real_scores, fake_scores);
        ++disc_steps;
        if (callbacks.on_critic_step) callbacks.on_critic_step(state.disc, state.t_disc);
      }

      const std::size_t every = wasserstein ? cfg.n_critic : 1;
      if (state.t_disc % every != 0) continue;

      // Generator update.
      {
        state.gen.set_trainable(true);
        state.disc.set_trainable(false);
        state.gen.zero_grad();
        Graph g;
        auto z = sample_noise(noise_rng, bs, latent);
        auto fake = state.gen.forward(g, z, Mode::train, dropout_rng);
        const auto real = gather_rows(shard.samples, std::span(order).subspan(b * bs, bs));
        auto joint = state.disc.forward(g, concat_rows(g, real, fake), Mode::train, dropout_rng);
        auto scores = slice_rows(g, joint, bs, 2 * bs);
        Tensor loss = wasserstein ? generator_loss_w(g, scores) : generator_loss_dc(g, scores);
        if (!std::isfinite(loss.item())) fail_numeric("generator", epoch, b);
        g.backward(loss);
        adam_step(state.gen.params(), state.gen_moments, ++state.t_gen, adam);
        gen_sum += loss.item();
        ++gen_steps;
      }
    }
    state.gen.set_trainable(true);
    state.disc.set_trainable(true);

    if (cfg.summary_samples > 0) {
      Rng unused(0);
      auto samples = state.gen.infer(probe, Mode::eval, unused);
      const std::size_t rows = samples.dim(0);
      result.epoch_summaries.push_back(feature_summary(Tensor({rows, samples.numel() / rows},
                                                              {samples.data().begin(), samples.data().end()})));
    }

    MetricsRecord rec;
    rec.epoch = epoch;
    rec.class_id = shard.label;
    rec.disc_loss = disc_steps ? disc_sum / static_cast<double>(disc_steps) : 0.0;
    rec.gen_loss = gen_steps ? gen_sum / static_cast<double>(gen_steps) : 0.0;
    rec.w_estimate = disc_steps ? w_sum / static_cast<double>(disc_steps) : 0.0;
    rec.wall_s = seconds_since(epoch_start);
    result.metrics.push_back(rec);
    if (callbacks.on_epoch) callbacks.on_epoch(rec);
  }

  result.wall_s = seconds_since(run_start);
  result.state = std::move(state);
  return result;
}

}  // namespace wcgan
