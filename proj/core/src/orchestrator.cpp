#include "wcgan/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numeric>
#include <thread>

#include "wcgan/error.hpp"

namespace wcgan {

std::uint64_t worker_seed(std::uint64_t global_seed, int label) {
  return derive_seed(derive_seed(global_seed, "class"), static_cast<std::uint64_t>(label));
}

WorkerAssignment make_assignment(const ClassShard& shard, const LoopConfig& base) {
  WorkerAssignment a;
  a.label = shard.label;
  a.shard = &shard;
  a.seed = worker_seed(base.seed, shard.label);
  a.config = base;
  a.config.seed = a.seed;
  return a;
}

TrainingState initial_state(const PairSpec& pair, const WorkerAssignment& assignment) {
  return TrainingState::create(pair.gen, pair.disc, assignment.config, derive_seed(assignment.seed, "gen"),
                               derive_seed(assignment.seed, "disc"));
}

ParallelResult train_parallel(std::span<const ClassShard> shards, const PairSpec& pair, const LoopConfig& config,
                              const ParallelOptions& options) {
  if (options.workers == 0) throw ParameterError("train_parallel: workers must be >= 1");
  config.validate();

  std::vector<WorkerAssignment> assignments;
  std::map<int, bool> seen;
  for (const auto& shard : shards) {
    if (shard.size() == 0) continue;
    if (seen[shard.label]) throw ContractError("train_parallel: two shards carry label " + std::to_string(shard.label));
    seen[shard.label] = true;
    assignments.push_back(make_assignment(shard, config));
  }
  if (assignments.empty()) throw ContractError("train_parallel: no non-empty shards");
  std::sort(assignments.begin(), assignments.end(), [](const auto& a, const auto& b) { return a.label < b.label; });

  if (options.checkpoint_dir) std::filesystem::create_directories(*options.checkpoint_dir);

  std::vector<std::optional<ClassRun>> runs(assignments.size());
  std::vector<std::optional<ClassFailure>> failures(assignments.size());
  Channel<MetricsRecord> channel;
  std::vector<MetricsRecord> collected;

  std::thread collector([&] {
    while (auto rec = channel.pop()) {
      if (options.metrics_sink) options.metrics_sink(*rec);
      collected.push_back(std::move(*rec));
    }
  });

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next.fetch_add(1); i < assignments.size(); i = next.fetch_add(1)) {
      const auto& a = assignments[i];
      try {
        TrainCallbacks extra = options.callbacks ? options.callbacks(a.label) : TrainCallbacks{};
        TrainCallbacks cb;
        cb.on_critic_step = extra.on_critic_step;
        cb.on_epoch = [&channel, user = extra.on_epoch](const MetricsRecord& rec) {
          channel.push(rec);
          if (user) user(rec);
        };
        auto result = train_pair(initial_state(pair, a), *a.shard, cb);
        ClassRun run{make_checkpoint(result.state, a.label, config.seed), std::move(result.epoch_summaries),
                     result.wall_s};
        if (options.checkpoint_dir) save_checkpoint(run.checkpoint, checkpoint_path(*options.checkpoint_dir, a.label));
        runs[i] = std::move(run);
      } catch (const std::exception& e) {
        failures[i] = ClassFailure{a.label, e.what()};
      } catch (...) {
        failures[i] = ClassFailure{a.label, "unknown failure"};
      }
    }
  };

  const std::size_t n_threads = std::min(options.workers, assignments.size());
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  channel.close();
  collector.join();

  ParallelResult out;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (runs[i]) out.runs.push_back(std::move(*runs[i]));
    if (failures[i]) out.failures.push_back(std::move(*failures[i]));
  }
  out.metrics = std::move(collected);
  std::stable_sort(out.metrics.begin(), out.metrics.end(), [](const auto& a, const auto& b) {
    return a.class_id != b.class_id ? a.class_id < b.class_id : a.epoch < b.epoch;
  });
  return out;
}

ClassPrior ClassPrior::uniform(std::size_t classes) {
  if (classes == 0) throw ParameterError("ClassPrior::uniform needs at least one class");
  return {std::vector<double>(classes, 1.0 / static_cast<double>(classes))};
}

ClassPrior ClassPrior::point(std::size_t classes, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= classes) {
    throw ParameterError("ClassPrior::point: label " + std::to_string(label) + " outside [0, " +
                         std::to_string(classes) + ")");
  }
  ClassPrior p{std::vector<double>(classes, 0.0)};
  p.probs[static_cast<std::size_t>(label)] = 1.0;
  return p;
}

void ClassPrior::validate() const {
  if (probs.empty()) throw ParameterError("class prior is empty");
  double total = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (!(probs[k] >= 0.0) || !std::isfinite(probs[k])) {
      throw ParameterError("class prior entry " + std::to_string(k) + " is negative or not finite");
    }
    total += probs[k];
  }
  if (std::abs(total - 1.0) > 1e-12) throw ParameterError("class prior sums to " + std::to_string(total));
}

LabeledSamples sample_mixture(std::span<const Checkpoint> checkpoints, const ClassPrior& prior, std::size_t n,
                              std::uint64_t seed) {
  prior.validate();
  std::map<int, const Checkpoint*> by_label;
  for (const auto& c : checkpoints) by_label[c.label] = &c;
  for (std::size_t k = 0; k < prior.probs.size(); ++k) {
    if (prior.probs[k] > 0.0 && !by_label.contains(static_cast<int>(k))) {
      throw ContractError("sample_mixture: no checkpoint for label " + std::to_string(k));
    }
  }

  std::vector<double> cdf(prior.probs.size());
  std::partial_sum(prior.probs.begin(), prior.probs.end(), cdf.begin());

  LabeledSamples out;
  if (n == 0) return out;

  // Labels and noise come from one stream, in draw order.
  Rng rng(derive_seed(seed, "mixture"));
  std::map<int, std::vector<std::size_t>> rows_of;
  std::vector<std::vector<double>> noise(n);
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform() * cdf.back();
    auto k = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    k = std::min(k, cdf.size() - 1);
    while (prior.probs[k] == 0.0) --k;  // u landed exactly on a boundary
    const int label = static_cast<int>(k);
    out.labels[i] = label;
    rows_of[label].push_back(i);
    const auto latent = by_label.at(label)->gen_spec.input_shape.at(0);
    noise[i].resize(latent);
    rng.fill_normal(noise[i]);
  }

  Shape sample_shape;
  std::vector<double> values;
  for (const auto& [label, rows] : rows_of) {
    Network gen = restore_generator(*by_label.at(label));
    const std::size_t latent = gen.spec().input_shape.at(0);
    std::vector<double> z;
    z.reserve(rows.size() * latent);
    for (auto i : rows) z.insert(z.end(), noise[i].begin(), noise[i].end());
    Rng unused(0);
    const Tensor fake = gen.infer(Tensor({rows.size(), latent}, std::move(z)), Mode::eval, unused);
    const Shape this_shape(fake.shape().begin() + 1, fake.shape().end());
    if (sample_shape.empty()) {
      sample_shape = this_shape;
      values.assign(n * shape_numel(sample_shape), 0.0);
    } else if (this_shape != sample_shape) {
      throw DimensionError("sample_mixture: generators disagree on output shape");
    }
    const std::size_t stride = shape_numel(sample_shape);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::copy_n(fake.data().begin() + static_cast<std::ptrdiff_t>(r * stride), stride,
                  values.begin() + static_cast<std::ptrdiff_t>(rows[r] * stride));
    }
  }
  Shape full{n};
  full.insert(full.end(), sample_shape.begin(), sample_shape.end());
  out.samples = Tensor(std::move(full), std::move(values));
  return out;
}

ScalingReport weak_scaling_bench(std::span<const std::size_t> class_counts, const ScalingWorkload& workload,
                                 const PairSpec& pair, const LoopConfig& config) {
  std::vector<std::size_t> counts(class_counts.begin(), class_counts.end());
  std::sort(counts.begin(), counts.end());
  counts.erase(std::unique(counts.begin(), counts.end()), counts.end());
  if (counts.empty() || counts.front() == 0) throw ParameterError("weak_scaling_bench: class counts must be >= 1");

  ScalingReport report;
  report.hardware_threads = std::thread::hardware_concurrency();
  LoopConfig cfg = config;
  cfg.epochs = workload.epochs;
  cfg.summary_samples = 0;

  for (std::size_t k : counts) {
    // Identical data for every class keeps the per-worker workload fixed.
    const auto spec = ring_mixture(1, 2, 0.5, 0.2, 0.05, config.seed);
    const auto base = synth_conditional_mixture(spec, workload.samples_per_class).front();
    std::vector<ClassShard> shards(k, base);
    for (std::size_t i = 0; i < k; ++i) shards[i].label = static_cast<int>(i);

    ParallelOptions opts;
    opts.workers = k;
    auto result = train_parallel(shards, pair, cfg, opts);
    if (!result.ok()) throw TrainingError("weak_scaling_bench: class " + std::to_string(result.failures[0].label) +
                                          " failed: " + result.failures[0].message);
    std::vector<double> times;
    for (const auto& r : result.runs) times.push_back(r.wall_s);
    ScalingRow row;
    row.classes = k;
    row.slowest_s = *std::max_element(times.begin(), times.end());
    row.mean_s = std::accumulate(times.begin(), times.end(), 0.0) / static_cast<double>(times.size());
    double ss = 0.0;
    for (double t : times) ss += (t - row.mean_s) * (t - row.mean_s);
    row.std_s = std::sqrt(ss / static_cast<double>(times.size()));
    report.rows.push_back(row);
  }
  const double base = report.rows.front().slowest_s;
  for (auto& row : report.rows) row.efficiency = base > 0.0 ? row.slowest_s / base : 0.0;
  return report;
}

PairSpec default_vector_pair(std::size_t dim, std::size_t latent_dim, CriticVariant variant) {
  return {mlp_generator_spec(latent_dim, dim, 64, 2), mlp_discriminator_spec(dim, 64, 2, variant)};
}

}  // namespace wcgan
