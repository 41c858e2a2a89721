#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wcgan/checkpoint.hpp"
#include "wcgan/data.hpp"
#include "wcgan/model.hpp"
#include "wcgan/stats.hpp"
#include "wcgan/training.hpp"

namespace wcgan {

struct PairSpec {
  ModelSpec gen;
  ModelSpec disc;
};

/// Stable per-class seed; depends only on (global_seed, label).
std::uint64_t worker_seed(std::uint64_t global_seed, int label);

struct WorkerAssignment {
  int label = 0;
  const ClassShard* shard = nullptr;
  std::uint64_t seed = 0;
  LoopConfig config;  // config.seed == seed
};

WorkerAssignment make_assignment(const ClassShard& shard, const LoopConfig& base);
/// Freshly initialized state for one class: generator init seed
/// derive_seed(seed, "gen"), critic init seed derive_seed(seed, "disc").
TrainingState initial_state(const PairSpec& pair, const WorkerAssignment& assignment);

/// Unbounded multi-producer single-consumer queue. pop() blocks until an item
/// arrives or the channel is closed and drained.
template <typename T>
class Channel {
 public:
  void push(T item) {
    {
      std::lock_guard lock(mu_);
      items_.push_back(std::move(item));
    }
    cv_.notify_one();
  }
  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    return item;
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> items_;
  bool closed_ = false;
};

struct ParallelOptions {
  std::size_t workers = 1;
  // Invoked on the collector thread, in arrival order.
  std::function<void(const MetricsRecord&)> metrics_sink;
  // When set, each completed class is saved to checkpoint_path(dir, label).
  std::optional<std::filesystem::path> checkpoint_dir;
  // Extra per-class hooks, called on the worker thread of that class.
  std::function<TrainCallbacks(int label)> callbacks;
};

struct ClassRun {
  Checkpoint checkpoint;
  std::vector<GaussianSummary> epoch_summaries;
  double wall_s = 0.0;
};

struct ClassFailure {
  int label = 0;
  std::string message;
};

struct ParallelResult {
  std::vector<ClassRun> runs;            // completed classes, ascending label
  std::vector<ClassFailure> failures;    // ascending label
  std::vector<MetricsRecord> metrics;    // sorted by (class, epoch)

  bool ok() const { return failures.empty(); }
};

/// Trains one pair per non-empty shard, up to `options.workers` at a time.
/// Per-class results do not depend on the worker count or on which other
/// classes are present. A failing class is reported in `failures`; other
/// classes still complete.
ParallelResult train_parallel(std::span<const ClassShard> shards, const PairSpec& pair, const LoopConfig& config,
                              const ParallelOptions& options = {});

struct ClassPrior {
  std::vector<double> probs;

  static ClassPrior uniform(std::size_t classes);
  static ClassPrior point(std::size_t classes, int label);
  /// Nonnegative, sum within 1e-12 of 1.
  void validate() const;
};

struct LabeledSamples {
  Tensor samples;  // [n × generator output shape]; shape {0} when n == 0
  std::vector<int> labels;
};

/// Draws n (G_y(z), y) pairs with y ~ prior and z ~ N(0, I). Every label in
/// the prior's support needs a checkpoint.
LabeledSamples sample_mixture(std::span<const Checkpoint> checkpoints, const ClassPrior& prior, std::size_t n,
                              std::uint64_t seed);

struct ScalingWorkload {
  std::size_t samples_per_class = 256;
  std::size_t epochs = 2;
};

struct ScalingRow {
  std::size_t classes = 0;
  double slowest_s = 0.0;
  double mean_s = 0.0;
  double std_s = 0.0;
  double efficiency = 0.0;  // slowest_s / slowest_s of the smallest requested K
};

struct ScalingReport {
  unsigned hardware_threads = 0;
  std::vector<ScalingRow> rows;  // ascending classes, one per distinct request
};

/// Trains K synthetic 2-D classes with K workers for each requested K, using
/// the same per-class workload throughout.
ScalingReport weak_scaling_bench(std::span<const std::size_t> class_counts, const ScalingWorkload& workload,
                                 const PairSpec& pair, const LoopConfig& config);

/// Small MLP pair sized for 2-D mixtures.
PairSpec default_vector_pair(std::size_t dim, std::size_t latent_dim, CriticVariant variant);

}  // namespace wcgan
