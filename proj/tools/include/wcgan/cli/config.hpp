#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "wcgan/data.hpp"
#include "wcgan/orchestrator.hpp"

namespace wcgan::cli {

enum class DatasetKind { synthetic, cifar10_binary };

std::string to_string(DatasetKind kind);

struct MetricToggles {
  bool is = true;
  bool fid = true;
  bool mode_coverage = true;
  bool cycling = true;

  bool operator==(const MetricToggles&) const = default;
};

/// Everything a run needs. Every randomized step derives its seed from
/// `seed`; the file form is INI with [run], [data], [model], [train] and
/// [metrics] sections.
struct RunConfig {
  DatasetKind dataset = DatasetKind::synthetic;
  std::filesystem::path dataset_path;  // cifar10-binary only
  std::size_t classes = 4;
  std::filesystem::path output_dir = "run";
  std::size_t workers = 1;
  std::uint64_t seed = 0;

  // Synthetic ring mixture.
  std::size_t samples_per_class = 1024;
  std::size_t modes_per_class = 2;
  double class_radius = 0.5;
  double mode_offset = 0.3;
  double sigma = 0.1;

  // Vector models use latent_dim/hidden/depth, image models latent_dim and
  // the two widths.
  std::size_t latent_dim = 8;
  std::size_t hidden = 32;
  std::size_t depth = 2;
  std::size_t gen_width = 128;
  std::size_t disc_width = 16;

  LoopConfig loop;
  MetricToggles metrics;

  bool operator==(const RunConfig& other) const;
};

/// Parses INI text. Unknown sections or keys and malformed values are all
/// collected into one ConfigError. Keys left out take dataset-dependent
/// defaults (image models default to latent_dim 100).
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Every violation, in a stable order; empty when the config is usable.
/// Checks that referenced paths exist.
std::vector<std::string> validate_config(const RunConfig& config);

/// Canonical INI with every key spelled out; parse_config inverts it exactly.
std::string format_config(const RunConfig& config);

MixtureSpec mixture_of(const RunConfig& config);
PairSpec pair_of(const RunConfig& config);
/// Per-class training data; throws on I/O or format problems.
std::vector<ClassShard> load_shards(const RunConfig& config);

}  // namespace wcgan::cli
