#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wcgan/classifier.hpp"
#include "wcgan/cli/config.hpp"

namespace wcgan::cli {

enum ExitCode : int { kOk = 0, kConfigFailure = 1, kRuntimeFailure = 2, kIoFailure = 3 };

/// Maps an in-flight exception to an exit code: configuration and argument
/// errors 1, I/O and file-format errors 3, anything else 2.
int exit_code_for(const std::exception& e);

/// One metrics.jsonl line (no trailing newline).
std::string metrics_line(const MetricsRecord& record);

int cmd_train(const std::filesystem::path& config_path, std::ostream& log);

struct GenerateArgs {
  std::filesystem::path checkpoints;
  int label = 0;
  std::size_t count = 0;
  std::filesystem::path out;
  std::uint64_t seed = 0;
};
/// Images become out/class_<k>_<i>.ppm; vector samples go to
/// out/class_<k>.csv. count 0 writes nothing.
int cmd_generate(const GenerateArgs& args, std::ostream& log);

struct EvalInputs {
  std::vector<ClassShard> real;  // index k holds label k
  std::vector<Tensor> fake;      // generated samples per class
  std::optional<MixtureSpec> truth;
  std::vector<std::vector<GaussianSummary>> epoch_summaries;  // per class, may be empty
};

struct EvalOptions {
  MetricToggles metrics;
  ClassifierConfig classifier;
  std::uint64_t seed = 0;
  std::size_t cycling_lag = 5;
};

/// Builds the report object. A metric whose prerequisite fails is listed
/// under "errors" and left null; the rest are still computed.
nlohmann::ordered_json evaluate(const EvalInputs& inputs, const EvalOptions& options);

MetricToggles parse_metric_list(const std::string& list);

struct EvaluateArgs {
  std::filesystem::path checkpoints;
  std::filesystem::path dataset;  // the run config that produced the checkpoints
  std::string metrics = "is,fid,mode_coverage,cycling";
  std::filesystem::path out;
  std::size_t samples = 1000;  // generated per class
  double classifier_target = 0.9;
  std::uint64_t seed = 0;
};
int cmd_evaluate(const EvaluateArgs& args, std::ostream& log);

struct ScaleBenchArgs {
  std::vector<std::size_t> classes;
  std::size_t samples = 256;
  std::size_t epochs = 2;
  std::filesystem::path out;
  std::uint64_t seed = 0;
};
/// Writes the CSV to `out` and the machine descriptor next to it as
/// <stem>.machine.json.
int cmd_scale_bench(const ScaleBenchArgs& args, std::ostream& log);

/// "1,2,4" -> {1, 2, 4}.
std::vector<std::size_t> parse_count_list(const std::string& list);

}  // namespace wcgan::cli
