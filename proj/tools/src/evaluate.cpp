#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

#include "wcgan/cli/commands.hpp"
#include "wcgan/error.hpp"

namespace wcgan::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

Tensor concat_rows(const std::vector<const Tensor*>& parts) {
  Shape shape = parts.front()->shape();
  std::vector<double> values;
  std::size_t rows = 0;
  for (const auto* t : parts) {
    if (t->numel() == 0) continue;
    rows += t->dim(0);
    values.insert(values.end(), t->data().begin(), t->data().end());
  }
  shape[0] = rows;
  return Tensor(std::move(shape), std::move(values));
}

// Appends to the metric's error entry so every failing class is named.
void note(ordered_json& errors, const std::string& metric, const std::string& message) {
  if (errors.contains(metric)) {
    errors[metric] = errors[metric].get<std::string>() + "; " + message;
  } else {
    errors[metric] = message;
  }
}

std::vector<std::vector<GaussianSummary>> read_summaries(const fs::path& path, std::size_t classes) {
  std::vector<std::vector<GaussianSummary>> out(classes);
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto k = j.at("class").get<std::size_t>();
    const auto e = j.at("epoch").get<std::size_t>();
    if (k >= classes) throw FormatError("summaries file names class " + std::to_string(k));
    if (e != out[k].size()) throw FormatError("summaries file is out of epoch order");
    out[k].push_back({j.at("mean").get<std::vector<double>>(), j.at("cov").get<std::vector<double>>()});
  }
  return out;
}

}  // namespace

MetricToggles parse_metric_list(const std::string& list) {
  MetricToggles t{false, false, false, false};
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "is") {
      t.is = true;
    } else if (item == "fid") {
      t.fid = true;
    } else if (item == "mode_coverage") {
      t.mode_coverage = true;
    } else if (item == "cycling") {
      t.cycling = true;
    } else {
      throw ConfigError("unknown metric '" + item + "' (expected is, fid, mode_coverage, cycling)");
    }
  }
  return t;
}

ordered_json evaluate(const EvalInputs& in, const EvalOptions& opt) {
  const std::size_t k_count = in.real.size();
  if (in.fake.size() != k_count) throw ContractError("evaluate: real and fake class counts differ");

  ordered_json errors = ordered_json::object();
  ordered_json per_class = ordered_json::array();
  for (std::size_t k = 0; k < k_count; ++k) {
    per_class.push_back({{"class", k},
                         {"real_samples", in.real[k].size()},
                         {"fake_samples", in.fake[k].numel() == 0 ? 0 : in.fake[k].dim(0)},
                         {"is", nullptr},
                         {"fid", nullptr},
                         {"truth_fd", nullptr},
                         {"mode_coverage", nullptr},
                         {"cycling", nullptr}});
  }
  ordered_json aggregate{{"is", nullptr}, {"fid", nullptr}, {"worst_mode_coverage", nullptr}, {"mean_cycling", nullptr}};
  ordered_json classifier = nullptr;

  if (opt.metrics.is || opt.metrics.fid) {
    try {
      std::vector<const Tensor*> real_parts;
      std::vector<int> labels;
      for (const auto& shard : in.real) {
        if (shard.size() == 0) continue;
        real_parts.push_back(&shard.samples);
        labels.insert(labels.end(), shard.size(), shard.label);
      }
      if (real_parts.empty()) throw ContractError("no real samples");
      const auto seed = derive_seed(opt.seed, "classifier");
      auto clf = train_surrogate_classifier(concat_rows(real_parts), labels, opt.classifier, seed);
      classifier = {{"seed", seed},
                    {"validation_accuracy", clf.validation_accuracy()},
                    {"epochs", clf.accuracy_curve().size()},
                    {"feature_dim", clf.feature_dim()}};

      std::vector<const Tensor*> fake_parts;
      for (std::size_t k = 0; k < k_count; ++k) {
        const auto& fake = in.fake[k];
        if (fake.numel() == 0) continue;
        fake_parts.push_back(&fake);
        if (opt.metrics.is) per_class[k]["is"] = inception_score(clf.probabilities(fake));
        if (opt.metrics.fid) {
          try {
            per_class[k]["fid"] = frechet_distance(feature_summary(clf.features(in.real[k].samples)),
                                                   feature_summary(clf.features(fake)));
          } catch (const Error& e) {
            note(errors, "fid", "class " + std::to_string(k) + ": " + e.what());
          }
        }
      }
      if (!fake_parts.empty()) {
        const Tensor all_fake = concat_rows(fake_parts);
        if (opt.metrics.is) aggregate["is"] = inception_score(clf.probabilities(all_fake));
        if (opt.metrics.fid) {
          aggregate["fid"] = frechet_distance(feature_summary(clf.features(concat_rows(real_parts))),
                                              feature_summary(clf.features(all_fake)));
        }
      }
    } catch (const Error& e) {
      if (opt.metrics.is) note(errors, "is", e.what());
      if (opt.metrics.fid) note(errors, "fid", e.what());
    }
  }

  if (in.truth) {
    for (std::size_t k = 0; k < k_count; ++k) {
      if (in.fake[k].numel() == 0 || in.fake[k].dim(0) < 2) continue;
      per_class[k]["truth_fd"] = frechet_distance(feature_summary(in.fake[k]),
                                                  ground_truth_summary(*in.truth, static_cast<int>(k)));
    }
  }

  if (opt.metrics.mode_coverage) {
    if (!in.truth) {
      note(errors, "mode_coverage", "needs a synthetic dataset with known modes");
    } else {
      double worst = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < k_count; ++k) {
        if (in.fake[k].numel() == 0) continue;
        const auto cov = mode_coverage(in.fake[k], ground_truth_modes(*in.truth, static_cast<int>(k)));
        per_class[k]["mode_coverage"] = {{"fractions", cov.fractions}, {"worst", cov.worst()}, {"collapsed", cov.collapsed}};
        worst = std::min(worst, cov.worst());
      }
      if (std::isfinite(worst)) aggregate["worst_mode_coverage"] = worst;
    }
  }

  if (opt.metrics.cycling) {
    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t k = 0; k < k_count; ++k) {
      const auto* s = k < in.epoch_summaries.size() ? &in.epoch_summaries[k] : nullptr;
      if (!s || s->size() < opt.cycling_lag + 2) {
        note(errors, "cycling",
             "class " + std::to_string(k) + " has " + std::to_string(s ? s->size() : 0) +
                 " epoch summaries, needs " + std::to_string(opt.cycling_lag + 2) +
                 " (train with summary_samples > 0)");
        continue;
      }
      const double c = cycling_index(*s, opt.cycling_lag);
      per_class[k]["cycling"] = c;
      total += c;
      ++counted;
    }
    if (counted > 0) aggregate["mean_cycling"] = total / static_cast<double>(counted);
  }

  ordered_json requested = ordered_json::array();
  if (opt.metrics.is) requested.push_back("is");
  if (opt.metrics.fid) requested.push_back("fid");
  if (opt.metrics.mode_coverage) requested.push_back("mode_coverage");
  if (opt.metrics.cycling) requested.push_back("cycling");

  return {{"schema_version", 1},  {"seed", opt.seed},         {"classes", k_count},
          {"metrics", requested}, {"classifier", classifier}, {"per_class", per_class},
          {"aggregate", aggregate}, {"errors", errors}};
}

int cmd_evaluate(const EvaluateArgs& args, std::ostream& log) {
  try {
    const auto toggles = parse_metric_list(args.metrics);
    const auto config = load_config(args.dataset);
    const auto problems = validate_config(config);
    if (!problems.empty()) {
      log << "dataset config failed validation:\n";
      for (const auto& p : problems) log << "  " << p << "\n";
      return kConfigFailure;
    }
    if (args.samples < 2) throw ConfigError("--samples must be >= 2");

    EvalInputs inputs;
    inputs.real = load_shards(config);
    const std::size_t k_count = inputs.real.size();
    for (std::size_t k = 0; k < k_count; ++k) {
      if (inputs.real[k].size() == 0) {
        inputs.fake.emplace_back();
        continue;
      }
      const auto c = load_checkpoint(checkpoint_path(args.checkpoints, static_cast<int>(k)));
      const auto drawn = sample_mixture(std::span(&c, 1), ClassPrior::point(k + 1, static_cast<int>(k)), args.samples,
                                        derive_seed(derive_seed(args.seed, "eval"), k));
      inputs.fake.push_back(drawn.samples);
    }
    if (config.dataset == DatasetKind::synthetic) inputs.truth = mixture_of(config);
    inputs.epoch_summaries = read_summaries(args.checkpoints / "summaries.jsonl", k_count);

    EvalOptions opts;
    opts.metrics = toggles;
    opts.seed = args.seed;
    opts.classifier.target_accuracy = args.classifier_target;
    auto report = evaluate(inputs, opts);

    if (args.out.has_parent_path()) fs::create_directories(args.out.parent_path());
    std::ofstream out(args.out);
    if (!out) throw IoError("cannot write '" + args.out.string() + "'");
    out << report.dump(2) << "\n";
    if (!out) throw IoError("failed writing '" + args.out.string() + "'");

    for (const auto& [metric, message] : report["errors"].items()) {
      log << metric << ": " << message.get<std::string>() << "\n";
    }
    return report["errors"].empty() ? int{kOk} : int{kRuntimeFailure};
  } catch (const nlohmann::json::exception& e) {
    log << "evaluate failed: " << e.what() << "\n";
    return kIoFailure;
  } catch (const std::exception& e) {
    log << "evaluate failed: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace wcgan::cli
