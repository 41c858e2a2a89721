#include "wcgan/cli/commands.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <thread>

#include "wcgan/error.hpp"

namespace wcgan::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string fmt(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

ordered_json summary_json(int label, std::size_t epoch, const GaussianSummary& s) {
  return {{"class", label}, {"epoch", epoch}, {"mean", s.mean}, {"cov", s.cov}};
}

// Runs `body`, turning any escaping exception into a logged exit code.
template <typename F>
int guarded(const char* stage, std::ostream& log, F&& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    log << stage << " failed: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParameterError*>(&e) ||
      dynamic_cast<const SpecError*>(&e)) {
    return kConfigFailure;
  }
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const fs::filesystem_error*>(&e)) {
    return kIoFailure;
  }
  return kRuntimeFailure;
}

std::string metrics_line(const MetricsRecord& r) {
  ordered_json j{{"epoch", r.epoch},         {"class", r.class_id},       {"disc_loss", r.disc_loss},
                 {"gen_loss", r.gen_loss},   {"w_estimate", r.w_estimate}, {"wall_s", r.wall_s}};
  if (r.is_score) j["is"] = *r.is_score;
  if (r.fid) j["fid"] = *r.fid;
  return j.dump();
}

int cmd_train(const fs::path& config_path, std::ostream& log) {
  RunConfig config;
  if (int rc = guarded("config", log, [&] {
        config = load_config(config_path);
        return int{kOk};
      });
      rc != kOk) {
    return rc;
  }
  const auto problems = validate_config(config);
  if (!problems.empty()) {
    log << "config failed validation:\n";
    for (const auto& p : problems) log << "  " << p << "\n";
    return kConfigFailure;
  }

  std::vector<ClassShard> shards;
  if (int rc = guarded("data", log, [&] {
        shards = load_shards(config);
        return int{kOk};
      });
      rc != kOk) {
    return rc;
  }

  const fs::path out = config.output_dir;
  const fs::path ckpt_dir = out / "checkpoints";
  if (int rc = guarded("output", log, [&] {
        fs::create_directories(out);
        write_text(out / "resolved_config.ini", format_config(config));
        return int{kOk};
      });
      rc != kOk) {
    return rc;
  }

  const std::size_t report_every = std::max<std::size_t>(1, config.loop.epochs / 10);
  ParallelOptions opts;
  opts.workers = config.workers;
  opts.checkpoint_dir = ckpt_dir;
  opts.metrics_sink = [&](const MetricsRecord& r) {
    if ((r.epoch + 1) % report_every == 0 || r.epoch + 1 == config.loop.epochs) {
      log << "class " << r.class_id << " epoch " << r.epoch + 1 << "/" << config.loop.epochs
          << " w_estimate " << r.w_estimate << "\n";
    }
  };

  return guarded("training", log, [&] {
    const auto result = train_parallel(shards, pair_of(config), config.loop, opts);
    std::string metrics;
    for (const auto& r : result.metrics) metrics += metrics_line(r) + "\n";
    write_text(out / "metrics.jsonl", metrics);
    if (config.loop.summary_samples > 0) {
      std::string lines;
      for (const auto& run : result.runs) {
        for (std::size_t e = 0; e < run.epoch_summaries.size(); ++e) {
          lines += summary_json(run.checkpoint.label, e, run.epoch_summaries[e]).dump() + "\n";
        }
      }
      write_text(ckpt_dir / "summaries.jsonl", lines);
    }
    for (const auto& run : result.runs) {
      log << "class " << run.checkpoint.label << " done in " << run.wall_s << " s\n";
    }
    for (const auto& f : result.failures) log << "training failed for class " << f.label << ": " << f.message << "\n";
    return result.ok() ? int{kOk} : int{kRuntimeFailure};
  });
}

int cmd_generate(const GenerateArgs& args, std::ostream& log) {
  if (args.label < 0) {
    log << "generate failed: label must be >= 0\n";
    return kConfigFailure;
  }
  return guarded("generate", log, [&] {
    const auto checkpoint = load_checkpoint(checkpoint_path(args.checkpoints, args.label));
    if (checkpoint.label != args.label) {
      throw FormatError("checkpoint for class " + std::to_string(args.label) + " holds class " +
                        std::to_string(checkpoint.label));
    }
    fs::create_directories(args.out);
    if (args.count == 0) return int{kOk};
    const auto k = static_cast<std::size_t>(args.label);
    const auto drawn = sample_mixture(std::span(&checkpoint, 1), ClassPrior::point(k + 1, args.label), args.count,
                                      args.seed);
    const Shape& shape = drawn.samples.shape();
    const std::size_t per = shape_numel(shape) / args.count;
    if (shape.size() == 4) {
      const Shape image(shape.begin() + 1, shape.end());
      for (std::size_t i = 0; i < args.count; ++i) {
        std::vector<double> px(drawn.samples.data().begin() + static_cast<long>(i * per),
                               drawn.samples.data().begin() + static_cast<long>((i + 1) * per));
        std::ostringstream name;
        name << "class_" << args.label << "_" << i << ".ppm";
        write_ppm(Tensor(image, std::move(px)), args.out / name.str());
      }
      log << "wrote " << args.count << " images to " << args.out.string() << "\n";
    } else {
      std::string csv;
      for (std::size_t j = 0; j < per; ++j) csv += (j ? ",x" : "x") + std::to_string(j);
      csv += "\n";
      for (std::size_t i = 0; i < args.count; ++i) {
        for (std::size_t j = 0; j < per; ++j) csv += (j ? "," : "") + fmt(drawn.samples[i * per + j]);
        csv += "\n";
      }
      const auto path = args.out / ("class_" + std::to_string(args.label) + ".csv");
      write_text(path, csv);
      log << "wrote " << args.count << " samples to " << path.string() << "\n";
    }
    return int{kOk};
  });
}

std::vector<std::size_t> parse_count_list(const std::string& list) {
  std::vector<std::size_t> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || p != item.data() + item.size() || v == 0) {
      throw ConfigError("expected a comma-separated list of positive integers, got '" + list + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty class-count list");
  return out;
}

int cmd_scale_bench(const ScaleBenchArgs& args, std::ostream& log) {
  return guarded("scale-bench", log, [&] {
    if (args.classes.empty()) throw ConfigError("no class counts given");
    if (args.samples < 1 || args.epochs < 1) throw ConfigError("samples and epochs must be >= 1");
    LoopConfig loop;
    loop.epochs = args.epochs;
    loop.batch_size = std::min<std::size_t>(64, args.samples);
    loop.seed = args.seed;
    const ScalingWorkload work{args.samples, args.epochs};
    const auto report =
        weak_scaling_bench(args.classes, work, default_vector_pair(2, 8, CriticVariant::wasserstein), loop);

    std::string csv = "K,slowest_s,mean_s,std_s,efficiency\n";
    for (const auto& r : report.rows) {
      csv += std::to_string(r.classes) + "," + fmt(r.slowest_s) + "," + fmt(r.mean_s) + "," + fmt(r.std_s) + "," +
             fmt(r.efficiency) + "\n";
    }
    if (args.out.has_parent_path()) fs::create_directories(args.out.parent_path());
    write_text(args.out, csv);

    ordered_json machine{{"hardware_threads", report.hardware_threads},
                         {"compiler", __VERSION__},
                         {"samples_per_class", args.samples},
                         {"epochs", args.epochs},
                         {"seed", args.seed},
                         {"saturated", report.rows.back().classes > report.hardware_threads}};
    auto side = args.out;
    side.replace_extension(".machine.json");
    write_text(side, machine.dump(2) + "\n");
    for (const auto& r : report.rows) {
      log << "K=" << r.classes << " slowest " << r.slowest_s << " s, efficiency " << r.efficiency << "\n";
    }
    return int{kOk};
  });
}

}  // namespace wcgan::cli
