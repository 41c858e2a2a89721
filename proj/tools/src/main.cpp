#include <CLI11.hpp>
#include <iostream>

#include "wcgan/cli/commands.hpp"

using namespace wcgan::cli;

int main(int argc, char** argv) {
  CLI::App app{"Parallel conditional GAN training, one generator/critic pair per class"};
  app.require_subcommand(1);

  std::string config_path;
  auto* train = app.add_subcommand("train", "train one pair per class from an INI config");
  train->add_option("--config", config_path, "run config")->required();

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "sample from one class's generator");
  generate->add_option("--checkpoints", gen.checkpoints, "checkpoint directory")->required();
  generate->add_option("--label", gen.label, "class label")->required();
  generate->add_option("--count", gen.count, "number of samples")->required();
  generate->add_option("--out", gen.out, "output directory")->required();
  generate->add_option("--seed", gen.seed, "noise seed");

  EvaluateArgs eval;
  auto* evaluate = app.add_subcommand("evaluate", "score generators against the real data");
  evaluate->add_option("--checkpoints", eval.checkpoints, "checkpoint directory")->required();
  evaluate->add_option("--dataset", eval.dataset, "run config describing the real data")->required();
  evaluate->add_option("--metrics", eval.metrics, "comma-separated subset of is,fid,mode_coverage,cycling");
  evaluate->add_option("--out", eval.out, "report.json path")->required();
  evaluate->add_option("--samples", eval.samples, "generated samples per class");
  evaluate->add_option("--classifier-target", eval.classifier_target, "surrogate classifier validation accuracy");
  evaluate->add_option("--seed", eval.seed, "evaluation seed");

  ScaleBenchArgs bench;
  std::string class_list;
  auto* scale = app.add_subcommand("scale-bench", "weak-scaling benchmark on synthetic classes");
  scale->add_option("--classes", class_list, "class counts, e.g. 1,2,4")->required();
  scale->add_option("--samples", bench.samples, "samples per class");
  scale->add_option("--epochs", bench.epochs, "epochs per class");
  scale->add_option("--out", bench.out, "scaling.csv path")->required();
  scale->add_option("--seed", bench.seed, "data and init seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigFailure;
  }

  if (*train) return cmd_train(config_path, std::cerr);
  if (*generate) return cmd_generate(gen, std::cerr);
  if (*evaluate) return cmd_evaluate(eval, std::cerr);
  try {
    bench.classes = parse_count_list(class_list);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kConfigFailure;
  }
  return cmd_scale_bench(bench, std::cerr);
}
