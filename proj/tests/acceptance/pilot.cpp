// Pilot runs behind the committed golden logs in tests/golden/. Not part of
// the test suite; rerun by hand when the experiment configuration changes.
//
//   wcgan_pilot coverage <seed_begin> <seed_end>   both variants, per-class table
//   wcgan_pilot twopoint <seed_begin> <seed_end>   two-point critic estimate decay

#include <CLI11.hpp>
#include <cstdio>

#include "mixture_setup.hpp"

using namespace wcgan;
namespace acc = wcgan::acceptance;

namespace {

void coverage_run(CriticVariant variant, std::uint64_t seed) {
  const auto spec = acc::mixture(seed);
  const auto shards = synth_conditional_mixture(spec, acc::kSamplesPerClass);
  const auto result = train_parallel(shards, acc::pair(variant), acc::loop(variant, seed));
  std::vector<acc::ClassOutcome> outcomes;
  double slowest = 0.0;
  for (const auto& run : result.runs) {
    outcomes.push_back(acc::assess(run.checkpoint, spec));
    slowest = std::max(slowest, run.wall_s);
    const auto& o = outcomes.back();
    std::printf("  %-11s seed %2llu class %d  gen_steps %5llu  coverage %.4f %.4f  truth_fd %.5f\n",
                to_string(variant).c_str(), static_cast<unsigned long long>(seed), o.label,
                static_cast<unsigned long long>(o.generator_steps), o.coverage[0], o.coverage[1], o.truth_fd);
  }
  std::printf("%-11s seed %2llu worst %.4f  slowest class %.1f s\n", to_string(variant).c_str(),
              static_cast<unsigned long long>(seed), acc::worst_coverage(outcomes), slowest);
  std::fflush(stdout);
}

ClassShard two_point_shard() {
  std::vector<double> v;
  for (int i = 0; i < 256; ++i) v.push_back(i % 2 ? 0.5 : -0.5);
  return {0, Tensor({256, 1}, v), Normalization::identity()};
}

void two_point_run(std::uint64_t seed) {
  LoopConfig cfg;
  cfg.seed = seed;
  cfg.batch_size = 64;
  cfg.epochs = 2500;
  auto state = TrainingState::create(mlp_generator_spec(4, 1, 16, 1),
                                     mlp_discriminator_spec(1, 16, 1, CriticVariant::wasserstein), cfg,
                                     derive_seed(seed, "gen"), derive_seed(seed, "disc"));
  const auto r = train_pair(std::move(state), two_point_shard());
  double peak = 0.0;
  std::size_t at = 0;
  for (std::size_t e = 0; e < 250; ++e) {
    if (r.metrics[e].w_estimate > peak) peak = r.metrics[e].w_estimate, at = e;
  }
  double late = 0.0;
  for (std::size_t e = 2450; e < 2500; ++e) late += r.metrics[e].w_estimate / 50.0;
  std::printf("seed %llu  gen_steps %llu  peak %.4e (epoch %zu)  last-50 mean %.4e  ratio %.3f\n",
              static_cast<unsigned long long>(seed), static_cast<unsigned long long>(r.state.t_gen), peak, at, late,
              late / peak);
  for (std::size_t e = 0; e < 2500; e += 250) std::printf("  epoch %4zu  w_estimate %.4e\n", e, r.metrics[e].w_estimate);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pilot runs for the golden logs"};
  std::string mode;
  std::uint64_t begin = 0, end = 1;
  app.add_option("mode", mode)->required()->check(CLI::IsMember({"coverage", "twopoint"}));
  app.add_option("seed_begin", begin);
  app.add_option("seed_end", end);
  CLI11_PARSE(app, argc, argv);

  for (std::uint64_t s = begin; s < end; ++s) {
    if (mode == "twopoint") {
      two_point_run(s);
    } else {
      coverage_run(CriticVariant::wasserstein, s);
      coverage_run(CriticVariant::dc, s);
    }
  }
  return 0;
}
