#include <benchmark/benchmark.h>

#include "realface/attack.hpp"
#include "realface/model_io.hpp"
#include "realface/rng.hpp"

namespace rf = realface;

namespace {

const rf::TrainingCorpus& corpus() {
  static const auto c = rf::generate_synthetic_corpus(7, 256, rf::canonical_modes(), 1.5);
  return c;
}

const rf::FittedModel& model() {
  static const auto m = rf::fit_model(corpus());
  return m;
}

std::vector<rf::GalleryEntry> population(std::size_t size) {
  rf::PopulationModel pop;
  pop.pixel_sigma = 0.11;
  return rf::generate_synthetic_gallery(11, 256, size, std::nullopt, 0.0, pop);
}

}  // namespace

static void BM_FitModel(benchmark::State& state) {
  const auto c = rf::generate_synthetic_corpus(7, state.range(0), rf::canonical_modes(), 1.5);
  for (auto _ : state) benchmark::DoNotOptimize(rf::fit_model(c));
}
BENCHMARK(BM_FitModel)->Arg(256)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);

static void BM_Synthesize(benchmark::State& state) {
  const rf::Synthesizer synth(model().basis, model().attacker_residual);
  const auto box = rf::BoundBox::defaults_for(model().basis);
  const auto p = rf::random_params(3, box);
  for (auto _ : state) benchmark::DoNotOptimize(synth(rf::ParamVector{p.semantic, 0.0}));
}
BENCHMARK(BM_Synthesize);

static void BM_Match(benchmark::State& state) {
  const auto entries = population(static_cast<std::size_t>(state.range(0)));
  const auto gallery = rf::enroll(entries, rf::EmbeddingSpec::raw());
  const Eigen::VectorXd probe = entries.front().face.data;
  for (auto _ : state) benchmark::DoNotOptimize(rf::match(gallery, probe, rf::Metric::euclidean));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Match)->RangeMultiplier(4)->Range(16, 1024);

static void BM_MinimizeQuadratic(benchmark::State& state) {
  const Eigen::Index k = state.range(0);
  const rf::Box box{Eigen::VectorXd::Constant(k, -0.5), Eigen::VectorXd::Constant(k, 0.45)};
  const Eigen::VectorXd target = Eigen::VectorXd::LinSpaced(k, -0.8, 0.8);
  rf::OptimizerConfig cfg;
  cfg.max_evals = 2000;
  for (auto _ : state) {
    rf::Objective f([&](const Eigen::VectorXd& p) { return (p - target).squaredNorm(); }, k);
    benchmark::DoNotOptimize(rf::minimize(f, Eigen::VectorXd::Zero(k), box, cfg));
  }
}
BENCHMARK(BM_MinimizeQuadratic)->DenseRange(2, 6, 2);

static void BM_BreakInAttack(benchmark::State& state) {
  const rf::Synthesizer synth(model().basis, model().attacker_residual);
  const auto box = rf::BoundBox::defaults_for(model().basis);
  const auto gallery = rf::enroll(population(static_cast<std::size_t>(state.range(0))), rf::EmbeddingSpec::raw());
  rf::BuiltinOracle oracle(gallery, rf::Metric::euclidean);
  rf::AttackSpec spec;
  spec.policy = {rf::Polarity::distance, 0.0};  // unreachable: always spends the full budget
  spec.optimizer.max_evals = 400;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    spec.seed = seed++;
    rf::AttackContext ctx{&synth, box, &oracle, {}, {}};
    benchmark::DoNotOptimize(rf::run_attack(spec, ctx));
  }
}
BENCHMARK(BM_BreakInAttack)->Arg(50)->Arg(330)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
