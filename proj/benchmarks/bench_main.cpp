#include <benchmark/benchmark.h>

#include "pace/engine.hpp"
#include "pace/harness.hpp"
#include "pace/similarity.hpp"

using namespace pace;

namespace {

const std::shared_ptr<const Fixture>& fixture() {
  static const auto fx = make_fixture(generate_synthetic_graph(GraphGenParams{}));
  return fx;
}

void BM_GenerateGraph(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(generate_synthetic_graph(GraphGenParams{}));
}
BENCHMARK(BM_GenerateGraph)->Unit(benchmark::kMillisecond);

void BM_BuildIndex(benchmark::State& state) {
  const SkillGraph& g = fixture()->graph;
  const auto emb = embed_skills(g, HashingEmbeddingProvider{});
  for (auto _ : state) benchmark::DoNotOptimize(build_index(g, emb));
}
BENCHMARK(BM_BuildIndex)->Unit(benchmark::kMillisecond);

void BM_Recommend(benchmark::State& state) {
  CurriculumEngine engine(fixture(), EngineOptions{});
  engine.begin_session(20, Timestamp{0.0});
  Rng rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(engine.recommend(static_cast<std::size_t>(state.range(0)), Timestamp{0.0}, rng));
}
BENCHMARK(BM_Recommend)->Arg(1)->Arg(5)->Unit(benchmark::kMicrosecond);

void BM_IngestScenario(benchmark::State& state) {
  const auto& fx = fixture();
  CurriculumEngine engine(fx, EngineOptions{});
  engine.begin_session(1, Timestamp{0.0});
  std::vector<Observation> obs;
  for (const SkillIndex s : fx->table.activated(0)) obs.push_back({s, Outcome::partial, ErrorType::slip, false, {}});
  for (auto _ : state) benchmark::DoNotOptimize(engine.ingest(0, obs, ContextVector::Constant(0.1), Timestamp{0.0}));
}
BENCHMARK(BM_IngestScenario)->Unit(benchmark::kMicrosecond);

void BM_TraineeRun(benchmark::State& state) {
  ExperimentConfig c;
  c.archetypes = {ArchetypeName::moderate};
  c.trainees_per_archetype = 1;
  c.threads = 1;
  for (auto _ : state) benchmark::DoNotOptimize(run_training(c, fixture()));
}
BENCHMARK(BM_TraineeRun)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
