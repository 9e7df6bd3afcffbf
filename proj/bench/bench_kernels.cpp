// Serial references against the OpenMP / CLMUL kernels.
//   ./bench_kernels --benchmark_filter=Extract

#include <random>

#include <benchmark/benchmark.h>
#include <omp.h>

#include "qrng/dsp.hpp"
#include "qrng/extractor.hpp"
#include "qrng/signal_model.hpp"
#include "qrng/stattests.hpp"

using namespace qrng;

namespace {

BitVector random_bits(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  BitVector v(n);
  for (std::size_t i = 0; i < n; ++i) v.set(i, rng() & 1U);
  return v;
}

extractor::ExtractorParams default_params() {
  auto p = extractor::size_extractor(10.106, 16, 1e-17, 17600);
  p.seed = extractor::derive_seed(1, p.seed_bits());
  return p;
}

const signal::SampleBlock& raw_block() {
  static const auto b = [] {
    signal::SourceParams p;
    p.lo_power_w = 20e-3;
    return signal::generate_block(p, 1 << 20);
  }();
  return b;
}

void set_output_rate(benchmark::State& state, std::size_t bits_per_iter) {
  state.counters["bits/s"] =
      benchmark::Counter(static_cast<double>(bits_per_iter), benchmark::Counter::kIsIterationInvariantRate);
}

}  // namespace

static void BM_ExtractNaive(benchmark::State& state) {
  const auto p = default_params();
  const auto x = random_bits(p.input_bits, 2);
  for (auto _ : state) benchmark::DoNotOptimize(extractor::extract_naive(x, p.seed, p.output_bits));
  set_output_rate(state, p.output_bits);
}
BENCHMARK(BM_ExtractNaive)->Unit(benchmark::kMillisecond);

static void BM_ExtractPortable(benchmark::State& state) {
  const auto p = default_params();
  const extractor::Toeplitz t(p, extractor::Kernel::kPortable);
  const auto x = random_bits(p.input_bits, 2);
  for (auto _ : state) benchmark::DoNotOptimize(t.extract(x));
  set_output_rate(state, p.output_bits);
}
BENCHMARK(BM_ExtractPortable)->Unit(benchmark::kMicrosecond);

static void BM_ExtractClmul(benchmark::State& state) {
  if (!extractor::cpu_has_clmul()) {
    state.SkipWithError("no carry-less multiply on this CPU");
    return;
  }
  const auto p = default_params();
  const extractor::Toeplitz t(p, extractor::Kernel::kClmul);
  const auto x = random_bits(p.input_bits, 2);
  for (auto _ : state) benchmark::DoNotOptimize(t.extract(x));
  set_output_rate(state, p.output_bits);
}
BENCHMARK(BM_ExtractClmul)->Unit(benchmark::kMicrosecond);

// Many blocks; argument is the OpenMP thread count.
static void BM_ExtractBlocks(benchmark::State& state) {
  omp_set_num_threads(static_cast<int>(state.range(0)));
  const auto p = default_params();
  const extractor::Toeplitz t(p);
  const std::size_t blocks = 256;
  const auto x = random_bits(p.input_bits * blocks, 3);
  for (auto _ : state) benchmark::DoNotOptimize(t.extract_blocks(x, blocks));
  set_output_rate(state, p.output_bits * blocks);
}
BENCHMARK(BM_ExtractBlocks)->Arg(1)->Arg(omp_get_num_procs())->Unit(benchmark::kMillisecond);

static void BM_ConditionReference(benchmark::State& state) {
  const auto& b = raw_block();
  for (auto _ : state) {
    dsp::ReferenceConditioner c(dsp::DspConfig{}, b.sample_rate_hz);
    benchmark::DoNotOptimize(c.process(b));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(b.size()));
}
BENCHMARK(BM_ConditionReference)->Unit(benchmark::kMillisecond);

static void BM_ConditionFused(benchmark::State& state) {
  omp_set_num_threads(static_cast<int>(state.range(0)));
  const auto& b = raw_block();
  for (auto _ : state) {
    dsp::Conditioner c(dsp::DspConfig{}, b.sample_rate_hz);
    benchmark::DoNotOptimize(c.process(b));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(b.size()));
}
BENCHMARK(BM_ConditionFused)->Arg(1)->Arg(omp_get_num_procs())->Unit(benchmark::kMillisecond);

static void BM_PsdReference(benchmark::State& state) {
  const auto v = dsp::codes_to_volts(raw_block().channel_q, raw_block().lsb_volts());
  for (auto _ : state) benchmark::DoNotOptimize(dsp::estimate_psd_reference(v, 25e9, 4096, 2048));
}
BENCHMARK(BM_PsdReference)->Unit(benchmark::kMillisecond);

static void BM_PsdParallel(benchmark::State& state) {
  omp_set_num_threads(static_cast<int>(state.range(0)));
  const auto v = dsp::codes_to_volts(raw_block().channel_q, raw_block().lsb_volts());
  for (auto _ : state) benchmark::DoNotOptimize(dsp::estimate_psd(v, 25e9, 4096, 2048));
}
BENCHMARK(BM_PsdParallel)->Arg(1)->Arg(omp_get_num_procs())->Unit(benchmark::kMillisecond);

static void BM_GenerateSamples(benchmark::State& state) {
  omp_set_num_threads(static_cast<int>(state.range(0)));
  signal::SourceParams p;
  p.lo_power_w = 20e-3;
  signal::SampleSource src(p);
  for (auto _ : state) benchmark::DoNotOptimize(src.next(1 << 20));
  state.SetItemsProcessed(state.iterations() * (1 << 20));
}
BENCHMARK(BM_GenerateSamples)->Arg(1)->Arg(omp_get_num_procs())->Unit(benchmark::kMillisecond);

static void BM_Battery(benchmark::State& state) {
  const auto bits = random_bits(4'000'000, 5);
  stattests::BatteryConfig cfg;
  cfg.parallel = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(stattests::run_battery(bits, cfg));
}
BENCHMARK(BM_Battery)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
