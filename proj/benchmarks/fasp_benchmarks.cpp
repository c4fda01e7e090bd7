#include <benchmark/benchmark.h>

#include "fasp/head_scoring.hpp"
#include "fasp/model.hpp"
#include "fasp/numerics.hpp"
#include "fasp/pruning.hpp"
#include "fasp/rng.hpp"
#include "fasp/weights_io.hpp"

namespace {

using namespace fasp;

ModelConfig bench_config() {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads_per_layer = 4;
  c.d_model = 32;
  c.d_head = 8;
  c.d_ff = 64;
  c.vocab_size = 259;
  c.max_seq_len = 128;
  return c;
}

std::vector<TokenId> tokens(std::size_t n) {
  RngCursor rng(3, 0);
  std::vector<TokenId> t(n);
  for (auto& id : t) id = static_cast<TokenId>(rng.below(259));
  return t;
}

TensorF32 random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  RngCursor rng(seed, 0);
  std::vector<float> v(r * c);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return TensorF32({r, c}, std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1);
  const auto b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(128)->Arg(256);

void BM_Forward(benchmark::State& state) {
  const auto cfg = bench_config();
  const auto w = make_toy_model(cfg, 1);
  const auto mask = HeadGateMask::all_present(cfg.n_heads());
  const auto t = tokens(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(forward_logits(cfg, w, mask, t));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(128);

void BM_Perplexity(benchmark::State& state) {
  const auto cfg = bench_config();
  const auto w = make_toy_model(cfg, 1);
  const auto mask = HeadGateMask::all_present(cfg.n_heads());
  const auto t = tokens(512);
  for (auto _ : state) benchmark::DoNotOptimize(perplexity(cfg, w, mask, t, 128));
}
BENCHMARK(BM_Perplexity);

void BM_PlanFasp(benchmark::State& state) {
  const int n_layers = static_cast<int>(state.range(0));
  HeadScoreTable table;
  table.n_layers = n_layers;
  table.n_heads_per_layer = 12;
  RngCursor rng(5, 0);
  for (int i = 0; i < n_layers * 12; ++i) {
    HeadScore s;
    s.head = HeadId::from_flat(i, 12);
    s.z_ppl = rng.normal();
    s.z_bias["cat"] = rng.normal();
    table.scores.push_back(s);
  }
  for (auto _ : state) benchmark::DoNotOptimize(plan_fasp(table, "cat", 0.3, 0.2));
}
BENCHMARK(BM_PlanFasp)->Arg(6)->Arg(48);

}  // namespace
BENCHMARK_MAIN();
