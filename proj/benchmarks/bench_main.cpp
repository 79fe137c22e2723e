#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "embkit/encoder.hpp"
#include "embkit/miner.hpp"
#include "embkit/objective.hpp"
#include "embkit/similarity.hpp"

namespace {

using namespace embkit;

std::string make_text(std::mt19937_64& rng, size_t words) {
  static const char* pool[] = {"signal", "filter", "quartz", "harbor", "sketch", "lumen",
                               "gravel", "copper", "meadow", "drift",  "saddle", "prism"};
  std::string text;
  for (size_t i = 0; i < words; ++i) {
    text += pool[rng() % 12];
    text += ' ';
  }
  return text;
}

void BM_Tokenize(benchmark::State& state) {
  EncoderConfig cfg;
  std::mt19937_64 rng(1);
  const std::string text = make_text(rng, static_cast<size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(tokenize(text, cfg));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Tokenize)->Arg(16)->Arg(128)->Arg(1024);

void BM_Encode(benchmark::State& state) {
  EncoderConfig cfg;
  cfg.buckets = 65536;
  cfg.dim = static_cast<uint32_t>(state.range(0));
  const EncoderParams params = init_params(cfg);
  std::mt19937_64 rng(2);
  const std::string text = make_text(rng, 32);
  for (auto _ : state) {
    benchmark::DoNotOptimize(encode(text, params, cfg));
  }
}
BENCHMARK(BM_Encode)->Arg(16)->Arg(64)->Arg(128);

void BM_EncodeBackward(benchmark::State& state) {
  EncoderConfig cfg;
  cfg.buckets = 65536;
  cfg.dim = 64;
  const EncoderParams params = init_params(cfg);
  std::mt19937_64 rng(3);
  const std::string text = make_text(rng, 32);
  const std::vector<double> grad(cfg.dim, 0.01);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(encode(text, params, cfg, tape));
    GradBuffer grads(cfg);
    backward(tape, grad, params, cfg, grads);
    benchmark::DoNotOptimize(grads);
  }
}
BENCHMARK(BM_EncodeBackward);

void BM_HardNegativeLoss(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> score(-1.0, 1.0);
  SimilarityRow row;
  row.pos_score = score(rng);
  for (int i = 0; i < state.range(0); ++i) row.neg_scores.push_back(score(rng));
  for (auto _ : state) {
    benchmark::DoNotOptimize(hard_negative_loss(row));
  }
}
BENCHMARK(BM_HardNegativeLoss)->Arg(7)->Arg(24);

void BM_TopK(benchmark::State& state) {
  const size_t n = static_cast<size_t>(state.range(0));
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::string> ids;
  std::vector<Embedding> rows;
  for (size_t i = 0; i < n; ++i) {
    Embedding v(64);
    for (double& x : v) x = normal(rng);
    l2_normalize(v);
    ids.push_back("p" + std::to_string(i));
    rows.push_back(std::move(v));
  }
  const EmbeddingMatrix corpus = EmbeddingMatrix::from_rows(ids, rows);
  Embedding query(64);
  for (double& x : query) x = normal(rng);
  l2_normalize(query);
  for (auto _ : state) {
    benchmark::DoNotOptimize(top_k(query, corpus, 100));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_TopK)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
