#include <benchmark/benchmark.h>

#include "headshare/engine.hpp"
#include "headshare/sharing.hpp"
#include "headshare/similarity.hpp"
#include "headshare/toy.hpp"

namespace {

headshare::ModelConfig bench_config() {
    headshare::ModelConfig cfg;
    cfg.num_layers = 4;
    cfg.heads_per_layer = 4;
    cfg.embed_dim = 32;
    cfg.head_dim_q = 8;
    cfg.head_dim_k = 8;
    cfg.head_dim_v = 8;
    cfg.ffn_dim = 64;
    cfg.vocab_size = 64;
    return cfg;
}

void BM_CandidateBuffer(benchmark::State& state) {
    const auto cfg = bench_config();
    const auto store = headshare::make_toy_store(cfg, 7);
    const auto threads = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(headshare::build_candidate_buffer(
            store, cfg, headshare::MatchFunction::QKConcat, threads));
    }
}
BENCHMARK(BM_CandidateBuffer)->Arg(1)->Arg(2);

void BM_MatchScore(benchmark::State& state) {
    const auto cfg = bench_config();
    const auto store = headshare::make_toy_store(cfg, 7);
    for (auto _ : state) {
        benchmark::DoNotOptimize(headshare::match_score(
            store, cfg, {1, 0}, {0, 1}, headshare::MatchFunction::QKConcat));
    }
}
BENCHMARK(BM_MatchScore);

void BM_Forward(benchmark::State& state) {
    const auto cfg = bench_config();
    const auto store = headshare::make_toy_store(cfg, 7);
    const auto corpus = headshare::make_toy_corpus(cfg, 8, 1, 16);
    for (auto _ : state) {
        benchmark::DoNotOptimize(headshare::forward(store, cfg, corpus[0]));
    }
}
BENCHMARK(BM_Forward);

void BM_Backward(benchmark::State& state) {
    const auto cfg = bench_config();
    const auto store = headshare::make_toy_store(cfg, 7);
    const auto corpus = headshare::make_toy_corpus(cfg, 8, 1, 17);
    headshare::TokenSequence input{{corpus[0].ids.begin(), corpus[0].ids.end() - 1}};
    headshare::TokenSequence target{{corpus[0].ids.begin() + 1, corpus[0].ids.end()}};
    for (auto _ : state) {
        benchmark::DoNotOptimize(headshare::backward(store, cfg, input, target));
    }
}
BENCHMARK(BM_Backward);

}  // namespace

BENCHMARK_MAIN();
