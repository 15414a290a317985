#include <random>

#include <benchmark/benchmark.h>

#include "omni/ctc.hpp"
#include "omni/decoder.hpp"
#include "omni/llm.hpp"
#include "omni/pipeline.hpp"
#include "omni/units.hpp"

namespace {

using namespace omni;

FeatureMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureMatrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m.at(r, c) = n(rng);
  return m;
}

UnitSequence random_units(std::size_t len, std::size_t vocab, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> raw(len);
  for (auto& u : raw) u = rng() % vocab;
  return UnitSequence(raw, vocab);
}

void BM_CtcForward(benchmark::State& state) {
  const auto frames = static_cast<std::size_t>(state.range(0));
  const std::size_t vocab = 32;
  const FeatureMatrix logits = random_matrix(frames, vocab + 1, 1);
  const UnitSequence target = random_units(frames / 4, vocab, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ctc_neg_log_likelihood(logits, target));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * frames));
}
BENCHMARK(BM_CtcForward)->Arg(64)->Arg(256)->Arg(1024);

void BM_CtcForwardBackward(benchmark::State& state) {
  const auto frames = static_cast<std::size_t>(state.range(0));
  const std::size_t vocab = 32;
  const FeatureMatrix logits = random_matrix(frames, vocab + 1, 1);
  const UnitSequence target = random_units(frames / 4, vocab, 2);
  FeatureMatrix grad;
  for (auto _ : state) benchmark::DoNotOptimize(ctc_neg_log_likelihood(logits, target, &grad));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * frames));
}
BENCHMARK(BM_CtcForwardBackward)->Arg(64)->Arg(256)->Arg(1024);

DecoderConfig bench_decoder_config() {
  DecoderConfig cfg;
  cfg.unit_vocab = 16;
  cfg.transformer.model_dim = 64;
  cfg.transformer.heads = 4;
  cfg.transformer.ffn_dim = 176;
  cfg.transformer.layers = 2;
  return cfg;
}

// Per-token incremental decoding over a whole response.
void BM_DecoderExtend(benchmark::State& state) {
  const auto tokens = static_cast<std::size_t>(state.range(0));
  const DecoderConfig cfg = bench_decoder_config();
  const DecoderParams params = DecoderParams::init(cfg, 3);
  const FeatureMatrix hidden = random_matrix(tokens, cfg.transformer.model_dim, 4);
  for (auto _ : state) {
    DecoderState st(cfg, params);
    for (std::size_t i = 0; i < tokens; ++i) benchmark::DoNotOptimize(decode_extend(st, hidden.row(i), params));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * tokens));
}
BENCHMARK(BM_DecoderExtend)->Arg(8)->Arg(32)->Arg(64);

// Re-decoding the full prefix after every token, the non-streaming alternative.
void BM_DecoderFullPerPrefix(benchmark::State& state) {
  const auto tokens = static_cast<std::size_t>(state.range(0));
  const DecoderConfig cfg = bench_decoder_config();
  const DecoderParams params = DecoderParams::init(cfg, 3);
  const FeatureMatrix hidden = random_matrix(tokens, cfg.transformer.model_dim, 4);
  for (auto _ : state) {
    for (std::size_t i = 1; i <= tokens; ++i)
      benchmark::DoNotOptimize(decode_full(to_tensor(hidden.slice_rows(0, i)), cfg, params));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * tokens));
}
BENCHMARK(BM_DecoderFullPerPrefix)->Arg(8)->Arg(32)->Arg(64);

void BM_RunStream(benchmark::State& state) {
  const std::size_t words = 64, lambda = 4, vocab = 16, dim = 8;
  Tokenizer tok;
  Script s;
  std::mt19937_64 rng(5);
  for (std::size_t i = 0; i < words; ++i) {
    s.tokens.push_back(Tokenizer::kFirstByte + 'a' + rng() % 26);
    std::vector<int> block(lambda);
    for (auto& b : block) b = rng() % 3 == 0 ? -1 : static_cast<int>(rng() % vocab);
    s.alignments.push_back(block);
  }
  s.tokens.push_back(Tokenizer::kEos);
  s.alignments.push_back(std::vector<int>(lambda, -1));
  s.hidden = random_matrix(words + 1, dim, 6);
  s.unit_vocab = vocab;
  StreamConfig cfg;
  cfg.omega = state.range(0) ? Omega(static_cast<std::size_t>(state.range(0))) : Omega::infinite();
  for (auto _ : state) {
    ScriptedGenerator g(s, tok);
    ScriptedAlignmentDecoder d(s.alignment_blocks(), lambda, vocab, dim);
    MockVocoder voc;
    benchmark::DoNotOptimize(run_stream(FeatureMatrix(1, 1), "bench", {g, d, voc}, cfg));
  }
}
BENCHMARK(BM_RunStream)->Arg(1)->Arg(10)->Arg(0);

void BM_KMeans(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const FeatureMatrix pts = random_matrix(n, 16, 7);
  for (auto _ : state) benchmark::DoNotOptimize(kmeans_fit(pts, 16, 1, 20));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_KMeans)->Arg(256)->Arg(2048);

}  // namespace
BENCHMARK_MAIN();
