// Microbenchmarks for the numeric hot paths: dense algebra, the tape-backed
// training step, temporal pooling, frame sharpness, and caption scoring.
// Run with --benchmark_min_time=... to tighten timing noise.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "lim/alignment.hpp"
#include "lim/confidence.hpp"
#include "lim/datapipe.hpp"
#include "lim/pooling.hpp"
#include "lim/rng.hpp"
#include "lim/tensor.hpp"

namespace {

lim::Tensor random_matrix(lim::Rng& rng, std::size_t rows, std::size_t cols) {
  lim::Tensor t({rows, cols});
  for (double& v : t.data()) v = rng.normal();
  return t;
}

lim::AlignmentConfig bench_model_config() {
  lim::AlignmentConfig cfg;
  cfg.vision_width = 32;
  cfg.text_width = 32;
  cfg.proj_dim = 32;
  cfg.depth = 2;
  cfg.lora_rank = 8;
  cfg.lora_alpha = 16.0;
  cfg.frame_width = 32;
  cfg.patch_count = 4;
  cfg.vocab = 256;
  return cfg;
}

std::vector<lim::TrainSample> bench_samples(const lim::AlignmentConfig& cfg,
                                            std::size_t count) {
  lim::Rng rng(17);
  std::vector<lim::TrainSample> samples;
  for (std::size_t i = 0; i < count; ++i) {
    lim::TrainSample s;
    s.clip_id = "bench_" + std::to_string(i);
    s.frames = random_matrix(rng, 8, static_cast<std::size_t>(cfg.frame_width));
    std::vector<int> content;
    for (int k = 0; k < 8; ++k) {
      content.push_back(lim::kFirstWordTokenId +
                        static_cast<int>(rng.integer(static_cast<std::uint64_t>(
                            cfg.vocab - lim::kFirstWordTokenId))));
    }
    s.tokens = lim::TokenSequence::from_content(std::move(content));
    s.confidence = 0.5 + 0.5 * rng.uniform();
    samples.push_back(std::move(s));
  }
  return samples;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  lim::Rng rng(1);
  const lim::Tensor a = random_matrix(rng, n, n);
  const lim::Tensor b = random_matrix(rng, n, n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(lim::matmul(a, b));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(128);

void BM_TrainStep(benchmark::State& state) {
  const lim::AlignmentConfig cfg = bench_model_config();
  lim::AlignmentModel model = lim::make_alignment_model(cfg, 3);
  const std::vector<lim::TrainSample> samples =
      bench_samples(cfg, static_cast<std::size_t>(state.range(0)));
  std::vector<const lim::TrainSample*> batch;
  for (const lim::TrainSample& s : samples) batch.push_back(&s);
  lim::AdamW optimizer(lim::AdamWConfig{}, lim::trainable_params(model));
  const lim::TrainStepOptions options;
  for (auto _ : state) {
    benchmark::DoNotOptimize(lim::train_step(model, batch, optimizer, options));
  }
}
BENCHMARK(BM_TrainStep)->Arg(4)->Arg(16);

void BM_EmbedClip(benchmark::State& state) {
  const lim::AlignmentConfig cfg = bench_model_config();
  const lim::AlignmentModel model = lim::make_alignment_model(cfg, 3);
  lim::Rng rng(5);
  const lim::Tensor frames = random_matrix(rng, 8, static_cast<std::size_t>(cfg.frame_width));
  for (auto _ : state) {
    benchmark::DoNotOptimize(lim::embed_clip(model, frames));
  }
}
BENCHMARK(BM_EmbedClip);

void BM_TemporalPool(benchmark::State& state) {
  const auto frames = static_cast<std::size_t>(state.range(0));
  const lim::TemporalPooler pooler = lim::make_temporal_pooler(64, 9);
  lim::Rng rng(2);
  const lim::Tensor features = random_matrix(rng, frames, 64);
  for (auto _ : state) {
    benchmark::DoNotOptimize(lim::pool(pooler, features));
  }
}
BENCHMARK(BM_TemporalPool)->Arg(8)->Arg(64);

void BM_LaplacianSharpness(benchmark::State& state) {
  lim::Rng rng(4);
  lim::Frame frame(832, 480, 1);
  for (auto& px : frame.pixels) px = static_cast<std::uint8_t>(rng.integer(256));
  for (auto _ : state) {
    benchmark::DoNotOptimize(lim::laplacian_sharpness(frame));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(frame.pixels.size()));
}
BENCHMARK(BM_LaplacianSharpness);

void BM_StandardizeFrame(benchmark::State& state) {
  lim::Rng rng(6);
  lim::Frame frame(1920, 1080, 1);
  for (auto& px : frame.pixels) px = static_cast<std::uint8_t>(rng.integer(256));
  for (auto _ : state) {
    benchmark::DoNotOptimize(lim::standardize_frame(frame, 832, 480));
  }
}
BENCHMARK(BM_StandardizeFrame);

void BM_ConfidenceScore(benchmark::State& state) {
  const int vocab = 256;
  lim::Rng rng(8);
  std::vector<lim::TokenSequence> corpus;
  for (int i = 0; i < 200; ++i) {
    std::vector<int> content;
    for (int k = 0; k < 12; ++k) {
      content.push_back(lim::kFirstWordTokenId +
                        static_cast<int>(rng.integer(vocab - lim::kFirstWordTokenId)));
    }
    corpus.push_back(lim::TokenSequence::from_content(std::move(content)));
  }
  const lim::ToyCountScorer scorer = lim::fit_toy_scorer(corpus, vocab);
  const lim::TokenSequence sentence = corpus.front();
  for (auto _ : state) {
    benchmark::DoNotOptimize(lim::confidence_score(sentence, scorer));
  }
}
BENCHMARK(BM_ConfidenceScore);

}  // namespace

BENCHMARK_MAIN();
