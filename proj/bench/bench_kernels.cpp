// Parallel kernels against the serial reference, plus one full training gradient.
// Run: build/bench/bench_kernels [--benchmark_filter=...]; OMP_NUM_THREADS sets the thread count.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dsft/corpus.hpp"
#include "dsft/kernels.hpp"
#include "dsft/trainer.hpp"

namespace k = dsft::kernels;
namespace ref = dsft::kernels::reference;

namespace {

std::vector<float> random_vec(std::size_t n, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(gen);
  return v;
}

// Shapes of one layer of the default denoiser on a 64-token sequence.
constexpr int kL = 64, kC = 128, kH = 4, kF = 512;

template <bool Parallel>
void BM_MatmulForward(benchmark::State& state) {
  const auto inp = random_vec(kL * kC, 1), w = random_vec(kC * kF, 2), b = random_vec(kF, 3);
  std::vector<float> out(kL * kF);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::matmul_forward(out.data(), inp.data(), w.data(), b.data(), kL, kC, kF);
    } else {
      ref::matmul_forward(out.data(), inp.data(), w.data(), b.data(), kL, kC, kF);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * kL * kC * kF);
}

template <bool Parallel>
void BM_MatmulBackward(benchmark::State& state) {
  const auto inp = random_vec(kL * kC, 1), w = random_vec(kC * kF, 2), dout = random_vec(kL * kF, 3);
  std::vector<float> dinp(kL * kC), dw(kC * kF), db(kF);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::matmul_backward(dinp.data(), dw.data(), db.data(), dout.data(), inp.data(), w.data(), kL, kC, kF);
    } else {
      ref::matmul_backward(dinp.data(), dw.data(), db.data(), dout.data(), inp.data(), w.data(), kL, kC, kF);
    }
    benchmark::DoNotOptimize(dw.data());
  }
  state.SetItemsProcessed(state.iterations() * 4LL * kL * kC * kF);
}

template <bool Parallel>
void BM_AttentionForward(benchmark::State& state) {
  const auto qkv = random_vec(kL * 3 * kC, 4);
  std::vector<float> out(kL * kC), att(kH * kL * kL);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::attention_forward(out.data(), att.data(), qkv.data(), kL, kC, kH);
    } else {
      ref::attention_forward(out.data(), att.data(), qkv.data(), kL, kC, kH);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_AttentionBackward(benchmark::State& state) {
  const auto qkv = random_vec(kL * 3 * kC, 4), dout = random_vec(kL * kC, 5);
  std::vector<float> out(kL * kC), att(kH * kL * kL), dqkv(kL * 3 * kC), scratch(kH * kL * kL);
  ref::attention_forward(out.data(), att.data(), qkv.data(), kL, kC, kH);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::attention_backward(dqkv.data(), scratch.data(), dout.data(), qkv.data(), att.data(), kL, kC, kH);
    } else {
      ref::attention_backward(dqkv.data(), scratch.data(), dout.data(), qkv.data(), att.data(), kL, kC, kH);
    }
    benchmark::DoNotOptimize(dqkv.data());
  }
}

template <bool Parallel>
void BM_Gelu(benchmark::State& state) {
  const auto inp = random_vec(kL * kF, 6);
  std::vector<float> out(kL * kF);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::gelu_forward(out.data(), inp.data(), kL * kF);
    } else {
      ref::gelu_forward(out.data(), inp.data(), kL * kF);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * kL * kF);
}

template <bool Parallel>
void BM_LayerNorm(benchmark::State& state) {
  const auto inp = random_vec(kL * kC, 7), g = random_vec(kC, 8), b = random_vec(kC, 9);
  std::vector<float> out(kL * kC), mean(kL), rstd(kL);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::layernorm_forward(out.data(), mean.data(), rstd.data(), inp.data(), g.data(), b.data(), kL, kC);
    } else {
      ref::layernorm_forward(out.data(), mean.data(), rstd.data(), inp.data(), g.data(), b.data(), kL, kC);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

// Forward and backward for a 16-sequence batch (d=64, 2 layers).
void BM_BatchGradient(benchmark::State& state) {
  const auto backend = state.range(0) == 0 ? dsft::Backend::Reference : dsft::Backend::Parallel;
  dsft::GeneratorSpec spec;
  spec.count = 16;
  const auto records = dsft::generate_corpus(spec, 1);
  const auto texts = dsft::corpus_texts(records);
  const auto vocab = dsft::Vocabulary::build(texts);
  const auto seqs = dsft::tokenize_corpus(records, vocab);
  dsft::ModelConfig m;
  m.layers = 2;
  m.heads = 4;
  m.d_model = 64;
  m.d_ff = 256;
  m.max_len = 128;
  m.vocab_size = vocab.size();
  const auto params = dsft::init_params(m, 1);
  dsft::MaskConfig mask;
  std::vector<dsft::Example> batch;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    batch.push_back({&seqs[i], dsft::compose_mask_plan(seqs[i], mask, 0, dsft::plan_stream(1, i, 0))});
  }
  for (auto _ : state) {
    auto g = dsft::compute_gradient<float>(params, batch, dsft::Objective::Weighted, 2.0, dsft::LossReduction::Mean, 1,
                                           backend);
    benchmark::DoNotOptimize(g.grad.data());
  }
}

}  // namespace

BENCHMARK(BM_MatmulForward<false>)->Name("matmul_forward/reference");
BENCHMARK(BM_MatmulForward<true>)->Name("matmul_forward/parallel");
BENCHMARK(BM_MatmulBackward<false>)->Name("matmul_backward/reference");
BENCHMARK(BM_MatmulBackward<true>)->Name("matmul_backward/parallel");
BENCHMARK(BM_AttentionForward<false>)->Name("attention_forward/reference");
BENCHMARK(BM_AttentionForward<true>)->Name("attention_forward/parallel");
BENCHMARK(BM_AttentionBackward<false>)->Name("attention_backward/reference");
BENCHMARK(BM_AttentionBackward<true>)->Name("attention_backward/parallel");
BENCHMARK(BM_Gelu<false>)->Name("gelu_forward/reference");
BENCHMARK(BM_Gelu<true>)->Name("gelu_forward/parallel");
BENCHMARK(BM_LayerNorm<false>)->Name("layernorm_forward/reference");
BENCHMARK(BM_LayerNorm<true>)->Name("layernorm_forward/parallel");
BENCHMARK(BM_BatchGradient)->Name("batch_gradient/reference")->Arg(0)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchGradient)->Name("batch_gradient/parallel")->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
