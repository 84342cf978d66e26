#include <benchmark/benchmark.h>

#include "lexalign/lexical.hpp"
#include "lexalign/losses.hpp"
#include "lexalign/rng.hpp"
#include "lexalign/synth.hpp"
#include "lexalign/tape.hpp"
#include "lexalign/trainer.hpp"

using namespace lexalign;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -0.8,
                     double hi = 0.8) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.uniform(lo, hi);
    return m;
}

Codebook desk_codebook() {
    return Codebook{.codes = make_initial_codebook(256, 64, 7), .frozen = false};
}

}  // namespace

static void BM_TextLexicalHead(benchmark::State& state) {
    Rng rng(1);
    const Codebook cb = desk_codebook();
    const Matrix z = random_matrix(1, 64, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(text_lexical_head(z, cb));
    }
}
BENCHMARK(BM_TextLexicalHead);

static void BM_ImageLexicalHead(benchmark::State& state) {
    Rng rng(2);
    const Codebook cb = desk_codebook();
    const Matrix z = random_matrix(static_cast<std::size_t>(state.range(0)), 64, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(image_lexical_head(z, cb));
    }
}
BENCHMARK(BM_ImageLexicalHead)->Arg(16)->Arg(64);

static void BM_SparsifyValue(benchmark::State& state) {
    Rng rng(3);
    DenseLexical s;
    s.values.resize(256);
    for (double& v : s.values) v = rng.uniform(0.0, 1.0);
    l2_normalize(s.values);
    for (auto _ : state) {
        benchmark::DoNotOptimize(sparsify_value(s));
    }
}
BENCHMARK(BM_SparsifyValue);

static void BM_Losses(benchmark::State& state) {
    Rng rng(4);
    Matrix img(64, 256), txt(64, 256);
    for (std::size_t r = 0; r < 64; ++r) {
        for (std::size_t c = 0; c < 256; ++c) {
            img(r, c) = rng.uniform(0.0, 1.0);
            txt(r, c) = rng.uniform(0.0, 1.0);
        }
        l2_normalize(img.row(r));
        l2_normalize(txt.row(r));
    }
    const Temperature temp{.tau = 0.07, .max_inverse = 100.0};
    const PenaltySchedule sched{};
    for (auto _ : state) {
        benchmark::DoNotOptimize(total_objective(img, txt, temp, sched, 500));
    }
}
BENCHMARK(BM_Losses);

static void BM_TrainStep(benchmark::State& state) {
    // full desk-scale forward/backward: batch 64, 16 patches, V=256, d=64
    Rng rng(5);
    const Matrix codebook = make_initial_codebook(256, 64, 7);
    EncoderParams params = init_encoder_params(codebook, 64, 64, 64, 0.07, 100.0, 5);
    TrainingGraph graph = build_training_graph(params, 64, 16, PenaltyKind::Overuse);
    graph.load_params(params);
    graph.tape.set_value(graph.in_img, random_matrix(64 * 16, 64, rng));
    graph.tape.set_value(graph.in_txt, random_matrix(64, 64, rng));
    graph.set_lambdas(5e-4, 1e-3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(graph.tape.forward_backward());
    }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
