#include <benchmark/benchmark.h>

#include "lexalign/lexical.hpp"
#include "lexalign/retrieval.hpp"
#include "lexalign/rng.hpp"

using namespace lexalign;

namespace {

SparseLexical random_sparse(std::int32_t vocab, std::size_t nnz, Rng& rng) {
    SparseLexical s;
    s.vocab_size = vocab;
    auto ids = rng.sample_without_replacement(static_cast<std::size_t>(vocab), nnz);
    std::sort(ids.begin(), ids.end());
    for (auto id : ids) {
        s.entries.emplace_back(static_cast<std::int32_t>(id), rng.uniform(0.05, 1.0));
    }
    return s;
}

std::vector<SparseLexical> corpus(std::size_t docs, std::int32_t vocab, std::size_t nnz,
                                  std::uint64_t seed) {
    Rng rng(seed);
    std::vector<SparseLexical> out;
    out.reserve(docs);
    for (std::size_t i = 0; i < docs; ++i) out.push_back(random_sparse(vocab, nnz, rng));
    return out;
}

}  // namespace

static void BM_IndexBuild(benchmark::State& state) {
    const auto docs = corpus(static_cast<std::size_t>(state.range(0)), 256, 26, 11);
    for (auto _ : state) {
        benchmark::DoNotOptimize(InvertedIndex::build(docs));
    }
}
BENCHMARK(BM_IndexBuild)->Arg(256)->Arg(4096);

static void BM_IndexSearch(benchmark::State& state) {
    const auto docs = corpus(static_cast<std::size_t>(state.range(0)), 256, 26, 12);
    const InvertedIndex index = InvertedIndex::build(docs);
    Rng rng(13);
    const SparseLexical query = random_sparse(256, 26, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(index.search(query, 10));
    }
}
BENCHMARK(BM_IndexSearch)->Arg(256)->Arg(4096);

static void BM_DenseBruteForceSearch(benchmark::State& state) {
    const auto docs = corpus(static_cast<std::size_t>(state.range(0)), 256, 26, 14);
    std::vector<DenseLexical> dense;
    dense.reserve(docs.size());
    for (const auto& d : docs) dense.push_back(densify(d));
    Rng rng(15);
    const DenseLexical query = densify(random_sparse(256, 26, rng));
    for (auto _ : state) {
        double best = -1.0;
        std::int64_t best_doc = -1;
        for (std::size_t i = 0; i < dense.size(); ++i) {
            double score = 0.0;
            for (std::size_t j = 0; j < query.values.size(); ++j) {
                score += query.values[j] * dense[i].values[j];
            }
            if (score > best) {
                best = score;
                best_doc = static_cast<std::int64_t>(i);
            }
        }
        benchmark::DoNotOptimize(best_doc);
    }
}
BENCHMARK(BM_DenseBruteForceSearch)->Arg(256)->Arg(4096);

static void BM_SparseDot(benchmark::State& state) {
    Rng rng(16);
    const SparseLexical a = random_sparse(256, 26, rng);
    const SparseLexical b = random_sparse(256, 26, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(sparse_dot(a, b));
    }
}
BENCHMARK(BM_SparseDot);
