#include <doctest.h>

#include <stdexcept>

#include <filesystem>
#include <thread>

#include "lexalign/retrieval.hpp"
#include "test_util.hpp"

using namespace lexalign;

namespace {

// brute force: densify everything, score every doc, sort by the tie rule
RetrievalResult dense_oracle_search(const std::vector<SparseLexical>& corpus,
                                    const SparseLexical& query, std::size_t k) {
    RetrievalResult out;
    const DenseLexical dq = densify(query);
    for (std::size_t doc = 0; doc < corpus.size(); ++doc) {
        const DenseLexical dd = densify(corpus[doc]);
        double score = 0.0;
        for (std::size_t j = 0; j < dq.values.size(); ++j) score += dq.values[j] * dd.values[j];
        if (score > 0.0) out.hits.push_back({static_cast<std::int64_t>(doc), score});
    }
    std::sort(out.hits.begin(), out.hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc < b.doc;
    });
    if (out.hits.size() > k) out.hits.resize(k);
    return out;
}

}  // namespace

TEST_CASE("index build basics") {
    SUBCASE("empty corpus") {
        const InvertedIndex index = InvertedIndex::build({});
        CHECK(index.doc_count() == 0);
        SparseLexical q{.vocab_size = 0, .entries = {}};
        CHECK(index.search(q, 5).hits.empty());
    }
    SUBCASE("single document posting") {
        SparseLexical doc{.vocab_size = 8, .entries = {{3, 1.0}}};
        const InvertedIndex index = InvertedIndex::build({doc});
        REQUIRE(index.postings(3).size() == 1);
        CHECK(index.postings(3)[0] == std::pair<std::int64_t, double>{0, 1.0});
        CHECK(index.postings(2).empty());
    }
    SUBCASE("round-trip reconstruction of 100 random docs") {
        Rng rng(61);
        std::vector<SparseLexical> corpus;
        for (int i = 0; i < 100; ++i) corpus.push_back(testutil::random_sparse(64, 10, rng));
        const InvertedIndex index = InvertedIndex::build(corpus);
        for (std::size_t doc = 0; doc < corpus.size(); ++doc) {
            CHECK(index.reconstruct(static_cast<std::int64_t>(doc)).entries ==
                  corpus[doc].entries);
        }
    }
    SUBCASE("inconsistent vocabulary size is rejected") {
        SparseLexical a{.vocab_size = 8, .entries = {{1, 0.5}}};
        SparseLexical b{.vocab_size = 16, .entries = {{1, 0.5}}};
        CHECK_THROWS_AS(InvertedIndex::build({a, b}), std::invalid_argument);
    }
}

TEST_CASE("search semantics") {
    SUBCASE("empty query support returns an empty result") {
        Rng rng(62);
        std::vector<SparseLexical> corpus;
        for (int i = 0; i < 10; ++i) corpus.push_back(testutil::random_sparse(32, 6, rng));
        const InvertedIndex index = InvertedIndex::build(corpus);
        SparseLexical empty{.vocab_size = 32, .entries = {}};
        CHECK(index.search(empty, 10).hits.empty());
    }
    SUBCASE("orthogonal one-hots: the matching doc wins with score 1") {
        std::vector<SparseLexical> corpus;
        for (std::int32_t i = 0; i < 8; ++i) {
            corpus.push_back({.vocab_size = 8, .entries = {{i, 1.0}}});
        }
        const InvertedIndex index = InvertedIndex::build(corpus);
        const RetrievalResult r = index.search(corpus[5], 3);
        REQUIRE(r.hits.size() == 1);  // zero-score docs never returned
        CHECK(r.hits[0].doc == 5);
        CHECK(r.hits[0].score == 1.0);
    }
    SUBCASE("search equals the dense brute-force oracle (256 docs, 64 queries)") {
        Rng rng(63);
        std::vector<SparseLexical> corpus;
        for (int i = 0; i < 256; ++i) corpus.push_back(testutil::random_sparse(128, 16, rng));
        const InvertedIndex index = InvertedIndex::build(corpus);
        for (int q = 0; q < 64; ++q) {
            const SparseLexical query = testutil::random_sparse(128, 16, rng);
            for (std::size_t k : {1u, 5u, 10u}) {
                const RetrievalResult got = index.search(query, k);
                const RetrievalResult want = dense_oracle_search(corpus, query, k);
                REQUIRE(got.hits.size() == want.hits.size());
                for (std::size_t i = 0; i < got.hits.size(); ++i) {
                    CHECK(got.hits[i].doc == want.hits[i].doc);
                    CHECK(testutil::close_rel(got.hits[i].score, want.hits[i].score, 1e-12));
                }
            }
        }
    }
    SUBCASE("scores are non-increasing with doc-id tiebreak") {
        std::vector<SparseLexical> corpus;
        // three docs with exactly equal scores against the query
        for (int i = 0; i < 3; ++i) {
            corpus.push_back({.vocab_size = 4, .entries = {{0, 0.5}}});
        }
        const InvertedIndex index = InvertedIndex::build(corpus);
        SparseLexical q{.vocab_size = 4, .entries = {{0, 1.0}}};
        const RetrievalResult r = index.search(q, 3);
        REQUIRE(r.hits.size() == 3);
        CHECK(r.hits[0].doc == 0);
        CHECK(r.hits[1].doc == 1);
        CHECK(r.hits[2].doc == 2);
    }
}

TEST_CASE("recall_at_k") {
    SUBCASE("closed cases") {
        std::vector<RetrievalResult> results(4);
        std::vector<std::int64_t> gt{0, 1, 2, 3};
        for (std::int64_t i = 0; i < 4; ++i) {
            results[static_cast<std::size_t>(i)].hits = {{i, 1.0}};
        }
        CHECK(recall_at_k(results, gt, 1) == 1.0);
        for (auto& r : results) r.hits = {{99, 1.0}};
        CHECK(recall_at_k(results, gt, 1) == 0.0);
        CHECK_THROWS_AS(recall_at_k(results, {0, 1}, 1), std::invalid_argument);
    }
    SUBCASE("random scoring matches E[R@K] = K/M within 3 standard errors") {
        Rng rng(64);
        const std::size_t m = 32, k = 5, queries = 16, trials = 200;
        double total = 0.0;
        for (std::size_t t = 0; t < trials; ++t) {
            std::vector<RetrievalResult> results;
            std::vector<std::int64_t> gt;
            for (std::size_t q = 0; q < queries; ++q) {
                std::vector<RetrievalHit> hits;
                for (std::size_t doc = 0; doc < m; ++doc) {
                    hits.push_back({static_cast<std::int64_t>(doc), rng.uniform()});
                }
                std::sort(hits.begin(), hits.end(), [](auto& a, auto& b) {
                    return a.score > b.score;
                });
                hits.resize(k);
                results.push_back({std::move(hits)});
                gt.push_back(static_cast<std::int64_t>(rng.below(m)));
            }
            total += recall_at_k(results, gt, k);
        }
        const double p = static_cast<double>(k) / static_cast<double>(m);
        const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(trials * queries));
        CHECK(std::fabs(total / trials - p) <= 3.0 * se);
    }
    SUBCASE("R@1 <= R@5 <= R@10 always") {
        Rng rng(65);
        std::vector<SparseLexical> corpus;
        for (int i = 0; i < 64; ++i) corpus.push_back(testutil::random_sparse(64, 8, rng));
        const InvertedIndex index = InvertedIndex::build(corpus);
        std::vector<RetrievalResult> results;
        std::vector<std::int64_t> gt;
        for (int q = 0; q < 32; ++q) {
            results.push_back(index.search(testutil::random_sparse(64, 8, rng), 10));
            gt.push_back(q);
        }
        const double r1 = recall_at_k(results, gt, 1);
        const double r5 = recall_at_k(results, gt, 5);
        const double r10 = recall_at_k(results, gt, 10);
        CHECK(r1 <= r5);
        CHECK(r5 <= r10);
    }
}

TEST_CASE("index persistence and concurrent reads") {
    Rng rng(66);
    std::vector<SparseLexical> corpus;
    for (int i = 0; i < 80; ++i) corpus.push_back(testutil::random_sparse(96, 12, rng));
    const InvertedIndex index = InvertedIndex::build(corpus);

    const auto path = std::filesystem::temp_directory_path() / "lexalign_index_test.bin";
    index.save(path);
    const InvertedIndex loaded = InvertedIndex::load(path);
    CHECK(loaded.doc_count() == index.doc_count());

    std::vector<SparseLexical> queries;
    for (int q = 0; q < 16; ++q) queries.push_back(testutil::random_sparse(96, 12, rng));

    std::vector<std::vector<RetrievalResult>> per_thread(4);
    std::vector<std::thread> pool;
    for (int t = 0; t < 4; ++t) {
        pool.emplace_back([&, t] {
            for (const auto& q : queries) per_thread[static_cast<std::size_t>(t)].push_back(loaded.search(q, 10));
        });
    }
    for (auto& t : pool) t.join();
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const RetrievalResult base = index.search(queries[q], 10);
        for (int t = 0; t < 4; ++t) {
            const RetrievalResult& got = per_thread[static_cast<std::size_t>(t)][q];
            REQUIRE(got.hits.size() == base.hits.size());
            for (std::size_t i = 0; i < base.hits.size(); ++i) {
                CHECK(got.hits[i].doc == base.hits[i].doc);
                CHECK(got.hits[i].score == base.hits[i].score);
            }
        }
    }
    std::filesystem::remove(path);
}

TEST_CASE("sparsity sweep") {
    Rng rng(67);
    std::vector<DenseLexical> img, txt;
    for (int i = 0; i < 48; ++i) {
        // correlated pairs so retrieval is non-trivial
        DenseLexical a = testutil::random_dense_lexical(64, rng);
        DenseLexical b = a;
        for (double& v : b.values) v += rng.uniform(0.0, 0.05);
        l2_normalize(b.values);
        img.push_back(std::move(a));
        txt.push_back(std::move(b));
    }

    SUBCASE("ratio zero equals the unpruned evaluation") {
        const auto rows = sparsity_sweep(img, txt, {0.0});
        REQUIRE(rows.size() == 2);
        // unpruned means every non-zero entry is kept
        std::vector<SparseLexical> full_t, full_i;
        for (const auto& r : txt) full_t.push_back(to_sparse_all(r));
        for (const auto& r : img) full_i.push_back(to_sparse_all(r));
        const InvertedIndex idx = InvertedIndex::build(full_i);
        std::vector<RetrievalResult> results;
        std::vector<std::int64_t> gt;
        for (std::size_t i = 0; i < full_t.size(); ++i) {
            results.push_back(idx.search(full_t[i], 10));
            gt.push_back(static_cast<std::int64_t>(i));
        }
        CHECK(rows[0].direction == "t2i");
        CHECK(rows[0].r1 == recall_at_k(results, gt, 1));
        CHECK(rows[0].r5 == recall_at_k(results, gt, 5));
        CHECK(rows[0].r10 == recall_at_k(results, gt, 10));
    }
    SUBCASE("8-ratio grid emits 8 rows per direction with sane values") {
        const std::vector<double> ratios{0.0, 0.25, 0.5, 0.75, 0.9, 0.95, 0.98, 0.99};
        const auto rows = sparsity_sweep(img, txt, ratios);
        REQUIRE(rows.size() == 16);
        std::size_t t2i = 0, i2t = 0;
        for (const auto& row : rows) {
            if (row.direction == "t2i") ++t2i;
            if (row.direction == "i2t") ++i2t;
            CHECK(row.r1 >= 0.0);
            CHECK(row.r1 <= row.r5);
            CHECK(row.r5 <= row.r10);
            CHECK(row.r10 <= 1.0);
            CHECK(row.activated_mean > 0.0);
        }
        CHECK(t2i == 8);
        CHECK(i2t == 8);
        CHECK(sweep_csv_header() == "direction,ratio,activated_mean,R1,R5,R10");
        CHECK(sweep_csv_line(rows[0]).substr(0, 4) == "t2i,");
    }
    SUBCASE("one-sided pruning degrades gracefully") {
        for (PruneSide side : {PruneSide::Query, PruneSide::Corpus}) {
            const auto rows = sparsity_sweep(img, txt, {0.95}, side);
            for (const auto& row : rows) {
                CHECK(std::isfinite(row.r1));
                CHECK(row.r10 <= 1.0);
            }
        }
    }
    SUBCASE("bad ratios are rejected") {
        CHECK_THROWS_AS(sparsity_sweep(img, txt, {1.0}), std::invalid_argument);
    }
}
