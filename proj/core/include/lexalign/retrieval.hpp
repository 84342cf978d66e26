#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lexalign/lexical.hpp"

namespace lexalign {

struct RetrievalHit {
    std::int64_t doc = 0;
    double score = 0.0;
};

/// Ranked hits: score descending, ties broken by ascending doc id. At most k
/// entries; zero-score documents are never returned.
struct RetrievalResult {
    std::vector<RetrievalHit> hits;

    bool contains(std::int64_t doc, std::size_t top_k) const;
};

/// Token-id -> posting-list structure for sparse dot-product search without
/// scanning the full corpus. Immutable after build; concurrent searches are
/// safe.
class InvertedIndex {
public:
    static InvertedIndex build(const std::vector<SparseLexical>& corpus);

    RetrievalResult search(const SparseLexical& query, std::size_t k) const;

    /// Lossless: reassembles the doc exactly as it was indexed.
    SparseLexical reconstruct(std::int64_t doc) const;

    std::size_t doc_count() const { return doc_count_; }
    std::int32_t vocab_size() const { return vocab_size_; }
    const std::vector<std::pair<std::int64_t, double>>& postings(std::int32_t token) const;

    void save(const std::filesystem::path& p) const;
    static InvertedIndex load(const std::filesystem::path& p);

private:
    std::int32_t vocab_size_ = 0;
    std::size_t doc_count_ = 0;
    std::vector<std::vector<std::pair<std::int64_t, double>>> postings_;
};

/// Fraction of queries whose ground-truth doc appears in their top-K hits.
double recall_at_k(const std::vector<RetrievalResult>& results,
                   const std::vector<std::int64_t>& ground_truth, std::size_t k);

enum class PruneSide { Both, Query, Corpus };

PruneSide prune_side_from_string(const std::string& s);
std::string to_string(PruneSide side);

struct SweepRow {
    std::string direction;  // "t2i" or "i2t"
    double ratio = 0.0;
    double activated_mean = 0.0;  // mean nnz of the pruned query vectors
    double r1 = 0.0, r5 = 0.0, r10 = 0.0;
};

/// Prunes representations to each sparsity ratio, re-indexes and evaluates
/// both retrieval directions (query i's ground truth is doc i).
std::vector<SweepRow> sparsity_sweep(const std::vector<DenseLexical>& img_reps,
                                     const std::vector<DenseLexical>& txt_reps,
                                     const std::vector<double>& ratios,
                                     PruneSide side = PruneSide::Both);

std::string sweep_csv_header();
std::string sweep_csv_line(const SweepRow& row);

}  // namespace lexalign
