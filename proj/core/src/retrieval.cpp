#include "lexalign/retrieval.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "lexalign/io.hpp"

namespace lexalign {

bool RetrievalResult::contains(std::int64_t doc, std::size_t top_k) const {
    const std::size_t n = std::min(top_k, hits.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (hits[i].doc == doc) return true;
    }
    return false;
}

InvertedIndex InvertedIndex::build(const std::vector<SparseLexical>& corpus) {
    InvertedIndex index;
    index.doc_count_ = corpus.size();
    if (corpus.empty()) return index;
    index.vocab_size_ = corpus.front().vocab_size;
    index.postings_.resize(static_cast<std::size_t>(index.vocab_size_));
    for (std::size_t doc = 0; doc < corpus.size(); ++doc) {
        if (corpus[doc].vocab_size != index.vocab_size_) {
            throw std::invalid_argument("build_index: inconsistent vocabulary size at doc " +
                                        std::to_string(doc));
        }
        for (const auto& [tok, val] : corpus[doc].entries) {
            if (!(val > 0.0)) {
                throw std::invalid_argument("build_index: non-positive posting value");
            }
            index.postings_[static_cast<std::size_t>(tok)].emplace_back(
                static_cast<std::int64_t>(doc), val);
        }
    }
    return index;
}

const std::vector<std::pair<std::int64_t, double>>& InvertedIndex::postings(
    std::int32_t token) const {
    if (token < 0 || static_cast<std::size_t>(token) >= postings_.size()) {
        throw std::invalid_argument("postings: token out of range");
    }
    return postings_[static_cast<std::size_t>(token)];
}

RetrievalResult InvertedIndex::search(const SparseLexical& query, std::size_t k) const {
    if (k < 1) throw std::invalid_argument("search: k must be >= 1");
    RetrievalResult result;
    if (doc_count_ == 0 || query.entries.empty()) return result;
    if (query.vocab_size != vocab_size_) {
        throw std::invalid_argument("search: query vocabulary size mismatch");
    }
    // Term-at-a-time accumulation in ascending token order: per-doc sums see
    // the same floating-point addition order a dense scan would.
    std::vector<double> acc(doc_count_, 0.0);
    std::vector<std::int64_t> touched;
    std::vector<char> seen(doc_count_, 0);
    for (const auto& [tok, qval] : query.entries) {
        for (const auto& [doc, dval] : postings_[static_cast<std::size_t>(tok)]) {
            acc[static_cast<std::size_t>(doc)] += qval * dval;
            if (!seen[static_cast<std::size_t>(doc)]) {
                seen[static_cast<std::size_t>(doc)] = 1;
                touched.push_back(doc);
            }
        }
    }
    result.hits.reserve(touched.size());
    for (std::int64_t doc : touched) {
        const double score = acc[static_cast<std::size_t>(doc)];
        if (score > 0.0) result.hits.push_back({doc, score});
    }
    std::sort(result.hits.begin(), result.hits.end(), [](const RetrievalHit& a,
                                                         const RetrievalHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc < b.doc;
    });
    if (result.hits.size() > k) result.hits.resize(k);
    return result;
}

SparseLexical InvertedIndex::reconstruct(std::int64_t doc) const {
    if (doc < 0 || static_cast<std::size_t>(doc) >= doc_count_) {
        throw std::invalid_argument("reconstruct: doc id out of range");
    }
    SparseLexical out;
    out.vocab_size = vocab_size_;
    for (std::size_t tok = 0; tok < postings_.size(); ++tok) {
        for (const auto& [d, val] : postings_[tok]) {
            if (d == doc) out.entries.emplace_back(static_cast<std::int32_t>(tok), val);
        }
    }
    return out;
}

namespace {
constexpr char kIndexMagic[9] = "LXALNIX1";
}

void InvertedIndex::save(const std::filesystem::path& p) const {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write index: " + p.string());
    os.write(kIndexMagic, 8);
    write_u32(os, 1);
    write_u32(os, static_cast<std::uint32_t>(vocab_size_));
    write_u64(os, doc_count_);
    for (const auto& plist : postings_) {
        write_u64(os, plist.size());
        for (const auto& [doc, val] : plist) {
            write_u64(os, static_cast<std::uint64_t>(doc));
            write_f64(os, val);
        }
    }
    if (!os) throw std::runtime_error("index write failed: " + p.string());
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw ConfigError("cannot open index: " + p.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::string(magic, 8) != std::string(kIndexMagic, 8)) {
        throw std::runtime_error("bad index magic in " + p.string());
    }
    if (read_u32(is) != 1) throw std::runtime_error("unsupported index version");
    InvertedIndex index;
    index.vocab_size_ = static_cast<std::int32_t>(read_u32(is));
    index.doc_count_ = read_u64(is);
    index.postings_.resize(static_cast<std::size_t>(index.vocab_size_));
    for (auto& plist : index.postings_) {
        plist.resize(read_u64(is));
        for (auto& [doc, val] : plist) {
            doc = static_cast<std::int64_t>(read_u64(is));
            val = read_f64(is);
        }
    }
    return index;
}

double recall_at_k(const std::vector<RetrievalResult>& results,
                   const std::vector<std::int64_t>& ground_truth, std::size_t k) {
    if (results.size() != ground_truth.size()) {
        throw std::invalid_argument("recall_at_k: missing ground truth for some queries");
    }
    if (results.empty()) throw std::invalid_argument("recall_at_k: no queries");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (ground_truth[i] < 0) {
            throw std::invalid_argument("recall_at_k: missing ground truth for query " +
                                        std::to_string(i));
        }
        if (results[i].contains(ground_truth[i], k)) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(results.size());
}

PruneSide prune_side_from_string(const std::string& s) {
    if (s == "both") return PruneSide::Both;
    if (s == "query") return PruneSide::Query;
    if (s == "corpus") return PruneSide::Corpus;
    throw ConfigError("unknown prune side '" + s + "' (both|query|corpus)");
}

std::string to_string(PruneSide side) {
    switch (side) {
        case PruneSide::Both: return "both";
        case PruneSide::Query: return "query";
        case PruneSide::Corpus: return "corpus";
    }
    return "?";
}

namespace {

std::vector<SparseLexical> prune_all(const std::vector<DenseLexical>& reps, double ratio) {
    std::vector<SparseLexical> out;
    out.reserve(reps.size());
    for (const auto& r : reps) out.push_back(prune_to_sparsity(r, ratio));
    return out;
}

std::vector<SparseLexical> keep_all(const std::vector<DenseLexical>& reps) {
    std::vector<SparseLexical> out;
    out.reserve(reps.size());
    for (const auto& r : reps) out.push_back(to_sparse_all(r));
    return out;
}

SweepRow eval_direction(const std::string& direction, double ratio,
                        const std::vector<SparseLexical>& queries,
                        const std::vector<SparseLexical>& corpus) {
    const InvertedIndex index = InvertedIndex::build(corpus);
    std::vector<RetrievalResult> results;
    results.reserve(queries.size());
    std::vector<std::int64_t> gt;
    double nnz = 0.0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        results.push_back(index.search(queries[i], 10));
        gt.push_back(static_cast<std::int64_t>(i));
        nnz += static_cast<double>(queries[i].nnz());
    }
    SweepRow row;
    row.direction = direction;
    row.ratio = ratio;
    row.activated_mean = nnz / static_cast<double>(queries.size());
    row.r1 = recall_at_k(results, gt, 1);
    row.r5 = recall_at_k(results, gt, 5);
    row.r10 = recall_at_k(results, gt, 10);
    return row;
}

}  // namespace

std::vector<SweepRow> sparsity_sweep(const std::vector<DenseLexical>& img_reps,
                                     const std::vector<DenseLexical>& txt_reps,
                                     const std::vector<double>& ratios, PruneSide side) {
    if (img_reps.size() != txt_reps.size() || img_reps.empty()) {
        throw std::invalid_argument("sparsity_sweep: need matched non-empty representation sets");
    }
    std::vector<SweepRow> rows;
    for (double ratio : ratios) {
        if (!(ratio >= 0.0 && ratio < 1.0)) {
            throw std::invalid_argument("sparsity_sweep: ratio must be in [0, 1)");
        }
        const bool prune_queries = side != PruneSide::Corpus;
        const bool prune_corpus = side != PruneSide::Query;
        auto txt_q = prune_queries ? prune_all(txt_reps, ratio) : keep_all(txt_reps);
        auto img_c = prune_corpus ? prune_all(img_reps, ratio) : keep_all(img_reps);
        rows.push_back(eval_direction("t2i", ratio, txt_q, img_c));
        auto img_q = prune_queries ? prune_all(img_reps, ratio) : keep_all(img_reps);
        auto txt_c = prune_corpus ? prune_all(txt_reps, ratio) : keep_all(txt_reps);
        rows.push_back(eval_direction("i2t", ratio, img_q, txt_c));
    }
    return rows;
}

std::string sweep_csv_header() { return "direction,ratio,activated_mean,R1,R5,R10"; }

std::string sweep_csv_line(const SweepRow& row) {
    std::string out = row.direction;
    for (double v : {row.ratio, row.activated_mean, row.r1, row.r5, row.r10}) {
        out += ',';
        out += format_double(v);
    }
    return out;
}

}  // namespace lexalign
