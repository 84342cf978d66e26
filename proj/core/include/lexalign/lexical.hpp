#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "lexalign/matrix.hpp"

namespace lexalign {

/// V x d matrix of lexical codes, one row per vocabulary token. The text
/// codebook stays frozen during training; the image codebook starts as a copy
/// of it and adapts.
struct Codebook {
    Matrix codes;  // V x d
    bool frozen = false;

    std::size_t vocab_size() const { return codes.rows(); }
    std::size_t dim() const { return codes.cols(); }
};

/// Length-V non-negative score vector with unit l2 norm: element j is the
/// similarity between the sample and vocabulary token j.
struct DenseLexical {
    std::vector<double> values;

    std::size_t vocab_size() const { return values.size(); }
};

/// Pruned form used for indexing and retrieval: strictly positive values at
/// strictly increasing token ids.
struct SparseLexical {
    std::int32_t vocab_size = 0;
    std::vector<std::pair<std::int32_t, double>> entries;

    std::size_t nnz() const { return entries.size(); }
};

/// Shifted activation: x+1 for x >= 0, e^x otherwise. Strictly positive,
/// continuous, monotone; C1 at the branch point.
double elu1p(double x);
void elu1p_inplace(Matrix& m);

/// Throws std::invalid_argument on a (near-)zero vector: a degenerate
/// representation should fail loudly, not silently return garbage.
void l2_normalize(std::span<double> v);
std::vector<double> l2_normalized(std::vector<double> v);

/// Score a single feature row against a codebook: Normalize(elu1p(z Z^T)).
DenseLexical text_lexical_head(const Matrix& z, const Codebook& codebook);

/// Patch sequence variant: max-pool the per-patch elu1p scores over all rows,
/// then normalize.
DenseLexical image_lexical_head(const Matrix& z, const Codebook& codebook);

/// Same pipeline with the max-pool restricted to the selected rows.
DenseLexical patch_lexical(const Matrix& z, const Codebook& codebook,
                           const std::vector<std::size_t>& patch_ids);

/// Keep entries with value strictly greater than 1/sqrt(V). Values are copied
/// unmodified; no renormalization after pruning.
SparseLexical sparsify_value(const DenseLexical& s);

/// Keep the k largest entries (ties to the lower token id); zeros dropped.
SparseLexical sparsify_topk(const DenseLexical& s, std::size_t k);

/// Sparsity-target reformulation: keep the ceil((1-ratio)*V) largest entries.
SparseLexical prune_to_sparsity(const DenseLexical& s, double ratio);

/// Merge-join dot product; equals the dense dot of the reconstructions.
double sparse_dot(const SparseLexical& a, const SparseLexical& b);

DenseLexical densify(const SparseLexical& s);
SparseLexical to_sparse_all(const DenseLexical& s);  // every non-zero entry

/// JSON-lines serialization: {"id": <doc id>, "entries": [[tok, val], ...]}.
std::string sparse_to_jsonl(std::int64_t id, const SparseLexical& s);
std::pair<std::int64_t, SparseLexical> sparse_from_jsonl(const std::string& line,
                                                         std::int32_t vocab_size);
std::vector<SparseLexical> load_sparse_jsonl(std::istream& is, std::int32_t vocab_size);

void validate_dense(const DenseLexical& s, double tol = 1e-9);

}  // namespace lexalign
