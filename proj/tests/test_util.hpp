#pragma once

#include <cmath>
#include <vector>

#include "lexalign/lexical.hpp"
#include "lexalign/matrix.hpp"
#include "lexalign/rng.hpp"

namespace testutil {

inline lexalign::Matrix random_matrix(std::size_t rows, std::size_t cols, lexalign::Rng& rng,
                                      double lo = -1.0, double hi = 1.0) {
    lexalign::Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.uniform(lo, hi);
    return m;
}

inline lexalign::DenseLexical random_dense_lexical(std::size_t v, lexalign::Rng& rng) {
    lexalign::DenseLexical s;
    s.values.resize(v);
    for (double& x : s.values) x = rng.uniform(0.0, 1.0);
    lexalign::l2_normalize(s.values);
    return s;
}

inline lexalign::SparseLexical random_sparse(std::size_t v, std::size_t max_nnz,
                                             lexalign::Rng& rng) {
    lexalign::SparseLexical s;
    s.vocab_size = static_cast<std::int32_t>(v);
    const std::size_t nnz = 1 + rng.below(max_nnz);
    auto ids = rng.sample_without_replacement(v, nnz);
    std::sort(ids.begin(), ids.end());
    for (std::size_t id : ids) {
        s.entries.emplace_back(static_cast<std::int32_t>(id), rng.uniform(0.05, 1.0));
    }
    return s;
}

inline bool close(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

inline bool close_rel(double a, double b, double tol) {
    const double scale = std::max({std::fabs(a), std::fabs(b), 1.0});
    return std::fabs(a - b) <= tol * scale;
}

}  // namespace testutil
