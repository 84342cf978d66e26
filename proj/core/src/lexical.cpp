#include "lexalign/lexical.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace lexalign {

double elu1p(double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("elu1p: non-finite input");
    return x >= 0.0 ? x + 1.0 : std::exp(x);
}

void elu1p_inplace(Matrix& m) {
    for (double& v : m.data()) v = elu1p(v);
}

void l2_normalize(std::span<double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    const double norm = std::sqrt(acc);
    if (!(norm >= 1e-12)) {
        throw std::invalid_argument("l2_normalize: zero-norm vector");
    }
    const double inv = 1.0 / norm;
    for (double& x : v) x *= inv;
}

std::vector<double> l2_normalized(std::vector<double> v) {
    l2_normalize(v);
    return v;
}

namespace {

void check_head_input(const Matrix& z, const Codebook& codebook, bool allow_multi_row) {
    if (z.rows() == 0) throw std::invalid_argument("lexical head: empty feature sequence");
    if (!allow_multi_row && z.rows() != 1) {
        throw std::invalid_argument("text_lexical_head: expected a single feature row, got " +
                                    shape_string(z));
    }
    if (z.cols() != codebook.dim()) {
        throw std::invalid_argument("lexical head: feature dim " + std::to_string(z.cols()) +
                                    " does not match codebook dim " +
                                    std::to_string(codebook.dim()));
    }
}

DenseLexical pooled_head(const Matrix& z, const Codebook& codebook,
                         const std::vector<std::size_t>& rows) {
    Matrix scores = matmul_nt(z, codebook.codes);  // n x V
    elu1p_inplace(scores);
    const std::size_t v = codebook.vocab_size();
    DenseLexical out;
    out.values.assign(v, 0.0);
    bool first = true;
    for (std::size_t r : rows) {
        auto row = scores.row(r);
        if (first) {
            std::copy(row.begin(), row.end(), out.values.begin());
            first = false;
        } else {
            for (std::size_t j = 0; j < v; ++j) {
                if (row[j] > out.values[j]) out.values[j] = row[j];
            }
        }
    }
    l2_normalize(out.values);
    return out;
}

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

}  // namespace

DenseLexical text_lexical_head(const Matrix& z, const Codebook& codebook) {
    check_head_input(z, codebook, /*allow_multi_row=*/false);
    return pooled_head(z, codebook, {0});
}

DenseLexical image_lexical_head(const Matrix& z, const Codebook& codebook) {
    check_head_input(z, codebook, /*allow_multi_row=*/true);
    return pooled_head(z, codebook, all_rows(z.rows()));
}

DenseLexical patch_lexical(const Matrix& z, const Codebook& codebook,
                           const std::vector<std::size_t>& patch_ids) {
    check_head_input(z, codebook, /*allow_multi_row=*/true);
    if (patch_ids.empty()) throw std::invalid_argument("patch_lexical: empty patch selection");
    for (std::size_t p : patch_ids) {
        if (p >= z.rows()) {
            throw std::invalid_argument("patch_lexical: patch id " + std::to_string(p) +
                                        " out of range [0, " + std::to_string(z.rows()) + ")");
        }
    }
    return pooled_head(z, codebook, patch_ids);
}

SparseLexical sparsify_value(const DenseLexical& s) {
    const std::size_t v = s.vocab_size();
    const double threshold = 1.0 / std::sqrt(static_cast<double>(v));
    SparseLexical out;
    out.vocab_size = static_cast<std::int32_t>(v);
    for (std::size_t j = 0; j < v; ++j) {
        if (s.values[j] > threshold) {
            out.entries.emplace_back(static_cast<std::int32_t>(j), s.values[j]);
        }
    }
    return out;
}

SparseLexical sparsify_topk(const DenseLexical& s, std::size_t k) {
    const std::size_t v = s.vocab_size();
    if (k < 1 || k > v) {
        throw std::invalid_argument("sparsify_topk: k=" + std::to_string(k) +
                                    " out of range [1, " + std::to_string(v) + "]");
    }
    std::vector<std::int32_t> idx(v);
    std::iota(idx.begin(), idx.end(), 0);
    // Value descending, ties to the lower token id.
    std::stable_sort(idx.begin(), idx.end(), [&](std::int32_t a, std::int32_t b) {
        return s.values[static_cast<std::size_t>(a)] > s.values[static_cast<std::size_t>(b)];
    });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    SparseLexical out;
    out.vocab_size = static_cast<std::int32_t>(v);
    for (std::int32_t j : idx) {
        const double val = s.values[static_cast<std::size_t>(j)];
        if (val > 0.0) out.entries.emplace_back(j, val);
    }
    return out;
}

SparseLexical prune_to_sparsity(const DenseLexical& s, double ratio) {
    if (!(ratio >= 0.0 && ratio < 1.0)) {
        throw std::invalid_argument("prune_to_sparsity: ratio must be in [0, 1)");
    }
    const auto v = static_cast<double>(s.vocab_size());
    const auto keep = static_cast<std::size_t>(std::ceil((1.0 - ratio) * v));
    return sparsify_topk(s, std::max<std::size_t>(keep, 1));
}

double sparse_dot(const SparseLexical& a, const SparseLexical& b) {
    if (a.vocab_size != b.vocab_size) {
        throw std::invalid_argument("sparse_dot: vocabulary size mismatch");
    }
    double acc = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.entries.size() && j < b.entries.size()) {
        const std::int32_t ta = a.entries[i].first;
        const std::int32_t tb = b.entries[j].first;
        if (ta == tb) {
            acc += a.entries[i].second * b.entries[j].second;
            ++i;
            ++j;
        } else if (ta < tb) {
            ++i;
        } else {
            ++j;
        }
    }
    return acc;
}

DenseLexical densify(const SparseLexical& s) {
    DenseLexical out;
    out.values.assign(static_cast<std::size_t>(s.vocab_size), 0.0);
    for (const auto& [tok, val] : s.entries) out.values[static_cast<std::size_t>(tok)] = val;
    return out;
}

SparseLexical to_sparse_all(const DenseLexical& s) {
    SparseLexical out;
    out.vocab_size = static_cast<std::int32_t>(s.vocab_size());
    for (std::size_t j = 0; j < s.vocab_size(); ++j) {
        if (s.values[j] != 0.0) out.entries.emplace_back(static_cast<std::int32_t>(j), s.values[j]);
    }
    return out;
}

std::string sparse_to_jsonl(std::int64_t id, const SparseLexical& s) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [tok, val] : s.entries) {
        entries.push_back(nlohmann::json::array({tok, val}));
    }
    nlohmann::json j;
    j["id"] = id;
    j["entries"] = std::move(entries);
    return j.dump();
}

std::pair<std::int64_t, SparseLexical> sparse_from_jsonl(const std::string& line,
                                                         std::int32_t vocab_size) {
    const auto j = nlohmann::json::parse(line);
    SparseLexical s;
    s.vocab_size = vocab_size;
    std::int32_t prev = -1;
    for (const auto& e : j.at("entries")) {
        const auto tok = e.at(0).get<std::int32_t>();
        const auto val = e.at(1).get<double>();
        if (tok <= prev || tok >= vocab_size || val <= 0.0) {
            throw std::runtime_error("sparse vector line violates format invariants");
        }
        s.entries.emplace_back(tok, val);
        prev = tok;
    }
    return {j.at("id").get<std::int64_t>(), std::move(s)};
}

std::vector<SparseLexical> load_sparse_jsonl(std::istream& is, std::int32_t vocab_size) {
    std::vector<SparseLexical> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto [id, vec] = sparse_from_jsonl(line, vocab_size);
        if (id != static_cast<std::int64_t>(out.size())) {
            throw std::runtime_error("sparse vector file: ids must be dense 0..n-1 in order");
        }
        out.push_back(std::move(vec));
    }
    return out;
}

void validate_dense(const DenseLexical& s, double tol) {
    double acc = 0.0;
    for (double v : s.values) {
        if (v < 0.0 || !std::isfinite(v)) {
            throw std::runtime_error("DenseLexical: negative or non-finite entry");
        }
        acc += v * v;
    }
    if (std::fabs(std::sqrt(acc) - 1.0) > tol) {
        throw std::runtime_error("DenseLexical: not unit-norm");
    }
}

}  // namespace lexalign
