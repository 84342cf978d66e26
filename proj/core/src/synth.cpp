#include "lexalign/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <thread>

#include <json.hpp>

#include "lexalign/rng.hpp"

namespace lexalign {

namespace {

using nlohmann::json;

constexpr std::uint64_t kStreamCodebook = 1;
constexpr std::uint64_t kStreamMaps = 2;
constexpr std::uint64_t kStreamConcepts = 3;
constexpr std::uint64_t kStreamSplit = 4;
constexpr std::uint64_t kStreamClassPick = 5;
constexpr std::uint64_t kStreamSceneBase = 0x60000;
constexpr std::uint64_t kStreamPairBase = 0x100000;

void require(bool cond, const std::string& field, const std::string& msg) {
    if (!cond) throw ConfigError("config key '" + field + "': " + msg);
}

}  // namespace

GenConfig GenConfig::from_kv(const KvMap& kv) {
    reject_unknown_keys(kv,
                        {"vocab_size", "lexical_dim", "d_img", "d_txt", "grid", "n_concepts",
                         "max_active", "n_train_pairs", "n_val_pairs", "n_test_pairs",
                         "noise_sigma", "seed", "n_scenes", "scene_classes", "scene_separation",
                         "scene_noise_sigma", "vocab_file"},
                        "generator config");
    GenConfig c;
    c.vocab_size = kv_int(kv, "vocab_size", c.vocab_size);
    c.lexical_dim = kv_int(kv, "lexical_dim", c.lexical_dim);
    c.d_img = kv_int(kv, "d_img", c.d_img);
    c.d_txt = kv_int(kv, "d_txt", c.d_txt);
    c.grid = kv_int(kv, "grid", c.grid);
    c.n_concepts = kv_int(kv, "n_concepts", c.n_concepts);
    c.max_active = kv_int(kv, "max_active", c.max_active);
    c.n_train_pairs = kv_int(kv, "n_train_pairs", c.n_train_pairs);
    c.n_val_pairs = kv_int(kv, "n_val_pairs", c.n_val_pairs);
    c.n_test_pairs = kv_int(kv, "n_test_pairs", c.n_test_pairs);
    c.noise_sigma = kv_double(kv, "noise_sigma", c.noise_sigma);
    c.seed = static_cast<std::uint64_t>(kv_int(kv, "seed", static_cast<std::int64_t>(c.seed)));
    c.n_scenes = kv_int(kv, "n_scenes", c.n_scenes);
    c.scene_classes = kv_int(kv, "scene_classes", c.scene_classes);
    c.scene_separation = kv_double(kv, "scene_separation", c.scene_separation);
    c.scene_noise_sigma = kv_double(kv, "scene_noise_sigma", c.scene_noise_sigma);
    c.vocab_file = kv_string(kv, "vocab_file", c.vocab_file);
    c.validate();
    return c;
}

KvMap GenConfig::to_kv() const {
    KvMap kv;
    kv["vocab_size"] = std::to_string(vocab_size);
    kv["lexical_dim"] = std::to_string(lexical_dim);
    kv["d_img"] = std::to_string(d_img);
    kv["d_txt"] = std::to_string(d_txt);
    kv["grid"] = std::to_string(grid);
    kv["n_concepts"] = std::to_string(n_concepts);
    kv["max_active"] = std::to_string(max_active);
    kv["n_train_pairs"] = std::to_string(n_train_pairs);
    kv["n_val_pairs"] = std::to_string(n_val_pairs);
    kv["n_test_pairs"] = std::to_string(n_test_pairs);
    kv["noise_sigma"] = format_double(noise_sigma);
    kv["seed"] = std::to_string(seed);
    kv["n_scenes"] = std::to_string(n_scenes);
    kv["scene_classes"] = std::to_string(scene_classes);
    kv["scene_separation"] = format_double(scene_separation);
    kv["scene_noise_sigma"] = format_double(scene_noise_sigma);
    kv["vocab_file"] = vocab_file;
    return kv;
}

void GenConfig::validate() const {
    require(vocab_size >= 2, "vocab_size", "must be >= 2");
    require(lexical_dim >= 1, "lexical_dim", "must be >= 1");
    require(d_img >= 1 && d_img <= lexical_dim, "d_img",
            "must be in [1, lexical_dim] (maps would lose rank otherwise)");
    require(d_txt == lexical_dim, "d_txt",
            "must equal lexical_dim (text features live in codebook coordinates)");
    require(grid >= 1, "grid", "must be >= 1");
    require(max_active >= 1 && max_active < vocab_size, "max_active",
            "must be in [1, vocab_size)");
    require(n_concepts >= 1, "n_concepts", "must be >= 1");
    require(n_train_pairs >= 0 && n_val_pairs >= 0 && n_test_pairs >= 0, "n_train_pairs",
            "pair counts must be non-negative");
    require(n_concepts > n_test_pairs + n_val_pairs, "n_concepts",
            "need held-out test/val concepts plus at least one training concept");
    require(noise_sigma >= 0.0, "noise_sigma", "must be >= 0");
    require(n_scenes >= 0, "n_scenes", "must be >= 0");
    if (n_scenes > 0) {
        require(scene_classes >= 2, "scene_classes", "must be >= 2");
        require(grid * grid >= scene_classes, "scene_classes",
                "grid*grid must be >= scene_classes");
        require(scene_classes <= vocab_size, "scene_classes", "must be <= vocab_size");
        require(scene_separation >= 0.0, "scene_separation", "must be >= 0");
        require(scene_noise_sigma >= 0.0, "scene_noise_sigma", "must be >= 0");
    }
}

std::uint64_t GenConfig::hash() const { return fnv1a64(canonical_kv(to_kv())); }

Matrix make_initial_codebook(std::int64_t vocab_size, std::int64_t dim, std::uint64_t seed) {
    Rng rng(derive_seed(seed, kStreamCodebook));
    Matrix z(static_cast<std::size_t>(vocab_size), static_cast<std::size_t>(dim));
    for (std::size_t r = 0; r < z.rows(); ++r) {
        auto row = z.row(r);
        for (double& v : row) v = rng.normal();
        l2_normalize(row);
    }
    return z;
}

namespace {

// Gram-Schmidt over rows; requires rows <= cols.
void orthonormalize_rows(Matrix& q) {
    for (std::size_t r = 0; r < q.rows(); ++r) {
        auto row = q.row(r);
        for (std::size_t p = 0; p < r; ++p) {
            auto prev = q.row(p);
            double dot = 0.0;
            for (std::size_t c = 0; c < q.cols(); ++c) dot += row[c] * prev[c];
            for (std::size_t c = 0; c < q.cols(); ++c) row[c] -= dot * prev[c];
        }
        l2_normalize(row);
    }
}

Matrix random_orthonormal(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix q(rows, cols);
    for (double& v : q.data()) v = rng.normal();
    orthonormalize_rows(q);
    return q;
}

}  // namespace

ModalityMaps make_modality_maps(const Matrix& codebook0, std::int64_t d_img, std::int64_t d_txt,
                                std::uint64_t seed) {
    Rng rng(derive_seed(seed, kStreamMaps));
    const std::size_t d = codebook0.cols();
    const std::size_t v = codebook0.rows();
    if (static_cast<std::size_t>(d_img) > d) {
        throw ConfigError("modality maps: d_img exceeds codebook dim");
    }
    if (static_cast<std::size_t>(d_txt) != d) {
        throw ConfigError("modality maps: d_txt must equal the codebook dim");
    }
    ModalityMaps maps;
    const Matrix zt = transpose(codebook0);  // d x V
    // Text features live directly in codebook coordinates: the text backbone
    // stand-in emits lexically meaningful features, the way a language
    // model's last hidden state already matches its output embedding space.
    // The image backbone has its own (unknown, rotated) basis; the image
    // projector has to learn the cross-modal map during training.
    maps.m_txt = zt;
    maps.m_img = matmul(random_orthonormal(static_cast<std::size_t>(d_img), d, rng), zt);
    const auto want_img = std::min<std::size_t>(static_cast<std::size_t>(d_img), v);
    const auto want_txt = std::min<std::size_t>(d, v);
    if (matrix_rank(maps.m_img) != want_img || matrix_rank(maps.m_txt) != want_txt) {
        throw std::runtime_error("modality maps: degenerate (rank-deficient) map");
    }
    return maps;
}

std::vector<Concept> gen_concepts(std::int64_t vocab_size, std::int64_t n_concepts,
                                  std::int64_t max_active, std::uint64_t seed) {
    if (max_active < 1 || max_active >= vocab_size) {
        throw ConfigError("gen_concepts: max_active must be in [1, vocab_size)");
    }
    // Distinct-support capacity: sum_{k=1..max_active} C(V, k), saturated.
    double capacity = 0.0;
    double binom = 1.0;
    for (std::int64_t k = 1; k <= max_active && capacity < 1e18; ++k) {
        binom *= static_cast<double>(vocab_size - k + 1) / static_cast<double>(k);
        capacity += binom;
    }
    if (static_cast<double>(n_concepts) > capacity) {
        throw ConfigError("gen_concepts: n_concepts exceeds distinct-support capacity");
    }

    Rng rng(derive_seed(seed, kStreamConcepts));
    std::vector<Concept> concepts;
    concepts.reserve(static_cast<std::size_t>(n_concepts));
    std::set<std::vector<std::int32_t>> seen_supports;
    for (std::int64_t i = 0; i < n_concepts; ++i) {
        std::vector<std::int32_t> support;
        // redraw until the support is new; deterministic given the rng stream
        for (;;) {
            const auto k = static_cast<std::size_t>(1 + rng.below(static_cast<std::uint64_t>(max_active)));
            auto picks = rng.sample_without_replacement(static_cast<std::size_t>(vocab_size), k);
            support.assign(picks.begin(), picks.end());
            std::sort(support.begin(), support.end());
            if (seen_supports.insert(support).second) break;
        }
        std::vector<double> values(support.size());
        for (double& v : values) v = rng.uniform(0.5, 1.5);
        l2_normalize(values);
        Concept c;
        c.id = i;
        c.true_lexical.vocab_size = static_cast<std::int32_t>(vocab_size);
        for (std::size_t j = 0; j < support.size(); ++j) {
            c.true_lexical.entries.emplace_back(support[j], values[j]);
        }
        concepts.push_back(std::move(c));
    }
    return concepts;
}

namespace {

// y = M * dense(s) for a sparse s; M is d x V.
std::vector<double> map_sparse(const Matrix& m, const SparseLexical& s) {
    std::vector<double> out(m.rows(), 0.0);
    for (const auto& [tok, val] : s.entries) {
        for (std::size_t r = 0; r < m.rows(); ++r) {
            out[r] += m(r, static_cast<std::size_t>(tok)) * val;
        }
    }
    return out;
}

}  // namespace

PairedSample gen_pair(const Concept& cpt, double noise_sigma, const ModalityMaps& maps,
                      std::int64_t grid, std::uint64_t seed) {
    if (cpt.true_lexical.entries.empty()) {
        throw std::invalid_argument("gen_pair: concept has empty support");
    }
    Rng rng(seed);
    const auto n_patches = static_cast<std::size_t>(grid * grid);
    PairedSample s;
    s.concept_id = cpt.id;

    std::vector<double> txt = map_sparse(maps.m_txt, cpt.true_lexical);
    for (double& v : txt) v += noise_sigma == 0.0 ? 0.0 : rng.normal(0.0, noise_sigma);
    s.txt_features = Matrix::row_vector(std::move(txt));

    // Round-robin the concept's tokens over a random patch subset so that no
    // single patch sees the whole concept (max-pooling has real work to do).
    const std::size_t n_tokens = cpt.true_lexical.entries.size();
    const std::size_t n_used = std::min(n_patches, n_tokens);
    const auto subset = rng.sample_without_replacement(n_patches, n_used);
    s.ownership.assign(n_patches, {});
    std::vector<SparseLexical> per_patch(n_patches);
    for (std::size_t t = 0; t < n_tokens; ++t) {
        const std::size_t p = subset[t % n_used];
        const auto& entry = cpt.true_lexical.entries[t];
        s.ownership[p].push_back(entry.first);
        per_patch[p].vocab_size = cpt.true_lexical.vocab_size;
        per_patch[p].entries.push_back(entry);
    }
    for (auto& owned : s.ownership) std::sort(owned.begin(), owned.end());

    s.img_features = Matrix(n_patches, maps.m_img.rows());
    for (std::size_t p = 0; p < n_patches; ++p) {
        std::vector<double> feat(maps.m_img.rows(), 0.0);
        if (!per_patch[p].entries.empty()) {
            std::sort(per_patch[p].entries.begin(), per_patch[p].entries.end());
            feat = map_sparse(maps.m_img, per_patch[p]);
        }
        auto row = s.img_features.row(p);
        for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] = feat[c] + (noise_sigma == 0.0 ? 0.0 : rng.normal(0.0, noise_sigma));
        }
    }
    return s;
}

std::vector<std::int32_t> scene_band_labels(std::int64_t n_classes, std::int64_t grid) {
    const auto g = static_cast<std::size_t>(grid);
    const auto c = static_cast<std::size_t>(n_classes);
    std::vector<std::int32_t> labels(g * g, 0);
    // contiguous bands in column-major order: vertical stripes for C <= g
    for (std::size_t col = 0; col < g; ++col) {
        for (std::size_t row = 0; row < g; ++row) {
            const std::size_t idx = col * g + row;
            labels[row * g + col] = static_cast<std::int32_t>(idx * c / (g * g));
        }
    }
    return labels;
}

PatchScene gen_patch_scene(const std::vector<std::int32_t>& class_tokens,
                           const Matrix& class_txt_features, const ModalityMaps& maps,
                           std::int64_t grid, double separation, double noise_sigma,
                           std::uint64_t seed) {
    const auto c = static_cast<std::int64_t>(class_tokens.size());
    if (c < 2) throw ConfigError("gen_patch_scene: need at least 2 classes");
    if (grid * grid < c) throw ConfigError("gen_patch_scene: grid too small for class count");
    {
        std::set<std::int32_t> uniq(class_tokens.begin(), class_tokens.end());
        if (uniq.size() != class_tokens.size()) {
            throw ConfigError("gen_patch_scene: duplicate class tokens");
        }
        for (std::int32_t t : class_tokens) {
            if (t < 0 || static_cast<std::size_t>(t) >= maps.m_img.cols()) {
                throw ConfigError("gen_patch_scene: class token out of vocabulary");
            }
        }
    }
    Rng rng(seed);
    PatchScene scene;
    scene.grid = grid;
    scene.class_tokens = class_tokens;
    scene.class_txt_features = class_txt_features;
    scene.degenerate = separation == 0.0;

    // class -> band assignment varies per scene; bands stay contiguous
    std::vector<std::int32_t> perm(static_cast<std::size_t>(c));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    scene.labels = scene_band_labels(c, grid);
    for (auto& l : scene.labels) l = perm[static_cast<std::size_t>(l)];

    // cluster centers: the mapped class-token columns, rescaled so pairwise
    // center distance meets the separation requirement
    const std::size_t d_img = maps.m_img.rows();
    Matrix centers(static_cast<std::size_t>(c), d_img);
    for (std::size_t k = 0; k < static_cast<std::size_t>(c); ++k) {
        for (std::size_t r = 0; r < d_img; ++r) {
            centers(k, r) = maps.m_img(r, static_cast<std::size_t>(class_tokens[k]));
        }
    }
    double min_dist = 1e300;
    for (std::size_t a = 0; a < centers.rows(); ++a) {
        for (std::size_t b = a + 1; b < centers.rows(); ++b) {
            double acc = 0.0;
            for (std::size_t r = 0; r < d_img; ++r) {
                const double diff = centers(a, r) - centers(b, r);
                acc += diff * diff;
            }
            min_dist = std::min(min_dist, std::sqrt(acc));
        }
    }
    if (separation > 0.0) {
        if (min_dist < 1e-9) {
            throw std::runtime_error("gen_patch_scene: coincident class centers, infeasible");
        }
        const double scale = std::max(1.0, separation / min_dist);
        for (double& v : centers.data()) v *= scale;
    }

    const auto n_patches = static_cast<std::size_t>(grid * grid);
    scene.patch_features = Matrix(n_patches, d_img);
    for (std::size_t p = 0; p < n_patches; ++p) {
        const auto cls = static_cast<std::size_t>(scene.labels[p]);
        auto row = scene.patch_features.row(p);
        for (std::size_t r = 0; r < d_img; ++r) {
            row[r] = centers(cls, r) + (noise_sigma == 0.0 ? 0.0 : rng.normal(0.0, noise_sigma));
        }
    }
    return scene;
}

namespace {

std::vector<double> matrix_row_to_vec(const Matrix& m, std::size_t r) {
    auto row = m.row(r);
    return {row.begin(), row.end()};
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& j) {
    std::vector<std::vector<double>> rows;
    for (const auto& r : j) rows.push_back(r.get<std::vector<double>>());
    return Matrix::from_rows(rows);
}

void run_parallel(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const unsigned workers = std::min<unsigned>(threads, static_cast<unsigned>(n));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace

Dataset generate_dataset(const GenConfig& config, unsigned threads) {
    config.validate();
    Dataset ds;
    ds.config = config;
    ds.vocab = config.vocab_file.empty()
                   ? Vocabulary::synthetic(static_cast<std::size_t>(config.vocab_size))
                   : Vocabulary::load(config.vocab_file);
    if (ds.vocab.size() != static_cast<std::size_t>(config.vocab_size)) {
        throw ConfigError("config key 'vocab_size': does not match vocabulary file (" +
                          std::to_string(ds.vocab.size()) + " tokens)");
    }
    ds.codebook0 = make_initial_codebook(config.vocab_size, config.lexical_dim, config.seed);
    ds.maps = make_modality_maps(ds.codebook0, config.d_img, config.d_txt, config.seed);
    ds.concepts = gen_concepts(config.vocab_size, config.n_concepts, config.max_active,
                               config.seed);

    // Held-out splits are disjoint by concept id; test/val use one pair per
    // concept, so ground-truth vectors are unique within those splits.
    std::vector<std::int64_t> order(static_cast<std::size_t>(config.n_concepts));
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng(derive_seed(config.seed, kStreamSplit));
    split_rng.shuffle(order);
    const auto n_test = static_cast<std::size_t>(config.n_test_pairs);
    const auto n_val = static_cast<std::size_t>(config.n_val_pairs);
    ds.test_concepts.assign(order.begin(), order.begin() + n_test);
    ds.val_concepts.assign(order.begin() + n_test, order.begin() + n_test + n_val);
    ds.train_concepts.assign(order.begin() + n_test + n_val, order.end());

    auto gen_split = [&](std::vector<PairedSample>& out, const std::vector<std::int64_t>& ids,
                         std::int64_t n_pairs, bool one_per_concept, std::uint64_t uid_base) {
        out.assign(static_cast<std::size_t>(n_pairs), {});
        run_parallel(out.size(), threads, [&](std::size_t i) {
            const std::size_t ci = one_per_concept ? i : i % ids.size();
            const Concept& cpt = ds.concepts[static_cast<std::size_t>(ids[ci])];
            PairedSample s = gen_pair(cpt, config.noise_sigma, ds.maps, config.grid,
                                      derive_seed(config.seed, kStreamPairBase + uid_base + i));
            s.id = static_cast<std::int64_t>(i);
            out[i] = std::move(s);
        });
    };

    if (config.n_train_pairs > 0 && ds.train_concepts.empty()) {
        throw ConfigError("config key 'n_concepts': no concepts left for the training split");
    }
    gen_split(ds.train, ds.train_concepts, config.n_train_pairs, false, 0);
    gen_split(ds.val, ds.val_concepts, config.n_val_pairs, true, 1u << 24);
    gen_split(ds.test, ds.test_concepts, config.n_test_pairs, true, 2u << 24);

    if (config.n_scenes > 0) {
        // class tokens: frequent tokens in the training pairs, so a trained
        // model has actually seen them
        std::map<std::int32_t, std::int64_t> counts;
        for (const PairedSample& s : ds.train) {
            const Concept& c = ds.concepts[static_cast<std::size_t>(s.concept_id)];
            for (const auto& [tok, _] : c.true_lexical.entries) ++counts[tok];
        }
        std::vector<std::pair<std::int64_t, std::int32_t>> ranked;  // (-count, token)
        ranked.reserve(counts.size());
        for (const auto& [tok, n] : counts) ranked.emplace_back(-n, tok);
        std::sort(ranked.begin(), ranked.end());
        const auto c_count = static_cast<std::size_t>(config.scene_classes);
        if (ranked.size() < c_count) {
            throw ConfigError("config key 'scene_classes': not enough distinct trained tokens");
        }
        const std::size_t pool = std::min(ranked.size(), std::max<std::size_t>(c_count * 4, c_count));
        Rng pick_rng(derive_seed(config.seed, kStreamClassPick));
        auto picks = pick_rng.sample_without_replacement(pool, c_count);
        std::sort(picks.begin(), picks.end());
        for (std::size_t p : picks) ds.scene_class_tokens.push_back(ranked[p].second);

        Matrix class_txt(c_count, static_cast<std::size_t>(config.d_txt));
        for (std::size_t k = 0; k < c_count; ++k) {
            SparseLexical onehot;
            onehot.vocab_size = static_cast<std::int32_t>(config.vocab_size);
            onehot.entries.emplace_back(ds.scene_class_tokens[k], 1.0);
            const auto feat = map_sparse(ds.maps.m_txt, onehot);
            auto row = class_txt.row(k);
            std::copy(feat.begin(), feat.end(), row.begin());
        }

        ds.scenes.assign(static_cast<std::size_t>(config.n_scenes), {});
        run_parallel(ds.scenes.size(), threads, [&](std::size_t i) {
            PatchScene scene = gen_patch_scene(ds.scene_class_tokens, class_txt, ds.maps,
                                               config.grid, config.scene_separation,
                                               config.scene_noise_sigma,
                                               derive_seed(config.seed, kStreamSceneBase + i));
            scene.id = static_cast<std::int64_t>(i);
            ds.scenes[i] = std::move(scene);
        });
    }
    return ds;
}

std::string paired_sample_to_jsonl(const PairedSample& s) {
    json j;
    j["id"] = s.id;
    j["concept"] = s.concept_id;
    j["img"] = matrix_to_json(s.img_features);
    j["txt"] = json(matrix_row_to_vec(s.txt_features, 0));
    j["ownership"] = s.ownership;
    return j.dump();
}

PairedSample paired_sample_from_jsonl(const std::string& line) {
    const json j = json::parse(line);
    PairedSample s;
    s.id = j.at("id").get<std::int64_t>();
    s.concept_id = j.at("concept").get<std::int64_t>();
    s.img_features = matrix_from_json(j.at("img"));
    s.txt_features = Matrix::row_vector(j.at("txt").get<std::vector<double>>());
    s.ownership = j.at("ownership").get<std::vector<std::vector<std::int32_t>>>();
    return s;
}

std::string scene_to_jsonl(const PatchScene& s) {
    json j;
    j["id"] = s.id;
    j["grid"] = s.grid;
    j["labels"] = s.labels;
    j["patches"] = matrix_to_json(s.patch_features);
    j["class_tokens"] = s.class_tokens;
    j["class_txt"] = matrix_to_json(s.class_txt_features);
    j["degenerate"] = s.degenerate;
    return j.dump();
}

PatchScene scene_from_jsonl(const std::string& line) {
    const json j = json::parse(line);
    PatchScene s;
    s.id = j.at("id").get<std::int64_t>();
    s.grid = j.at("grid").get<std::int64_t>();
    s.labels = j.at("labels").get<std::vector<std::int32_t>>();
    s.patch_features = matrix_from_json(j.at("patches"));
    s.class_tokens = j.at("class_tokens").get<std::vector<std::int32_t>>();
    s.class_txt_features = matrix_from_json(j.at("class_txt"));
    s.degenerate = j.at("degenerate").get<bool>();
    return s;
}

namespace {

void write_jsonl(const std::filesystem::path& p, const std::vector<std::string>& lines) {
    std::string body;
    for (const auto& l : lines) {
        body += l;
        body += '\n';
    }
    write_text_file(p, body);
}

constexpr char kCodebookMagic[9] = "LXALNCB1";

void write_codebook_file(const std::filesystem::path& p, const Matrix& z) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os.write(kCodebookMagic, 8);
    write_matrix(os, z);
}

Matrix read_codebook_file(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw ConfigError("cannot open codebook file: " + p.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::string(magic, 8) != std::string(kCodebookMagic, 8)) {
        throw std::runtime_error("bad codebook magic in " + p.string());
    }
    return read_matrix(is);
}

}  // namespace

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    ds.vocab.save(dir / "vocab.txt");
    write_codebook_file(dir / "codebook.bin", ds.codebook0);

    std::vector<std::string> lines;
    lines.reserve(ds.concepts.size());
    for (const auto& c : ds.concepts) lines.push_back(sparse_to_jsonl(c.id, c.true_lexical));
    write_jsonl(dir / "concepts.jsonl", lines);

    auto dump_split = [&](const std::vector<PairedSample>& split, const std::string& name) {
        std::vector<std::string> ls;
        ls.reserve(split.size());
        for (const auto& s : split) ls.push_back(paired_sample_to_jsonl(s));
        write_jsonl(dir / (name + ".jsonl"), ls);
    };
    dump_split(ds.train, "train");
    dump_split(ds.val, "val");
    dump_split(ds.test, "test");

    lines.clear();
    for (const auto& s : ds.scenes) lines.push_back(scene_to_jsonl(s));
    write_jsonl(dir / "scenes.jsonl", lines);

    // ground-truth lexical vectors of the test split, doc id = test index;
    // the upper-bound retrieval oracle reads these directly
    lines.clear();
    for (std::size_t i = 0; i < ds.test.size(); ++i) {
        const auto& cpt = ds.concepts[static_cast<std::size_t>(ds.test[i].concept_id)];
        lines.push_back(sparse_to_jsonl(static_cast<std::int64_t>(i), cpt.true_lexical));
    }
    write_jsonl(dir / "truth_test.jsonl", lines);

    json manifest;
    manifest["format"] = "lexalign-dataset";
    manifest["version"] = 1;
    manifest["config"] = ds.config.to_kv();
    manifest["config_hash"] = hash_hex(ds.config.hash());
    manifest["seed"] = ds.config.seed;
    manifest["files"] = {{"vocab", "vocab.txt"},       {"codebook", "codebook.bin"},
                         {"concepts", "concepts.jsonl"}, {"train", "train.jsonl"},
                         {"val", "val.jsonl"},         {"test", "test.jsonl"},
                         {"scenes", "scenes.jsonl"},   {"truth_test", "truth_test.jsonl"}};
    manifest["splits"] = {{"train", ds.train.size()},
                          {"val", ds.val.size()},
                          {"test", ds.test.size()},
                          {"train_concepts", ds.train_concepts},
                          {"val_concepts", ds.val_concepts},
                          {"test_concepts", ds.test_concepts}};
    manifest["scene_class_tokens"] = ds.scene_class_tokens;
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw ConfigError("cannot open " + p.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

}  // namespace

const std::vector<PairedSample>& LoadedDataset::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw ConfigError("unknown split '" + name + "' (train|val|test)");
}

LoadedDataset load_dataset(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    const json manifest = json::parse(read_text_file(manifest_path));
    if (manifest.at("format").get<std::string>() != "lexalign-dataset") {
        throw ConfigError(manifest_path.string() + ": not a dataset manifest");
    }
    LoadedDataset ds;
    ds.dir = dir;
    KvMap kv;
    for (const auto& [k, v] : manifest.at("config").items()) kv[k] = v.get<std::string>();
    // vocab_file paths may be relative to the original cwd; the persisted
    // vocab.txt is authoritative
    kv["vocab_file"] = "";
    ds.config = GenConfig::from_kv(kv);
    ds.config.vocab_file = manifest.at("config").at("vocab_file").get<std::string>();
    ds.config_hash = std::stoull(manifest.at("config_hash").get<std::string>(), nullptr, 16);
    ds.vocab = Vocabulary::load(dir / "vocab.txt");
    ds.codebook0 = read_codebook_file(dir / "codebook.bin");

    for (const auto& line : read_lines(dir / "concepts.jsonl")) {
        auto [id, vec] = sparse_from_jsonl(line, static_cast<std::int32_t>(ds.config.vocab_size));
        Concept c;
        c.id = id;
        c.true_lexical = std::move(vec);
        ds.concepts.push_back(std::move(c));
    }
    auto load_split = [&](std::vector<PairedSample>& out, const std::string& name) {
        const auto p = dir / (name + ".jsonl");
        if (!std::filesystem::exists(p)) return;
        for (const auto& line : read_lines(p)) out.push_back(paired_sample_from_jsonl(line));
    };
    load_split(ds.train, "train");
    load_split(ds.val, "val");
    load_split(ds.test, "test");
    const auto scenes_path = dir / "scenes.jsonl";
    if (std::filesystem::exists(scenes_path)) {
        for (const auto& line : read_lines(scenes_path)) {
            ds.scenes.push_back(scene_from_jsonl(line));
        }
    }
    return ds;
}

}  // namespace lexalign
