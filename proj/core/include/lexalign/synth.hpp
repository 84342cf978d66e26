#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lexalign/io.hpp"
#include "lexalign/lexical.hpp"
#include "lexalign/matrix.hpp"
#include "lexalign/vocab.hpp"

namespace lexalign {

/// Generator configuration; mirrors the flat key=value config file.
struct GenConfig {
    std::int64_t vocab_size = 256;  // V
    std::int64_t lexical_dim = 64;  // codebook dim d
    std::int64_t d_img = 64;
    std::int64_t d_txt = 64;
    std::int64_t grid = 4;  // g; patches per image = g*g
    std::int64_t n_concepts = 1024;
    std::int64_t max_active = 4;
    std::int64_t n_train_pairs = 4096;
    std::int64_t n_val_pairs = 64;
    std::int64_t n_test_pairs = 256;
    double noise_sigma = 0.05;
    std::uint64_t seed = 7;
    std::int64_t n_scenes = 32;
    std::int64_t scene_classes = 5;
    double scene_separation = 1.0;
    double scene_noise_sigma = 0.05;
    std::string vocab_file;  // empty = synthesize tok### names

    static GenConfig from_kv(const KvMap& kv);
    KvMap to_kv() const;
    void validate() const;
    std::uint64_t hash() const;
};

/// Ground-truth semantics of one image/caption pair: the set of active
/// vocabulary tokens with their weights (unit-norm).
struct Concept {
    std::int64_t id = 0;
    SparseLexical true_lexical;
};

/// One multi-modal sample. Image features are a g*g patch grid; each patch
/// carries a subset of the concept's tokens so that recovering the full
/// concept genuinely requires pooling over patches.
struct PairedSample {
    std::int64_t id = 0;
    std::int64_t concept_id = 0;
    Matrix img_features;  // (g*g) x d_img
    Matrix txt_features;  // 1 x d_txt
    std::vector<std::vector<std::int32_t>> ownership;  // per patch: owned token ids
};

/// Labeled grid for the patch-level discrimination metric. Class c's text
/// side is the feature vector of the class token, the input a text encoder
/// sees for that "class name".
struct PatchScene {
    std::int64_t id = 0;
    std::int64_t grid = 0;
    std::vector<std::int32_t> labels;        // g*g, row-major
    Matrix patch_features;                   // (g*g) x d_img
    std::vector<std::int32_t> class_tokens;  // C distinct vocabulary ids
    Matrix class_txt_features;               // C x d_txt
    bool degenerate = false;
};

/// Fixed full-rank linear maps standing in for the frozen backbones: a
/// feature is an (unknown-basis) linear image of the dense lexical vector.
struct ModalityMaps {
    Matrix m_img;  // d_img x V
    Matrix m_txt;  // d_txt x V
};

Matrix make_initial_codebook(std::int64_t vocab_size, std::int64_t dim, std::uint64_t seed);

/// Maps are built as Q_i * Z0^T with Q_i random orthonormal, so features live
/// in the initial codebook's geometry (the frozen-backbone abstraction).
/// Throws on rank-deficient results.
ModalityMaps make_modality_maps(const Matrix& codebook0, std::int64_t d_img, std::int64_t d_txt,
                                std::uint64_t seed);

std::vector<Concept> gen_concepts(std::int64_t vocab_size, std::int64_t n_concepts,
                                  std::int64_t max_active, std::uint64_t seed);

PairedSample gen_pair(const Concept& cpt, double noise_sigma, const ModalityMaps& maps,
                      std::int64_t grid, std::uint64_t seed);

/// Unpermuted contiguous class layout (column-major bands); C=2, g=2 gives
/// the left/right split [0,1,0,1].
std::vector<std::int32_t> scene_band_labels(std::int64_t n_classes, std::int64_t grid);

PatchScene gen_patch_scene(const std::vector<std::int32_t>& class_tokens,
                           const Matrix& class_txt_features, const ModalityMaps& maps,
                           std::int64_t grid, double separation, double noise_sigma,
                           std::uint64_t seed);

/// Fully generated in-memory dataset.
struct Dataset {
    GenConfig config;
    Vocabulary vocab;
    Matrix codebook0;  // V x d, persisted and used as the frozen text codebook
    ModalityMaps maps;
    std::vector<Concept> concepts;
    std::vector<std::int64_t> train_concepts, val_concepts, test_concepts;
    std::vector<PairedSample> train, val, test;
    std::vector<PatchScene> scenes;
    std::vector<std::int32_t> scene_class_tokens;
};

Dataset generate_dataset(const GenConfig& config, unsigned threads = 1);

/// Writes vocab.txt, codebook.bin, concepts.jsonl, {train,val,test}.jsonl,
/// scenes.jsonl, truth_test.jsonl and manifest.json into `dir`.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);

/// On-disk dataset handle; loads the manifest plus whatever splits exist.
struct LoadedDataset {
    GenConfig config;
    std::uint64_t config_hash = 0;
    std::filesystem::path dir;
    Vocabulary vocab;
    Matrix codebook0;
    std::vector<Concept> concepts;
    std::vector<PairedSample> train, val, test;
    std::vector<PatchScene> scenes;

    const std::vector<PairedSample>& split(const std::string& name) const;
};

LoadedDataset load_dataset(const std::filesystem::path& dir);

std::string paired_sample_to_jsonl(const PairedSample& s);
PairedSample paired_sample_from_jsonl(const std::string& line);
std::string scene_to_jsonl(const PatchScene& s);
PatchScene scene_from_jsonl(const std::string& line);

}  // namespace lexalign
