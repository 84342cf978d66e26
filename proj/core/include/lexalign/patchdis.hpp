#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lexalign/lexical.hpp"
#include "lexalign/synth.hpp"
#include "lexalign/trainer.hpp"

namespace lexalign {

/// One lexical vector per class, obtained by encoding the class token's text
/// features through the trained text encoder.
struct ClassEmbeddingSet {
    std::vector<std::int32_t> class_tokens;
    std::vector<DenseLexical> embeddings;

    std::size_t class_count() const { return embeddings.size(); }
};

ClassEmbeddingSet class_embeddings(const EncoderParams& params, const Matrix& class_txt_features,
                                   const std::vector<std::int32_t>& class_tokens);

/// Zero-shot per-patch classification: each patch's single-patch lexical
/// vector is scored against every class embedding; argmax wins, ties go to
/// the lowest class id.
std::vector<std::int32_t> classify_patches(const EncoderParams& params, const PatchScene& scene,
                                           const ClassEmbeddingSet& classes);

struct IoUResult {
    std::vector<double> per_class;     // valid only where present[c]
    std::vector<bool> present;         // class appears in the ground truth
    double mean = 0.0;                 // over classes present in gt
};

/// Intersection-over-union on patch sets, macro-averaged over the classes
/// present in the ground truth; classes absent from both sides are excluded.
IoUResult miou(const std::vector<std::int32_t>& pred, const std::vector<std::int32_t>& gt,
               std::size_t n_classes);

struct PatchDisReport {
    double mean_miou = 0.0;                    // mean over scenes of per-scene mIoU
    std::vector<double> class_mean_iou;        // per class, over scenes where present
    std::vector<std::size_t> class_support;    // total gt patches per class
    std::size_t n_scenes = 0;
};

PatchDisReport eval_patchdis(const EncoderParams& params, const std::vector<PatchScene>& scenes);

/// Monte-Carlo expectation of the report's mean mIoU under uniform-random
/// patch predictions on the same scene set.
double random_patchdis_baseline(const std::vector<PatchScene>& scenes, std::size_t trials,
                                std::uint64_t seed);

}  // namespace lexalign
