#include "lexalign/patchdis.hpp"

#include <set>
#include <stdexcept>

#include "lexalign/rng.hpp"

namespace lexalign {

ClassEmbeddingSet class_embeddings(const EncoderParams& params, const Matrix& class_txt_features,
                                   const std::vector<std::int32_t>& class_tokens) {
    if (class_txt_features.rows() != class_tokens.size() || class_tokens.size() < 2) {
        throw std::invalid_argument("class_embeddings: need >= 2 classes with matching features");
    }
    {
        std::set<std::int32_t> uniq(class_tokens.begin(), class_tokens.end());
        if (uniq.size() != class_tokens.size()) {
            throw std::invalid_argument("class_embeddings: duplicate class names");
        }
    }
    const auto v = static_cast<std::int32_t>(params.z_txt.vocab_size());
    for (std::int32_t t : class_tokens) {
        if (t < 0 || t >= v) {
            throw std::invalid_argument("class_embeddings: unknown class token " +
                                        std::to_string(t));
        }
    }
    ClassEmbeddingSet out;
    out.class_tokens = class_tokens;
    out.embeddings.reserve(class_tokens.size());
    for (std::size_t c = 0; c < class_tokens.size(); ++c) {
        Matrix row(1, class_txt_features.cols());
        auto src = class_txt_features.row(c);
        std::copy(src.begin(), src.end(), row.row(0).begin());
        out.embeddings.push_back(encode_text(params, row));
    }
    return out;
}

std::vector<std::int32_t> classify_patches(const EncoderParams& params, const PatchScene& scene,
                                           const ClassEmbeddingSet& classes) {
    const std::size_t n_patches = scene.patch_features.rows();
    // project every patch once, then score each row through the head
    const Matrix z = project_rows(params.img, scene.patch_features);
    std::vector<std::int32_t> pred(n_patches, 0);
    for (std::size_t p = 0; p < n_patches; ++p) {
        const DenseLexical lex = patch_lexical(z, params.z_img, {p});
        std::int32_t best = 0;
        double best_score = -1.0;
        for (std::size_t c = 0; c < classes.class_count(); ++c) {
            double score = 0.0;
            const auto& emb = classes.embeddings[c].values;
            for (std::size_t j = 0; j < emb.size(); ++j) score += lex.values[j] * emb[j];
            if (score > best_score) {  // strict: ties stay on the lowest class id
                best_score = score;
                best = static_cast<std::int32_t>(c);
            }
        }
        pred[p] = best;
    }
    return pred;
}

IoUResult miou(const std::vector<std::int32_t>& pred, const std::vector<std::int32_t>& gt,
               std::size_t n_classes) {
    if (pred.size() != gt.size() || pred.empty()) {
        throw std::invalid_argument("miou: prediction/ground-truth grid mismatch");
    }
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] < 0 || static_cast<std::size_t>(pred[i]) >= n_classes || gt[i] < 0 ||
            static_cast<std::size_t>(gt[i]) >= n_classes) {
            throw std::invalid_argument("miou: class id out of range");
        }
    }
    IoUResult out;
    out.per_class.assign(n_classes, 0.0);
    out.present.assign(n_classes, false);
    std::vector<std::size_t> inter(n_classes, 0), pred_n(n_classes, 0), gt_n(n_classes, 0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        ++pred_n[static_cast<std::size_t>(pred[i])];
        ++gt_n[static_cast<std::size_t>(gt[i])];
        if (pred[i] == gt[i]) ++inter[static_cast<std::size_t>(gt[i])];
    }
    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        if (gt_n[c] == 0) continue;  // absent classes never count (not even as 1.0)
        out.present[c] = true;
        const std::size_t uni = pred_n[c] + gt_n[c] - inter[c];
        out.per_class[c] = static_cast<double>(inter[c]) / static_cast<double>(uni);
        sum += out.per_class[c];
        ++counted;
    }
    if (counted == 0) throw std::invalid_argument("miou: ground truth has no classes");
    out.mean = sum / static_cast<double>(counted);
    return out;
}

PatchDisReport eval_patchdis(const EncoderParams& params,
                             const std::vector<PatchScene>& scenes) {
    if (scenes.empty()) throw std::invalid_argument("eval_patchdis: empty scene set");
    const std::size_t n_classes = scenes.front().class_tokens.size();
    PatchDisReport report;
    report.n_scenes = scenes.size();
    report.class_mean_iou.assign(n_classes, 0.0);
    report.class_support.assign(n_classes, 0);
    std::vector<std::size_t> class_scenes(n_classes, 0);

    double total = 0.0;
    for (const PatchScene& scene : scenes) {
        if (scene.class_tokens.size() != n_classes) {
            throw std::invalid_argument("eval_patchdis: scenes disagree on class count");
        }
        const ClassEmbeddingSet classes =
            class_embeddings(params, scene.class_txt_features, scene.class_tokens);
        const auto pred = classify_patches(params, scene, classes);
        const IoUResult res = miou(pred, scene.labels, n_classes);
        total += res.mean;
        for (std::size_t c = 0; c < n_classes; ++c) {
            if (!res.present[c]) continue;
            report.class_mean_iou[c] += res.per_class[c];
            ++class_scenes[c];
        }
        for (std::int32_t l : scene.labels) ++report.class_support[static_cast<std::size_t>(l)];
    }
    report.mean_miou = total / static_cast<double>(scenes.size());
    for (std::size_t c = 0; c < n_classes; ++c) {
        if (class_scenes[c] > 0) {
            report.class_mean_iou[c] /= static_cast<double>(class_scenes[c]);
        }
    }
    return report;
}

double random_patchdis_baseline(const std::vector<PatchScene>& scenes, std::size_t trials,
                                std::uint64_t seed) {
    if (scenes.empty() || trials == 0) {
        throw std::invalid_argument("random_patchdis_baseline: nothing to simulate");
    }
    const std::size_t n_classes = scenes.front().class_tokens.size();
    Rng rng(seed);
    double total = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        double per_trial = 0.0;
        for (const PatchScene& scene : scenes) {
            std::vector<std::int32_t> pred(scene.labels.size());
            for (auto& p : pred) {
                p = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(n_classes)));
            }
            per_trial += miou(pred, scene.labels, n_classes).mean;
        }
        total += per_trial / static_cast<double>(scenes.size());
    }
    return total / static_cast<double>(trials);
}

}  // namespace lexalign
