#pragma once

#include <cstdint>
#include <string>

#include "lexalign/matrix.hpp"

namespace lexalign {

/// N x V matrix whose row i is the lexical representation of sample i.
using BatchLexical = Matrix;

/// Learnable softmax temperature with the CLIP-style cap on the inverse:
/// the effective logit scale is min(1/tau, max_inverse).
struct Temperature {
    double tau = 0.07;
    double max_inverse = 100.0;

    double logit_scale() const;
};

/// Penalty weights with quadratic warmup: lambda(step) =
/// lambda_final * min(1, (step/warmup_steps)^2).
struct PenaltySchedule {
    double lambda_img = 5e-4;
    double lambda_txt = 1e-3;
    std::int64_t warmup_steps = 1;
};

enum class PenaltyKind { Overuse, Flops, None };

std::string to_string(PenaltyKind k);
PenaltyKind penalty_kind_from_string(const std::string& s);

/// One direction of the contrastive loss: mean over rows of -log softmax of
/// the diagonal similarity, logits = (S_a S_b^T) * logit_scale.
double info_nce(const BatchLexical& s_a, const BatchLexical& s_b, const Temperature& temp);

/// Sum over tokens of the squared batch-mean activation.
double flops_loss(const BatchLexical& s);

/// Frequency-weighted FLOPs variant: V * sum_j (m_j / sum_k m_k) * m_j^2 with
/// m_j the batch-mean activation of token j. Errors on an all-zero batch.
double overuse_penalty(const BatchLexical& s);

std::pair<double, double> lambda_at(const PenaltySchedule& schedule, std::int64_t step);

struct LossBreakdown {
    double l_t2i = 0.0;
    double l_i2t = 0.0;
    double penalty_img = 0.0;  // unweighted penalty value
    double penalty_txt = 0.0;
    double lambda_img = 0.0;
    double lambda_txt = 0.0;
    double total = 0.0;
};

LossBreakdown total_objective(const BatchLexical& s_img, const BatchLexical& s_txt,
                              const Temperature& temp, const PenaltySchedule& schedule,
                              std::int64_t step, PenaltyKind kind = PenaltyKind::Overuse);

}  // namespace lexalign
