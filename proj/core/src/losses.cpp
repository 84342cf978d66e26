#include "lexalign/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lexalign {

double Temperature::logit_scale() const {
    if (!(tau > 0.0)) throw std::invalid_argument("Temperature: tau must be positive");
    if (!(max_inverse > 0.0)) throw std::invalid_argument("Temperature: max_inverse must be positive");
    return std::min(1.0 / tau, max_inverse);
}

std::string to_string(PenaltyKind k) {
    switch (k) {
        case PenaltyKind::Overuse: return "overuse";
        case PenaltyKind::Flops: return "flops";
        case PenaltyKind::None: return "none";
    }
    return "?";
}

PenaltyKind penalty_kind_from_string(const std::string& s) {
    if (s == "overuse") return PenaltyKind::Overuse;
    if (s == "flops") return PenaltyKind::Flops;
    if (s == "none") return PenaltyKind::None;
    throw std::invalid_argument("unknown penalty kind '" + s + "' (overuse|flops|none)");
}

double info_nce(const BatchLexical& s_a, const BatchLexical& s_b, const Temperature& temp) {
    if (!s_a.same_shape(s_b)) {
        throw std::invalid_argument("info_nce: batch shapes differ (" + shape_string(s_a) +
                                    " vs " + shape_string(s_b) + ")");
    }
    const std::size_t n = s_a.rows();
    if (n < 2) throw std::invalid_argument("info_nce: contrastive loss needs N >= 2");
    const double scale = temp.logit_scale();

    const Matrix sim = matmul_nt(s_a, s_b);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double max_logit = -1e300;
        for (std::size_t j = 0; j < n; ++j) max_logit = std::max(max_logit, sim(i, j) * scale);
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) denom += std::exp(sim(i, j) * scale - max_logit);
        loss += std::log(denom) + max_logit - sim(i, i) * scale;
    }
    return loss / static_cast<double>(n);
}

namespace {

std::vector<double> column_means(const BatchLexical& s) {
    const std::size_t n = s.rows(), v = s.cols();
    if (n == 0) throw std::invalid_argument("empty batch");
    std::vector<double> means(v, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = s.row(i);
        for (std::size_t j = 0; j < v; ++j) means[j] += row[j];
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (double& m : means) m *= inv;
    return means;
}

}  // namespace

double flops_loss(const BatchLexical& s) {
    double acc = 0.0;
    for (double m : column_means(s)) acc += m * m;
    return acc;
}

double overuse_penalty(const BatchLexical& s) {
    const std::vector<double> means = column_means(s);
    double total = 0.0, cubes = 0.0;
    for (double m : means) {
        if (m < 0.0) throw std::invalid_argument("overuse_penalty: negative activation");
        total += m;
        cubes += m * m * m;
    }
    if (!(total > 0.0)) {
        throw std::invalid_argument("overuse_penalty: all-zero batch (undefined)");
    }
    return static_cast<double>(means.size()) * cubes / total;
}

std::pair<double, double> lambda_at(const PenaltySchedule& schedule, std::int64_t step) {
    if (step < 0) throw std::invalid_argument("lambda_at: negative step");
    if (schedule.warmup_steps < 1) throw std::invalid_argument("lambda_at: warmup_steps must be >= 1");
    const double t = static_cast<double>(step) / static_cast<double>(schedule.warmup_steps);
    const double ramp = std::min(1.0, t * t);
    return {schedule.lambda_img * ramp, schedule.lambda_txt * ramp};
}

LossBreakdown total_objective(const BatchLexical& s_img, const BatchLexical& s_txt,
                              const Temperature& temp, const PenaltySchedule& schedule,
                              std::int64_t step, PenaltyKind kind) {
    LossBreakdown out;
    out.l_t2i = info_nce(s_txt, s_img, temp);
    out.l_i2t = info_nce(s_img, s_txt, temp);
    std::tie(out.lambda_img, out.lambda_txt) = lambda_at(schedule, step);
    switch (kind) {
        case PenaltyKind::Overuse:
            out.penalty_img = overuse_penalty(s_img);
            out.penalty_txt = overuse_penalty(s_txt);
            break;
        case PenaltyKind::Flops:
            out.penalty_img = flops_loss(s_img);
            out.penalty_txt = flops_loss(s_txt);
            break;
        case PenaltyKind::None:
            out.lambda_img = 0.0;
            out.lambda_txt = 0.0;
            break;
    }
    out.total = out.l_t2i + out.l_i2t + out.lambda_img * out.penalty_img +
                out.lambda_txt * out.penalty_txt;
    return out;
}

}  // namespace lexalign
