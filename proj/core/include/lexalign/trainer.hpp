#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lexalign/io.hpp"
#include "lexalign/lexical.hpp"
#include "lexalign/losses.hpp"
#include "lexalign/synth.hpp"
#include "lexalign/tape.hpp"

namespace lexalign {

/// Two-layer per-row projector: y = tanh(x W1 + b1) W2 + b2.
struct Projector {
    Matrix w1;  // d_in x hidden
    Matrix b1;  // 1 x hidden
    Matrix w2;  // hidden x d
    Matrix b2;  // 1 x d
};

struct EncoderParams {
    Projector txt;
    Projector img;
    Codebook z_txt;  // frozen
    Codebook z_img;  // trainable, initialized as a copy of z_txt
    double log_inv_tau = 0.0;  // temperature learned in log space
    double max_inverse = 100.0;

    double tau() const;
    Temperature temperature() const;
};

EncoderParams init_encoder_params(const Matrix& codebook0, std::int64_t d_img, std::int64_t d_txt,
                                  std::int64_t hidden, double tau_init, double max_inverse,
                                  std::uint64_t seed);

Matrix project_rows(const Projector& proj, const Matrix& x);

DenseLexical encode_text(const EncoderParams& params, const Matrix& txt_features);
DenseLexical encode_image(const EncoderParams& params, const Matrix& img_features);
DenseLexical encode_patches(const EncoderParams& params, const Matrix& img_features,
                            const std::vector<std::size_t>& patch_ids);

// ---------------------------------------------------------------------------

struct TrainConfig {
    double lr = 5e-3;
    std::int64_t batch_size = 64;
    std::int64_t epochs = 30;
    std::int64_t warmup_iters = 100;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-6;
    double lambda_img = 5e-4;
    double lambda_txt = 1e-3;
    std::int64_t penalty_warmup_steps = 200;
    std::uint64_t seed = 1;
    PenaltyKind penalty_kind = PenaltyKind::Overuse;
    std::int64_t proj_hidden = 64;
    double tau_init = 0.07;
    double max_inverse_temp = 100.0;
    std::int64_t max_steps = 0;  // 0 = run all epochs; excluded from the hash

    static TrainConfig desk_profile();
    static TrainConfig paper_profile();
    static TrainConfig from_kv(const KvMap& kv);
    KvMap to_kv() const;
    void validate() const;
    /// Hash over the schedule-relevant fields (max_steps excluded so an
    /// interrupted run can resume against the same config).
    std::uint64_t hash() const;
};

struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    std::int64_t t = 0;
};

struct Checkpoint {
    TrainConfig config;
    std::uint64_t dataset_hash = 0;
    std::int64_t step = 0;
    EncoderParams params;
    AdamState adam;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& p);
Checkpoint load_checkpoint(const std::filesystem::path& p);

/// Linear warmup to the peak, then cosine decay to zero over the rest.
double cosine_lr(double peak, std::int64_t step, std::int64_t warmup_iters,
                 std::int64_t total_steps);

/// The static pipeline graph: built once per run, leaf values updated in
/// place between steps. Parameter node order matches trainable() and the
/// checkpoint tensor order.
struct TrainingGraph {
    Tape tape;
    NodeId in_img = 0, in_txt = 0;
    NodeId txt_w1 = 0, txt_b1 = 0, txt_w2 = 0, txt_b2 = 0;
    NodeId img_w1 = 0, img_b1 = 0, img_w2 = 0, img_b2 = 0;
    NodeId z_img = 0, z_txt = 0, log_inv_tau = 0;
    NodeId s_img = 0, s_txt = 0;
    NodeId l_t2i = 0, l_i2t = 0, pen_img = 0, pen_txt = 0, total = 0;
    PenaltyKind penalty = PenaltyKind::Overuse;
    std::size_t n_patches = 0;

    std::vector<NodeId> trainable() const;
    void load_params(const EncoderParams& p);
    void store_params(EncoderParams& p) const;
    void set_lambdas(double lambda_img, double lambda_txt);
};

TrainingGraph build_training_graph(const EncoderParams& init, std::size_t batch,
                                   std::size_t n_patches, PenaltyKind kind);

struct MetricsRow {
    std::int64_t step = 0;
    double l_t2i = 0.0;
    double l_i2t = 0.0;
    double overuse_img = 0.0;  // active penalty value (overuse or flops)
    double overuse_txt = 0.0;
    double tau = 0.0;
    double lambda_img = 0.0;
    double lambda_txt = 0.0;

    static std::string csv_header();
    std::string csv_line() const;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<MetricsRow> metrics;
};

using StepCallback = std::function<void(const MetricsRow&)>;

/// Deterministic under (config.seed, dataset): batch composition is a pure
/// function of (seed, epoch, step). Z_txt is never written. Throws on a
/// non-finite loss, naming the offending graph node.
TrainResult train(const TrainConfig& config, const LoadedDataset& dataset,
                  const StepCallback& on_step = nullptr);

/// Continues an interrupted run as if it had never stopped. Errors if the
/// checkpoint's dataset hash does not match the dataset manifest.
TrainResult resume(const Checkpoint& checkpoint, const LoadedDataset& dataset,
                   std::int64_t max_steps = 0, const StepCallback& on_step = nullptr);

}  // namespace lexalign
