#include "lexalign/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "lexalign/rng.hpp"

namespace lexalign {

double EncoderParams::tau() const { return std::exp(-log_inv_tau); }

Temperature EncoderParams::temperature() const {
    return Temperature{.tau = tau(), .max_inverse = max_inverse};
}

namespace {

Matrix random_weights(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix w(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
    for (double& v : w.data()) v = rng.normal(0.0, scale);
    return w;
}

Projector init_projector(std::size_t d_in, std::size_t hidden, std::size_t d_out, Rng& rng) {
    Projector p;
    p.w1 = random_weights(d_in, hidden, rng);
    p.b1 = Matrix(1, hidden);
    p.w2 = random_weights(hidden, d_out, rng);
    p.b2 = Matrix(1, d_out);
    return p;
}

// The text path starts as a working lexical scorer and is only fine-tuned:
// its features already live in the frozen codebook's coordinates, so the
// projector initializes to a scaled near-identity (squeeze through the tanh
// linear region, then amplify). The image projector starts from scratch.
Projector init_near_identity_projector(std::size_t d_in, std::size_t hidden, std::size_t d_out,
                                       double gain, Rng& rng) {
    const double squeeze = 0.1;
    const double jitter = 0.01;  // keeps spare hidden units trainable
    Projector p;
    p.w1 = random_weights(d_in, hidden, rng);
    p.w2 = random_weights(hidden, d_out, rng);
    for (double& v : p.w1.data()) v *= jitter;
    for (double& v : p.w2.data()) v *= jitter;
    p.b1 = Matrix(1, hidden);
    p.b2 = Matrix(1, d_out);
    const std::size_t k = std::min({d_in, hidden, d_out});
    for (std::size_t i = 0; i < std::min(d_in, hidden); ++i) p.w1(i, i) = squeeze;
    for (std::size_t i = 0; i < k; ++i) p.w2(i, i) = gain / squeeze;
    return p;
}

}  // namespace

EncoderParams init_encoder_params(const Matrix& codebook0, std::int64_t d_img, std::int64_t d_txt,
                                  std::int64_t hidden, double tau_init, double max_inverse,
                                  std::uint64_t seed) {
    if (!(tau_init > 0.0)) throw ConfigError("tau_init must be positive");
    Rng rng(derive_seed(seed, 0xB00));
    EncoderParams p;
    const auto d = codebook0.cols();
    p.txt = init_near_identity_projector(static_cast<std::size_t>(d_txt),
                                         static_cast<std::size_t>(hidden), d, 8.0, rng);
    p.img = init_projector(static_cast<std::size_t>(d_img), static_cast<std::size_t>(hidden), d, rng);
    p.z_txt = Codebook{.codes = codebook0, .frozen = true};
    p.z_img = Codebook{.codes = codebook0, .frozen = false};
    p.log_inv_tau = std::log(1.0 / tau_init);
    p.max_inverse = max_inverse;
    return p;
}

Matrix project_rows(const Projector& proj, const Matrix& x) {
    Matrix h = matmul(x, proj.w1);
    for (std::size_t r = 0; r < h.rows(); ++r) {
        auto row = h.row(r);
        for (std::size_t c = 0; c < h.cols(); ++c) row[c] = std::tanh(row[c] + proj.b1(0, c));
    }
    Matrix z = matmul(h, proj.w2);
    for (std::size_t r = 0; r < z.rows(); ++r) {
        auto row = z.row(r);
        for (std::size_t c = 0; c < z.cols(); ++c) row[c] += proj.b2(0, c);
    }
    return z;
}

DenseLexical encode_text(const EncoderParams& params, const Matrix& txt_features) {
    return text_lexical_head(project_rows(params.txt, txt_features), params.z_txt);
}

DenseLexical encode_image(const EncoderParams& params, const Matrix& img_features) {
    return image_lexical_head(project_rows(params.img, img_features), params.z_img);
}

DenseLexical encode_patches(const EncoderParams& params, const Matrix& img_features,
                            const std::vector<std::size_t>& patch_ids) {
    return patch_lexical(project_rows(params.img, img_features), params.z_img, patch_ids);
}

// ---------------------------------------------------------------------------

TrainConfig TrainConfig::desk_profile() { return TrainConfig{}; }

TrainConfig TrainConfig::paper_profile() {
    TrainConfig c;
    c.lr = 5e-4;
    c.batch_size = 6144;
    c.epochs = 12;
    c.warmup_iters = 1000;
    c.penalty_warmup_steps = 2000;
    return c;
}

TrainConfig TrainConfig::from_kv(const KvMap& kv) {
    reject_unknown_keys(kv,
                        {"lr", "batch_size", "epochs", "warmup_iters", "adam_beta1", "adam_beta2",
                         "adam_eps", "lambda_img", "lambda_txt", "penalty_warmup_steps", "seed",
                         "penalty_kind", "proj_hidden", "tau_init", "max_inverse_temp",
                         "max_steps"},
                        "train config");
    TrainConfig c;
    c.lr = kv_double(kv, "lr", c.lr);
    c.batch_size = kv_int(kv, "batch_size", c.batch_size);
    c.epochs = kv_int(kv, "epochs", c.epochs);
    c.warmup_iters = kv_int(kv, "warmup_iters", c.warmup_iters);
    c.adam_beta1 = kv_double(kv, "adam_beta1", c.adam_beta1);
    c.adam_beta2 = kv_double(kv, "adam_beta2", c.adam_beta2);
    c.adam_eps = kv_double(kv, "adam_eps", c.adam_eps);
    c.lambda_img = kv_double(kv, "lambda_img", c.lambda_img);
    c.lambda_txt = kv_double(kv, "lambda_txt", c.lambda_txt);
    c.penalty_warmup_steps = kv_int(kv, "penalty_warmup_steps", c.penalty_warmup_steps);
    c.seed = static_cast<std::uint64_t>(kv_int(kv, "seed", static_cast<std::int64_t>(c.seed)));
    if (kv.count("penalty_kind")) {
        try {
            c.penalty_kind = penalty_kind_from_string(kv.at("penalty_kind"));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config key 'penalty_kind': ") + e.what());
        }
    }
    c.proj_hidden = kv_int(kv, "proj_hidden", c.proj_hidden);
    c.tau_init = kv_double(kv, "tau_init", c.tau_init);
    c.max_inverse_temp = kv_double(kv, "max_inverse_temp", c.max_inverse_temp);
    c.max_steps = kv_int(kv, "max_steps", c.max_steps);
    c.validate();
    return c;
}

KvMap TrainConfig::to_kv() const {
    KvMap kv;
    kv["lr"] = format_double(lr);
    kv["batch_size"] = std::to_string(batch_size);
    kv["epochs"] = std::to_string(epochs);
    kv["warmup_iters"] = std::to_string(warmup_iters);
    kv["adam_beta1"] = format_double(adam_beta1);
    kv["adam_beta2"] = format_double(adam_beta2);
    kv["adam_eps"] = format_double(adam_eps);
    kv["lambda_img"] = format_double(lambda_img);
    kv["lambda_txt"] = format_double(lambda_txt);
    kv["penalty_warmup_steps"] = std::to_string(penalty_warmup_steps);
    kv["seed"] = std::to_string(seed);
    kv["penalty_kind"] = to_string(penalty_kind);
    kv["proj_hidden"] = std::to_string(proj_hidden);
    kv["tau_init"] = format_double(tau_init);
    kv["max_inverse_temp"] = format_double(max_inverse_temp);
    kv["max_steps"] = std::to_string(max_steps);
    return kv;
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("config key 'lr': must be positive");
    if (batch_size < 2) throw ConfigError("config key 'batch_size': contrastive batch needs >= 2");
    if (epochs < 1) throw ConfigError("config key 'epochs': must be >= 1");
    if (warmup_iters < 0) throw ConfigError("config key 'warmup_iters': must be >= 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw ConfigError("config key 'adam_beta1'/'adam_beta2': must be in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw ConfigError("config key 'adam_eps': must be positive");
    if (lambda_img < 0.0 || lambda_txt < 0.0) {
        throw ConfigError("config key 'lambda_img'/'lambda_txt': must be >= 0");
    }
    if (penalty_warmup_steps < 1) {
        throw ConfigError("config key 'penalty_warmup_steps': must be >= 1");
    }
    if (proj_hidden < 1) throw ConfigError("config key 'proj_hidden': must be >= 1");
    if (!(tau_init > 0.0)) throw ConfigError("config key 'tau_init': must be positive");
    if (!(max_inverse_temp > 0.0)) {
        throw ConfigError("config key 'max_inverse_temp': must be positive");
    }
    if (max_steps < 0) throw ConfigError("config key 'max_steps': must be >= 0");
}

std::uint64_t TrainConfig::hash() const {
    KvMap kv = to_kv();
    kv.erase("max_steps");
    return fnv1a64(canonical_kv(kv));
}

// ---------------------------------------------------------------------------

double cosine_lr(double peak, std::int64_t step, std::int64_t warmup_iters,
                 std::int64_t total_steps) {
    if (warmup_iters > 0 && step < warmup_iters) {
        return peak * static_cast<double>(step + 1) / static_cast<double>(warmup_iters);
    }
    if (total_steps <= warmup_iters) return peak;
    double progress = static_cast<double>(step - warmup_iters) /
                      static_cast<double>(total_steps - warmup_iters);
    progress = std::clamp(progress, 0.0, 1.0);
    return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

std::vector<NodeId> TrainingGraph::trainable() const {
    return {txt_w1, txt_b1, txt_w2, txt_b2, img_w1, img_b1, img_w2, img_b2, z_img, log_inv_tau};
}

void TrainingGraph::load_params(const EncoderParams& p) {
    tape.set_value(txt_w1, p.txt.w1);
    tape.set_value(txt_b1, p.txt.b1);
    tape.set_value(txt_w2, p.txt.w2);
    tape.set_value(txt_b2, p.txt.b2);
    tape.set_value(img_w1, p.img.w1);
    tape.set_value(img_b1, p.img.b1);
    tape.set_value(img_w2, p.img.w2);
    tape.set_value(img_b2, p.img.b2);
    tape.set_value(z_img, p.z_img.codes);
    tape.set_value(z_txt, p.z_txt.codes);
    Matrix lt(1, 1);
    lt(0, 0) = p.log_inv_tau;
    tape.set_value(log_inv_tau, lt);
}

void TrainingGraph::store_params(EncoderParams& p) const {
    p.txt.w1 = tape.value(txt_w1);
    p.txt.b1 = tape.value(txt_b1);
    p.txt.w2 = tape.value(txt_w2);
    p.txt.b2 = tape.value(txt_b2);
    p.img.w1 = tape.value(img_w1);
    p.img.b1 = tape.value(img_b1);
    p.img.w2 = tape.value(img_w2);
    p.img.b2 = tape.value(img_b2);
    p.z_img.codes = tape.value(z_img);
    p.z_txt.codes = tape.value(z_txt);
    p.log_inv_tau = tape.value(log_inv_tau)(0, 0);
}

void TrainingGraph::set_lambdas(double lambda_img, double lambda_txt) {
    if (penalty == PenaltyKind::None) return;
    tape.set_coeff(total, 2, lambda_img);
    tape.set_coeff(total, 3, lambda_txt);
}

TrainingGraph build_training_graph(const EncoderParams& init, std::size_t batch,
                                   std::size_t n_patches, PenaltyKind kind) {
    if (batch < 2) throw std::invalid_argument("build_training_graph: batch must be >= 2");
    if (n_patches < 1) throw std::invalid_argument("build_training_graph: n_patches must be >= 1");
    TrainingGraph g;
    g.penalty = kind;
    g.n_patches = n_patches;
    Tape& t = g.tape;

    const std::size_t d_img = init.img.w1.rows();
    const std::size_t d_txt = init.txt.w1.rows();

    g.in_img = t.input("img_features", Matrix(batch * n_patches, d_img));
    g.in_txt = t.input("txt_features", Matrix(batch, d_txt));
    g.txt_w1 = t.param("txt_proj.w1", init.txt.w1);
    g.txt_b1 = t.param("txt_proj.b1", init.txt.b1);
    g.txt_w2 = t.param("txt_proj.w2", init.txt.w2);
    g.txt_b2 = t.param("txt_proj.b2", init.txt.b2);
    g.img_w1 = t.param("img_proj.w1", init.img.w1);
    g.img_b1 = t.param("img_proj.b1", init.img.b1);
    g.img_w2 = t.param("img_proj.w2", init.img.w2);
    g.img_b2 = t.param("img_proj.b2", init.img.b2);
    g.z_img = t.param("z_img", init.z_img.codes);
    g.z_txt = t.param("z_txt", init.z_txt.codes);  // grads computed, never applied
    Matrix lt(1, 1);
    lt(0, 0) = init.log_inv_tau;
    g.log_inv_tau = t.param("log_inv_tau", lt);

    const NodeId img_h =
        t.tanh(t.add_bias(t.matmul(g.in_img, g.img_w1), g.img_b1), "img_hidden");
    const NodeId img_z = t.add_bias(t.matmul(img_h, g.img_w2), g.img_b2, "img_lexfeat");
    const NodeId img_scores = t.elu1p(t.matmul_nt(img_z, g.z_img, "img_attn"), "img_elu1p");
    const NodeId img_pooled = t.segment_col_max(img_scores, n_patches, "img_maxpool");
    g.s_img = t.row_l2_normalize(img_pooled, "s_img");

    const NodeId txt_h =
        t.tanh(t.add_bias(t.matmul(g.in_txt, g.txt_w1), g.txt_b1), "txt_hidden");
    const NodeId txt_z = t.add_bias(t.matmul(txt_h, g.txt_w2), g.txt_b2, "txt_lexfeat");
    const NodeId txt_scores = t.elu1p(t.matmul_nt(txt_z, g.z_txt, "txt_attn"), "txt_elu1p");
    g.s_txt = t.row_l2_normalize(txt_scores, "s_txt");

    const NodeId scale =
        t.clamp_max(t.exp(g.log_inv_tau, "inv_tau"), init.max_inverse, "logit_scale");
    const NodeId sim =
        t.scale_by_scalar(t.matmul_nt(g.s_txt, g.s_img, "similarity"), scale, "logits_t2i");
    g.l_t2i = t.softmax_xent_diag(sim, "l_t2i");
    g.l_i2t = t.softmax_xent_diag(t.transpose(sim, "logits_i2t"), "l_i2t");

    if (kind == PenaltyKind::None) {
        g.total = t.weighted_sum({g.l_t2i, g.l_i2t}, {1.0, 1.0}, "objective");
        g.pen_img = g.pen_txt = g.total;  // unused
    } else {
        if (kind == PenaltyKind::Overuse) {
            g.pen_img = t.overuse_reduce(g.s_img, "overuse_img");
            g.pen_txt = t.overuse_reduce(g.s_txt, "overuse_txt");
        } else {
            g.pen_img = t.flops_reduce(g.s_img, "flops_img");
            g.pen_txt = t.flops_reduce(g.s_txt, "flops_txt");
        }
        g.total = t.weighted_sum({g.l_t2i, g.l_i2t, g.pen_img, g.pen_txt},
                                 {1.0, 1.0, 0.0, 0.0}, "objective");
    }
    return g;
}

// ---------------------------------------------------------------------------

std::string MetricsRow::csv_header() {
    return "step,l_t2i,l_i2t,overuse_img,overuse_txt,tau,lambda_img,lambda_txt";
}

std::string MetricsRow::csv_line() const {
    std::string out = std::to_string(step);
    for (double v : {l_t2i, l_i2t, overuse_img, overuse_txt, tau, lambda_img, lambda_txt}) {
        out += ',';
        out += format_double(v);
    }
    return out;
}

namespace {

constexpr char kCheckpointMagic[9] = "LXALNCK1";

class AdamOptimizer {
public:
    AdamOptimizer(const TrainConfig& cfg, Tape& tape, std::vector<NodeId> tensors)
        : cfg_(cfg), tape_(tape), tensors_(std::move(tensors)) {
        for (NodeId id : tensors_) {
            const Matrix& v = tape_.value(id);
            state_.m.emplace_back(v.rows(), v.cols());
            state_.v.emplace_back(v.rows(), v.cols());
        }
    }

    void restore(const AdamState& s) {
        if (s.m.size() != tensors_.size() || s.v.size() != tensors_.size()) {
            throw std::runtime_error("checkpoint optimizer state does not match graph");
        }
        state_ = s;
    }

    const AdamState& state() const { return state_; }

    void step(double lr) {
        ++state_.t;
        const double bc1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(state_.t));
        const double bc2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(state_.t));
        for (std::size_t k = 0; k < tensors_.size(); ++k) {
            Matrix& p = tape_.mutable_value(tensors_[k]);
            const Matrix& g = tape_.adjoint(tensors_[k]);
            auto& m = state_.m[k].data();
            auto& v = state_.v[k].data();
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double gi = g.data()[i];
                m[i] = cfg_.adam_beta1 * m[i] + (1.0 - cfg_.adam_beta1) * gi;
                v[i] = cfg_.adam_beta2 * v[i] + (1.0 - cfg_.adam_beta2) * gi * gi;
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                p.data()[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
            }
        }
    }

private:
    TrainConfig cfg_;
    Tape& tape_;
    std::vector<NodeId> tensors_;
    AdamState state_;
};

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::int64_t epoch, std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, 0xE0000 + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    return order;
}

TrainResult run_training(const TrainConfig& config, const LoadedDataset& dataset,
                         const Checkpoint* restore, std::int64_t max_steps_override,
                         const StepCallback& on_step) {
    config.validate();
    const auto batch = static_cast<std::size_t>(config.batch_size);
    const std::size_t n_train = dataset.train.size();
    if (n_train < batch) {
        throw ConfigError("batch_size " + std::to_string(batch) + " exceeds training split of " +
                          std::to_string(n_train) + " pairs");
    }
    const std::size_t steps_per_epoch = n_train / batch;  // trailing partial batch dropped
    const std::int64_t planned =
        static_cast<std::int64_t>(steps_per_epoch) * config.epochs;
    std::int64_t stop_at = planned;
    // on resume the checkpoint's own max_steps is the point it stopped at;
    // only an explicit override caps the continued run
    const std::int64_t cap = restore ? max_steps_override : (max_steps_override > 0 ? max_steps_override : config.max_steps);
    if (cap > 0) stop_at = std::min(stop_at, cap);

    const auto n_patches =
        static_cast<std::size_t>(dataset.config.grid * dataset.config.grid);
    EncoderParams params =
        restore ? restore->params
                : init_encoder_params(dataset.codebook0, dataset.config.d_img,
                                      dataset.config.d_txt, config.proj_hidden, config.tau_init,
                                      config.max_inverse_temp, config.seed);

    TrainingGraph graph = build_training_graph(params, batch, n_patches, config.penalty_kind);
    graph.load_params(params);
    AdamOptimizer adam(config, graph.tape, graph.trainable());
    std::int64_t start_step = 0;
    if (restore) {
        adam.restore(restore->adam);
        start_step = restore->step;
    }

    const PenaltySchedule schedule{.lambda_img = config.lambda_img,
                                   .lambda_txt = config.lambda_txt,
                                   .warmup_steps = config.penalty_warmup_steps};

    Matrix img_batch(batch * n_patches, static_cast<std::size_t>(dataset.config.d_img));
    Matrix txt_batch(batch, static_cast<std::size_t>(dataset.config.d_txt));
    std::vector<std::size_t> order;
    std::int64_t order_epoch = -1;

    TrainResult result;
    result.metrics.reserve(static_cast<std::size_t>(std::max<std::int64_t>(stop_at - start_step, 0)));

    for (std::int64_t step = start_step; step < stop_at; ++step) {
        const std::int64_t epoch = step / static_cast<std::int64_t>(steps_per_epoch);
        if (epoch != order_epoch) {
            order = epoch_order(config.seed, epoch, n_train);
            order_epoch = epoch;
        }
        const auto pos = static_cast<std::size_t>(step % static_cast<std::int64_t>(steps_per_epoch));
        for (std::size_t b = 0; b < batch; ++b) {
            const PairedSample& s = dataset.train[order[pos * batch + b]];
            for (std::size_t p = 0; p < n_patches; ++p) {
                auto dst = img_batch.row(b * n_patches + p);
                auto src = s.img_features.row(p);
                std::copy(src.begin(), src.end(), dst.begin());
            }
            auto dst = txt_batch.row(b);
            auto src = s.txt_features.row(0);
            std::copy(src.begin(), src.end(), dst.begin());
        }
        graph.tape.set_value(graph.in_img, img_batch);
        graph.tape.set_value(graph.in_txt, txt_batch);
        const auto [li, lt] = lambda_at(schedule, step);
        graph.set_lambdas(li, lt);

        try {
            graph.tape.forward_backward();
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("training aborted at step " + std::to_string(step) + ": " +
                                     e.what());
        }
        adam.step(cosine_lr(config.lr, step, config.warmup_iters, planned));

        MetricsRow row;
        row.step = step;
        row.l_t2i = graph.tape.value(graph.l_t2i)(0, 0);
        row.l_i2t = graph.tape.value(graph.l_i2t)(0, 0);
        if (config.penalty_kind != PenaltyKind::None) {
            row.overuse_img = graph.tape.value(graph.pen_img)(0, 0);
            row.overuse_txt = graph.tape.value(graph.pen_txt)(0, 0);
        }
        row.tau = std::exp(-graph.tape.value(graph.log_inv_tau)(0, 0));
        row.lambda_img = config.penalty_kind == PenaltyKind::None ? 0.0 : li;
        row.lambda_txt = config.penalty_kind == PenaltyKind::None ? 0.0 : lt;
        result.metrics.push_back(row);
        if (on_step) on_step(row);
    }

    graph.store_params(result.checkpoint.params);
    result.checkpoint.params.z_txt.frozen = true;
    result.checkpoint.params.max_inverse = config.max_inverse_temp;
    result.checkpoint.config = config;
    result.checkpoint.dataset_hash = dataset.config_hash;
    result.checkpoint.step = stop_at;
    result.checkpoint.adam = adam.state();
    return result;
}

}  // namespace

TrainResult train(const TrainConfig& config, const LoadedDataset& dataset,
                  const StepCallback& on_step) {
    return run_training(config, dataset, nullptr, 0, on_step);
}

TrainResult resume(const Checkpoint& checkpoint, const LoadedDataset& dataset,
                   std::int64_t max_steps, const StepCallback& on_step) {
    if (checkpoint.dataset_hash != dataset.config_hash) {
        throw ConfigError("resume: checkpoint was trained on a different dataset (hash " +
                          hash_hex(checkpoint.dataset_hash) + " vs " +
                          hash_hex(dataset.config_hash) + ")");
    }
    return run_training(checkpoint.config, dataset, &checkpoint, max_steps, on_step);
}

// ---------------------------------------------------------------------------

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& p) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + p.string());
    os.write(kCheckpointMagic, 8);
    write_u32(os, 1);  // version
    write_u64(os, ckpt.dataset_hash);
    write_u64(os, ckpt.config.hash());
    write_u64(os, static_cast<std::uint64_t>(ckpt.step));
    write_string(os, canonical_kv(ckpt.config.to_kv()));

    const EncoderParams& e = ckpt.params;
    const std::vector<std::pair<std::string, const Matrix*>> tensors = {
        {"z_txt", &e.z_txt.codes},   {"txt_proj.w1", &e.txt.w1}, {"txt_proj.b1", &e.txt.b1},
        {"txt_proj.w2", &e.txt.w2},  {"txt_proj.b2", &e.txt.b2}, {"img_proj.w1", &e.img.w1},
        {"img_proj.b1", &e.img.b1},  {"img_proj.w2", &e.img.w2}, {"img_proj.b2", &e.img.b2},
        {"z_img", &e.z_img.codes}};
    write_u32(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, m] : tensors) {
        write_string(os, name);
        write_matrix(os, *m);
    }
    write_f64(os, e.log_inv_tau);
    write_f64(os, e.max_inverse);

    write_u32(os, static_cast<std::uint32_t>(ckpt.adam.m.size()));
    for (const Matrix& m : ckpt.adam.m) write_matrix(os, m);
    for (const Matrix& v : ckpt.adam.v) write_matrix(os, v);
    write_u64(os, static_cast<std::uint64_t>(ckpt.adam.t));
    if (!os) throw std::runtime_error("checkpoint write failed: " + p.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw ConfigError("cannot open checkpoint: " + p.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::string(magic, 8) != std::string(kCheckpointMagic, 8)) {
        throw std::runtime_error("bad checkpoint magic in " + p.string());
    }
    const std::uint32_t version = read_u32(is);
    if (version != 1) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ckpt;
    ckpt.dataset_hash = read_u64(is);
    const std::uint64_t stored_hash = read_u64(is);
    ckpt.step = static_cast<std::int64_t>(read_u64(is));
    ckpt.config = TrainConfig::from_kv(parse_kv_text(read_string(is), "checkpoint config"));
    if (ckpt.config.hash() != stored_hash) {
        throw std::runtime_error("checkpoint config hash mismatch (corrupt file?)");
    }

    const std::uint32_t n_tensors = read_u32(is);
    if (n_tensors != 10) throw std::runtime_error("unexpected checkpoint tensor count");
    EncoderParams& e = ckpt.params;
    const std::vector<std::pair<std::string, Matrix*>> tensors = {
        {"z_txt", &e.z_txt.codes},   {"txt_proj.w1", &e.txt.w1}, {"txt_proj.b1", &e.txt.b1},
        {"txt_proj.w2", &e.txt.w2},  {"txt_proj.b2", &e.txt.b2}, {"img_proj.w1", &e.img.w1},
        {"img_proj.b1", &e.img.b1},  {"img_proj.w2", &e.img.w2}, {"img_proj.b2", &e.img.b2},
        {"z_img", &e.z_img.codes}};
    for (const auto& [name, m] : tensors) {
        const std::string got = read_string(is);
        if (got != name) {
            throw std::runtime_error("checkpoint tensor order mismatch: expected " + name +
                                     ", got " + got);
        }
        *m = read_matrix(is);
    }
    e.z_txt.frozen = true;
    e.z_img.frozen = false;
    e.log_inv_tau = read_f64(is);
    e.max_inverse = read_f64(is);

    const std::uint32_t n_adam = read_u32(is);
    ckpt.adam.m.resize(n_adam);
    ckpt.adam.v.resize(n_adam);
    for (Matrix& m : ckpt.adam.m) m = read_matrix(is);
    for (Matrix& v : ckpt.adam.v) v = read_matrix(is);
    ckpt.adam.t = static_cast<std::int64_t>(read_u64(is));
    return ckpt;
}

}  // namespace lexalign
