#include <doctest.h>

#include <cmath>
#include <limits>
#include <filesystem>

#include "lexalign/losses.hpp"
#include "lexalign/synth.hpp"
#include "lexalign/trainer.hpp"
#include "test_util.hpp"

using namespace lexalign;
namespace fs = std::filesystem;

namespace {

GenConfig smoke_gen_config() {
    GenConfig c;
    c.vocab_size = 32;
    c.lexical_dim = 16;
    c.d_img = 16;
    c.d_txt = 16;
    c.grid = 2;
    c.n_concepts = 48;
    c.max_active = 3;
    c.n_train_pairs = 64;
    c.n_val_pairs = 4;
    c.n_test_pairs = 8;
    c.n_scenes = 2;
    c.scene_classes = 2;
    c.seed = 5;
    return c;
}

TrainConfig smoke_train_config() {
    TrainConfig c;
    c.batch_size = 16;
    c.epochs = 2;
    c.warmup_iters = 2;
    c.penalty_warmup_steps = 4;
    c.proj_hidden = 16;
    c.lr = 5e-3;
    c.seed = 3;
    return c;
}

LoadedDataset smoke_dataset() {
    static bool built = false;
    static fs::path dir = fs::temp_directory_path() / "lexalign_trainer_smoke";
    if (!built) {
        fs::remove_all(dir);
        write_dataset(generate_dataset(smoke_gen_config()), dir);
        built = true;
    }
    return load_dataset(dir);
}

Matrix batch_infonce_reps_txt(const EncoderParams& p, const std::vector<PairedSample>& samples) {
    Matrix out(samples.size(), p.z_txt.vocab_size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const DenseLexical s = encode_text(p, samples[i].txt_features);
        std::copy(s.values.begin(), s.values.end(), out.row(i).begin());
    }
    return out;
}

Matrix batch_infonce_reps_img(const EncoderParams& p, const std::vector<PairedSample>& samples) {
    Matrix out(samples.size(), p.z_img.vocab_size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const DenseLexical s = encode_image(p, samples[i].img_features);
        std::copy(s.values.begin(), s.values.end(), out.row(i).begin());
    }
    return out;
}

}  // namespace

TEST_CASE("paper profile pins the published hyperparameters") {
    const TrainConfig c = TrainConfig::paper_profile();
    CHECK(c.lr == 5e-4);
    CHECK(c.batch_size == 6144);
    CHECK(c.epochs == 12);
    CHECK(c.warmup_iters == 1000);
    CHECK(c.adam_beta1 == 0.9);
    CHECK(c.adam_beta2 == 0.999);
    CHECK(c.adam_eps == 1e-6);
    CHECK(c.lambda_img == 5e-4);
    CHECK(c.lambda_txt == 1e-3);
    CHECK(c.penalty_warmup_steps == 2000);
    CHECK(c.tau_init == 0.07);
    CHECK(c.max_inverse_temp == 100.0);
}

TEST_CASE("train config parsing, hashing and validation") {
    KvMap kv;
    kv["lr"] = "0.01";
    kv["penalty_kind"] = "flops";
    const TrainConfig c = TrainConfig::from_kv(kv);
    CHECK(c.lr == 0.01);
    CHECK(c.penalty_kind == PenaltyKind::Flops);

    KvMap bad;
    bad["not_a_key"] = "1";
    CHECK_THROWS_WITH_AS(TrainConfig::from_kv(bad), doctest::Contains("not_a_key"), ConfigError);

    KvMap neg;
    neg["lr"] = "-1";
    CHECK_THROWS_AS(TrainConfig::from_kv(neg), ConfigError);

    // max_steps is an execution cap, not part of the schedule identity
    TrainConfig a = smoke_train_config();
    TrainConfig b = a;
    b.max_steps = 5;
    CHECK(a.hash() == b.hash());
    b.lr *= 2.0;
    CHECK(a.hash() != b.hash());
}

TEST_CASE("cosine schedule endpoints") {
    const double peak = 5e-3;
    CHECK(cosine_lr(peak, 100, 100, 1920) == doctest::Approx(peak).epsilon(1e-15));
    CHECK(cosine_lr(peak, 1919, 100, 1920) <= 0.01 * peak);
    // warmup ramps monotonically and never exceeds the peak
    double prev = 0.0;
    for (std::int64_t s = 0; s < 100; ++s) {
        const double lr = cosine_lr(peak, s, 100, 1920);
        CHECK(lr > prev);
        CHECK(lr <= peak + 1e-18);
        prev = lr;
    }
}

TEST_CASE("encoders produce valid representations before any training") {
    const LoadedDataset ds = smoke_dataset();
    const EncoderParams params = init_encoder_params(ds.codebook0, ds.config.d_img,
                                                     ds.config.d_txt, 16, 0.07, 100.0, 9);
    // the image codebook starts as an exact copy of the frozen text codebook
    CHECK(params.z_img.codes == params.z_txt.codes);
    CHECK(params.z_txt.frozen);
    CHECK(!params.z_img.frozen);

    const DenseLexical t = encode_text(params, ds.train[0].txt_features);
    validate_dense(t);
    const DenseLexical i = encode_image(params, ds.train[0].img_features);
    validate_dense(i);

    SUBCASE("zero features with zero biases give the uniform vector") {
        // biases initialize to zero, so projecting zero features lands on
        // elu1p(0) = 1 everywhere
        const DenseLexical s = encode_text(params, Matrix(1, static_cast<std::size_t>(ds.config.d_txt)));
        const double uniform = 1.0 / std::sqrt(static_cast<double>(ds.config.vocab_size));
        for (double v : s.values) CHECK(v == doctest::Approx(uniform).epsilon(1e-12));
    }
    SUBCASE("single patch equals the text-style head on that row") {
        Matrix patch(1, static_cast<std::size_t>(ds.config.d_img));
        auto src = ds.train[0].img_features.row(1);
        std::copy(src.begin(), src.end(), patch.row(0).begin());
        const DenseLexical via_img = encode_image(params, patch);
        const DenseLexical via_head =
            text_lexical_head(project_rows(params.img, patch), params.z_img);
        CHECK(via_img.values == via_head.values);
    }
    SUBCASE("patch permutation leaves the pooled encoding unchanged") {
        const Matrix& orig = ds.train[0].img_features;
        Matrix shuffled(orig.rows(), orig.cols());
        const std::size_t perm[4] = {2, 0, 3, 1};
        for (std::size_t p = 0; p < 4; ++p) {
            auto src = orig.row(perm[p]);
            std::copy(src.begin(), src.end(), shuffled.row(p).begin());
        }
        CHECK(encode_image(params, orig).values == encode_image(params, shuffled).values);
    }
}

TEST_CASE("training is deterministic and respects the frozen codebook") {
    const LoadedDataset ds = smoke_dataset();
    const TrainConfig cfg = smoke_train_config();

    const TrainResult r1 = train(cfg, ds);
    const TrainResult r2 = train(cfg, ds);

    REQUIRE(!r1.metrics.empty());
    CHECK(r1.metrics.back().l_t2i == r2.metrics.back().l_t2i);
    CHECK(r1.checkpoint.params.z_img.codes == r2.checkpoint.params.z_img.codes);
    CHECK(r1.checkpoint.params.log_inv_tau == r2.checkpoint.params.log_inv_tau);

    // frozen text codebook: bit-identical to the dataset codebook
    CHECK(hash_matrix(r1.checkpoint.params.z_txt.codes) == hash_matrix(ds.codebook0));
    // the image codebook diverged
    CHECK(frobenius_distance(r1.checkpoint.params.z_img.codes,
                             r1.checkpoint.params.z_txt.codes) > 0.0);
}

TEST_CASE("one optimizer step touches exactly the trainable tensors") {
    const LoadedDataset ds = smoke_dataset();
    TrainConfig cfg = smoke_train_config();
    cfg.max_steps = 1;

    const EncoderParams before = init_encoder_params(ds.codebook0, ds.config.d_img,
                                                     ds.config.d_txt, cfg.proj_hidden,
                                                     cfg.tau_init, cfg.max_inverse_temp,
                                                     cfg.seed);
    const TrainResult r = train(cfg, ds);
    const EncoderParams& after = r.checkpoint.params;

    CHECK(after.z_txt.codes == before.z_txt.codes);
    CHECK(after.z_img.codes != before.z_img.codes);
    CHECK(after.txt.w1 != before.txt.w1);
    CHECK(after.txt.b1 != before.txt.b1);
    CHECK(after.txt.w2 != before.txt.w2);
    CHECK(after.img.w1 != before.img.w1);
    CHECK(after.img.w2 != before.img.w2);
    CHECK(after.log_inv_tau != before.log_inv_tau);
}

TEST_CASE("InfoNCE on the training set decreases over the first epoch") {
    const LoadedDataset ds = smoke_dataset();
    TrainConfig cfg = smoke_train_config();
    cfg.penalty_kind = PenaltyKind::None;
    cfg.epochs = 1;

    const EncoderParams init = init_encoder_params(ds.codebook0, ds.config.d_img,
                                                   ds.config.d_txt, cfg.proj_hidden,
                                                   cfg.tau_init, cfg.max_inverse_temp, cfg.seed);
    const TrainResult r = train(cfg, ds);

    auto trainset_infonce = [&](const EncoderParams& p) {
        const Matrix st = batch_infonce_reps_txt(p, ds.train);
        const Matrix si = batch_infonce_reps_img(p, ds.train);
        return info_nce(st, si, p.temperature()) + info_nce(si, st, p.temperature());
    };
    CHECK(trainset_infonce(r.checkpoint.params) < trainset_infonce(init));

    // the schedule contributes no penalty at step 0
    CHECK(r.metrics.front().lambda_img == 0.0);
    CHECK(r.metrics.front().lambda_txt == 0.0);
}

TEST_CASE("checkpoint serialization round trip is bit-exact") {
    const LoadedDataset ds = smoke_dataset();
    TrainConfig cfg = smoke_train_config();
    cfg.max_steps = 3;
    const TrainResult r = train(cfg, ds);

    const fs::path p1 = fs::temp_directory_path() / "lexalign_ckpt_a.bin";
    const fs::path p2 = fs::temp_directory_path() / "lexalign_ckpt_b.bin";
    save_checkpoint(r.checkpoint, p1);
    const Checkpoint loaded = load_checkpoint(p1);
    save_checkpoint(loaded, p2);
    CHECK(hash_file(p1) == hash_file(p2));

    CHECK(loaded.step == r.checkpoint.step);
    CHECK(loaded.dataset_hash == r.checkpoint.dataset_hash);
    CHECK(loaded.params.z_img.codes == r.checkpoint.params.z_img.codes);
    CHECK(loaded.params.z_txt.frozen);
    CHECK(loaded.adam.t == r.checkpoint.adam.t);
    CHECK(loaded.adam.m.size() == r.checkpoint.adam.m.size());
    CHECK(loaded.adam.m[0] == r.checkpoint.adam.m[0]);
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("resume continues exactly where the run stopped") {
    const LoadedDataset ds = smoke_dataset();
    const TrainConfig full_cfg = smoke_train_config();  // 2 epochs = 8 steps

    const TrainResult uninterrupted = train(full_cfg, ds);

    TrainConfig partial = full_cfg;
    partial.max_steps = 3;
    const TrainResult first_leg = train(partial, ds);
    CHECK(first_leg.checkpoint.step == 3);
    const TrainResult second_leg = resume(first_leg.checkpoint, ds);

    CHECK(second_leg.checkpoint.step == uninterrupted.checkpoint.step);
    CHECK(second_leg.checkpoint.params.z_img.codes ==
          uninterrupted.checkpoint.params.z_img.codes);
    CHECK(second_leg.checkpoint.params.txt.w1 == uninterrupted.checkpoint.params.txt.w1);
    CHECK(second_leg.checkpoint.params.log_inv_tau ==
          uninterrupted.checkpoint.params.log_inv_tau);
    CHECK(second_leg.checkpoint.adam.m[0] == uninterrupted.checkpoint.adam.m[0]);
    CHECK(second_leg.metrics.back().l_t2i == uninterrupted.metrics.back().l_t2i);

    SUBCASE("wrong dataset is rejected by hash") {
        GenConfig other = smoke_gen_config();
        other.seed = 123;
        const fs::path dir = fs::temp_directory_path() / "lexalign_other_ds";
        fs::remove_all(dir);
        write_dataset(generate_dataset(other), dir);
        const LoadedDataset wrong = load_dataset(dir);
        CHECK_THROWS_WITH_AS(resume(first_leg.checkpoint, wrong),
                             doctest::Contains("different dataset"), ConfigError);
        fs::remove_all(dir);
    }
}

TEST_CASE("metrics rows carry the documented csv schema") {
    CHECK(MetricsRow::csv_header() ==
          "step,l_t2i,l_i2t,overuse_img,overuse_txt,tau,lambda_img,lambda_txt");
    MetricsRow row;
    row.step = 7;
    row.l_t2i = 1.5;
    const std::string line = row.csv_line();
    CHECK(line.substr(0, 6) == "7,1.5,");
}

TEST_CASE("a non-finite loss aborts the run naming the offending node") {
    LoadedDataset ds = smoke_dataset();
    ds.train[5].txt_features(0, 3) = std::numeric_limits<double>::quiet_NaN();
    TrainConfig cfg = smoke_train_config();
    cfg.max_steps = 8;  // the poisoned sample is met within the first epoch
    CHECK_THROWS_WITH_AS(train(cfg, ds), doctest::Contains("training aborted"),
                         std::runtime_error);
}
