// lexalign: desk-scale lexical vision-language alignment experiments.
//
// Subcommands: gen-data, train, dump-lexical, compare-penalty,
//              eval {retrieval|sweep|patchdis|gradcheck}.
// Exit codes: 0 success, 1 validation error, 2 runtime/numeric failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "lexalign/io.hpp"
#include "lexalign/lexical.hpp"
#include "lexalign/losses.hpp"
#include "lexalign/patchdis.hpp"
#include "lexalign/retrieval.hpp"
#include "lexalign/rng.hpp"
#include "lexalign/synth.hpp"
#include "lexalign/tape.hpp"
#include "lexalign/trainer.hpp"
#include "lexalign/vocab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lexalign;

namespace {

constexpr const char* kToolVersion = "0.1.0";
constexpr const char* kRunManifestName = "run_manifest.json";

// ---------------------------------------------------------------------------
// run manifest + output plumbing
// ---------------------------------------------------------------------------

struct RunContext {
    fs::path out_dir;
    json manifest;

    static RunContext start(const std::string& subcommand, const fs::path& out_dir,
                            const KvMap& config, std::uint64_t config_hash,
                            const json& inputs, const std::vector<std::string>& outputs) {
        RunContext ctx;
        ctx.out_dir = out_dir;
        fs::create_directories(out_dir);
        ctx.manifest["format"] = "lexalign-run";
        ctx.manifest["version"] = 1;
        ctx.manifest["tool_version"] = kToolVersion;
        ctx.manifest["subcommand"] = subcommand;
        ctx.manifest["config"] = config;
        ctx.manifest["config_hash"] = hash_hex(config_hash);
        ctx.manifest["inputs"] = inputs;
        ctx.manifest["outputs"] = outputs;
        // written before any work starts so a crashed run is identifiable
        write_text_file(out_dir / kRunManifestName, ctx.manifest.dump(2) + "\n");
        return ctx;
    }

    std::ofstream open_csv(const std::string& name, const std::string& header,
                           const std::string& extra_comment = "") const {
        std::ofstream os(out_dir / name, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write " + (out_dir / name).string());
        os << "# manifest=" << kRunManifestName << "\n";
        if (!extra_comment.empty()) os << "# " << extra_comment << "\n";
        os << header << "\n";
        return os;
    }
};

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::vector<double> parse_double_list(const std::string& s, const std::string& what) {
    std::vector<double> out;
    for (const auto& part : split_commas(s)) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(part, &pos));
            if (pos != part.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ConfigError(what + ": '" + part + "' is not a number");
        }
    }
    return out;
}

std::vector<std::int64_t> parse_int_list(const std::string& s, const std::string& what) {
    std::vector<std::int64_t> out;
    for (double v : parse_double_list(s, what)) {
        const auto i = static_cast<std::int64_t>(v);
        if (static_cast<double>(i) != v) throw ConfigError(what + ": expected integers");
        out.push_back(i);
    }
    return out;
}

KvMap kv_with_overrides(KvMap base, const std::vector<std::string>& sets) {
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        }
        base[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    return base;
}

void run_parallel(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const unsigned workers = std::min<unsigned>(threads, static_cast<unsigned>(n));
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

std::vector<DenseLexical> encode_images(const EncoderParams& params,
                                        const std::vector<PairedSample>& samples,
                                        unsigned threads) {
    std::vector<DenseLexical> out(samples.size());
    run_parallel(samples.size(), threads,
                 [&](std::size_t i) { out[i] = encode_image(params, samples[i].img_features); });
    return out;
}

std::vector<DenseLexical> encode_texts(const EncoderParams& params,
                                       const std::vector<PairedSample>& samples,
                                       unsigned threads) {
    std::vector<DenseLexical> out(samples.size());
    run_parallel(samples.size(), threads,
                 [&](std::size_t i) { out[i] = encode_text(params, samples[i].txt_features); });
    return out;
}

struct DirectionRecall {
    double r1 = 0.0, r5 = 0.0, r10 = 0.0;
    std::size_t n_queries = 0;
};

DirectionRecall recall_direction(const std::vector<SparseLexical>& queries,
                                 const std::vector<SparseLexical>& corpus) {
    const InvertedIndex index = InvertedIndex::build(corpus);
    std::vector<RetrievalResult> results;
    std::vector<std::int64_t> gt;
    results.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        results.push_back(index.search(queries[i], 10));
        gt.push_back(static_cast<std::int64_t>(i));
    }
    DirectionRecall r;
    r.n_queries = queries.size();
    r.r1 = recall_at_k(results, gt, 1);
    r.r5 = recall_at_k(results, gt, 5);
    r.r10 = recall_at_k(results, gt, 10);
    return r;
}

std::vector<SparseLexical> sparse_all(const std::vector<DenseLexical>& reps) {
    std::vector<SparseLexical> out;
    out.reserve(reps.size());
    for (const auto& r : reps) out.push_back(to_sparse_all(r));
    return out;
}

double gini_coefficient(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const auto n = static_cast<double>(xs.size());
    double total = 0.0, weighted = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        total += xs[i];
        weighted += (2.0 * static_cast<double>(i + 1) - n - 1.0) * xs[i];
    }
    if (total <= 0.0) return 0.0;
    return weighted / (n * total);
}

Checkpoint load_checkpoint_for(const LoadedDataset& ds, const fs::path& path) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.dataset_hash != ds.config_hash) {
        throw ConfigError("checkpoint " + path.string() +
                          " was trained on a different dataset (hash mismatch)");
    }
    return ckpt;
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenDataArgs {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out;
    unsigned threads = 1;
};

int cmd_gen_data(const GenDataArgs& args) {
    KvMap kv;
    if (!args.config_path.empty()) kv = load_kv_file(args.config_path);
    kv = kv_with_overrides(kv, args.sets);
    const GenConfig config = GenConfig::from_kv(kv);

    RunContext ctx = RunContext::start(
        "gen-data", args.out, config.to_kv(), config.hash(),
        json{{"config_path", args.config_path}},
        {"manifest.json", "vocab.txt", "codebook.bin", "concepts.jsonl", "train.jsonl",
         "val.jsonl", "test.jsonl", "scenes.jsonl", "truth_test.jsonl"});

    const Dataset ds = generate_dataset(config, args.threads);
    write_dataset(ds, ctx.out_dir);
    std::cout << "dataset written to " << ctx.out_dir.string() << "\n"
              << "  V=" << config.vocab_size << " d=" << config.lexical_dim
              << " grid=" << config.grid << " pairs=" << ds.train.size() << "/"
              << ds.val.size() << "/" << ds.test.size() << " scenes=" << ds.scenes.size()
              << "\n  config_hash=" << hash_hex(config.hash()) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config_path;
    std::vector<std::string> sets;
    std::string profile = "desk";
    std::string penalty;
    std::string dataset;
    std::string out;
    std::string resume_path;
    std::int64_t stop_after_steps = 0;
    bool quiet = false;
};

TrainConfig resolve_train_config(const TrainArgs& args) {
    TrainConfig base;
    if (args.profile == "desk") {
        base = TrainConfig::desk_profile();
    } else if (args.profile == "paper") {
        base = TrainConfig::paper_profile();
    } else {
        throw ConfigError("unknown profile '" + args.profile + "' (desk|paper)");
    }
    KvMap kv = base.to_kv();
    if (!args.config_path.empty()) {
        for (const auto& [k, v] : load_kv_file(args.config_path)) kv[k] = v;
    }
    kv = kv_with_overrides(kv, args.sets);
    if (!args.penalty.empty()) kv["penalty_kind"] = args.penalty;
    if (args.stop_after_steps > 0) kv["max_steps"] = std::to_string(args.stop_after_steps);
    return TrainConfig::from_kv(kv);
}

int cmd_train(const TrainArgs& args) {
    const LoadedDataset ds = load_dataset(args.dataset);

    std::optional<Checkpoint> restored;
    TrainConfig config;
    if (!args.resume_path.empty()) {
        restored = load_checkpoint_for(ds, args.resume_path);
        config = restored->config;
        if (!args.config_path.empty() || !args.sets.empty() || !args.penalty.empty()) {
            const TrainConfig requested = resolve_train_config(args);
            if (requested.hash() != config.hash()) {
                throw ConfigError("--resume: provided config does not match the checkpoint");
            }
        }
    } else {
        config = resolve_train_config(args);
    }

    RunContext ctx = RunContext::start(
        "train", args.out, config.to_kv(), config.hash(),
        json{{"dataset", args.dataset},
             {"dataset_hash", hash_hex(ds.config_hash)},
             {"profile", args.profile},
             {"resume", args.resume_path}},
        {"checkpoint.bin", "metrics.csv"});

    std::ofstream metrics = ctx.open_csv("metrics.csv", MetricsRow::csv_header());
    const std::size_t steps_per_epoch =
        ds.train.size() / static_cast<std::size_t>(config.batch_size);
    auto on_step = [&](const MetricsRow& row) {
        metrics << row.csv_line() << "\n";
        if (!args.quiet && steps_per_epoch > 0 &&
            (row.step % static_cast<std::int64_t>(steps_per_epoch) == 0)) {
            std::cout << "step " << row.step << "  l_t2i=" << row.l_t2i
                      << "  l_i2t=" << row.l_i2t << "  tau=" << row.tau << "\n";
        }
    };

    const TrainResult result = restored
                                   ? resume(*restored, ds, args.stop_after_steps, on_step)
                                   : train(config, ds, on_step);
    metrics.close();
    save_checkpoint(result.checkpoint, ctx.out_dir / "checkpoint.bin");
    std::cout << "trained to step " << result.checkpoint.step << ", checkpoint at "
              << (ctx.out_dir / "checkpoint.bin").string() << "\n";
    if (!result.metrics.empty()) {
        const MetricsRow& last = result.metrics.back();
        std::cout << "final l_t2i=" << last.l_t2i << " l_i2t=" << last.l_i2t
                  << " tau=" << last.tau << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// dump-lexical
// ---------------------------------------------------------------------------

struct DumpArgs {
    std::string checkpoint;
    std::string dataset;
    std::string split = "test";
    std::string samples;
    std::string patches;
    std::string modality = "img";
    std::int64_t top_n = 10;
    std::string out;
};

int cmd_dump_lexical(const DumpArgs& args) {
    const LoadedDataset ds = load_dataset(args.dataset);
    const Checkpoint ckpt = load_checkpoint_for(ds, args.checkpoint);
    const auto& samples = ds.split(args.split);
    if (args.top_n < 1 || args.top_n > ds.config.vocab_size) {
        throw ConfigError("--top-n out of range [1, vocab_size]");
    }
    if (args.modality != "img" && args.modality != "txt") {
        throw ConfigError("--modality must be img or txt");
    }
    if (!args.patches.empty() && args.modality != "img") {
        throw ConfigError("--patches applies to the image modality only");
    }

    std::vector<std::int64_t> ids = parse_int_list(args.samples, "--samples");
    for (std::int64_t id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= samples.size()) {
            throw ConfigError("--samples: id " + std::to_string(id) + " out of range for split '" +
                              args.split + "' of " + std::to_string(samples.size()));
        }
    }
    std::vector<std::size_t> patch_ids;
    if (!args.patches.empty()) {
        for (std::int64_t p : parse_int_list(args.patches, "--patches")) {
            if (p < 0) throw ConfigError("--patches: negative patch id");
            patch_ids.push_back(static_cast<std::size_t>(p));
        }
    }

    std::optional<RunContext> ctx;
    std::ofstream csv;
    if (!args.out.empty()) {
        ctx = RunContext::start("dump-lexical", args.out, ckpt.config.to_kv(),
                                ckpt.config.hash(),
                                json{{"checkpoint", args.checkpoint},
                                     {"dataset", args.dataset},
                                     {"split", args.split},
                                     {"samples", args.samples},
                                     {"patches", args.patches},
                                     {"modality", args.modality}},
                                {"dump.csv"});
        csv = ctx->open_csv("dump.csv", "sample_id,rank,token_id,token,value");
    }

    for (std::int64_t id : ids) {
        const PairedSample& s = samples[static_cast<std::size_t>(id)];
        DenseLexical lex;
        if (args.modality == "txt") {
            lex = encode_text(ckpt.params, s.txt_features);
        } else if (patch_ids.empty()) {
            lex = encode_image(ckpt.params, s.img_features);
        } else {
            lex = encode_patches(ckpt.params, s.img_features, patch_ids);
        }
        std::vector<std::int32_t> order(lex.values.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
            return lex.values[static_cast<std::size_t>(a)] >
                   lex.values[static_cast<std::size_t>(b)];
        });
        std::cout << "sample " << id << " (" << args.modality << ", concept " << s.concept_id
                  << ")\n";
        for (std::int64_t r = 0; r < args.top_n; ++r) {
            const auto tok = static_cast<std::size_t>(order[static_cast<std::size_t>(r)]);
            const double val = lex.values[tok];
            std::cout << "  " << (r + 1) << ". " << ds.vocab.token(tok) << " (" << tok
                      << ")  " << val << "\n";
            if (csv.is_open()) {
                csv << id << ',' << (r + 1) << ',' << tok << ',' << ds.vocab.token(tok) << ','
                    << format_double(val) << "\n";
            }
        }
    }
    return 0;
}

// ---------------------------------------------------------------------------
// compare-penalty
// ---------------------------------------------------------------------------

struct CompareArgs {
    std::string checkpoint_a;
    std::string checkpoint_b;
    std::string dataset;
    std::string split = "test";
    std::string out;
    unsigned threads = 1;
};

struct ActivationStats {
    std::vector<double> norm_col_means;         // over img+txt reps, normalized to sum 1
    std::vector<std::int64_t> activation_freq;  // value-threshold survivors per token
    double max_norm_col_mean = 0.0;
    double gini = 0.0;
    DirectionRecall t2i, i2t;
};

ActivationStats activation_stats(const EncoderParams& params,
                                 const std::vector<PairedSample>& samples, unsigned threads) {
    const auto img = encode_images(params, samples, threads);
    const auto txt = encode_texts(params, samples, threads);
    const std::size_t v = params.z_txt.vocab_size();
    ActivationStats stats;
    stats.norm_col_means.assign(v, 0.0);
    stats.activation_freq.assign(v, 0);
    for (const auto* reps : {&img, &txt}) {
        for (const auto& r : *reps) {
            for (std::size_t j = 0; j < v; ++j) stats.norm_col_means[j] += r.values[j];
            for (const auto& [tok, _] : sparsify_value(r).entries) {
                ++stats.activation_freq[static_cast<std::size_t>(tok)];
            }
        }
    }
    const double total =
        std::accumulate(stats.norm_col_means.begin(), stats.norm_col_means.end(), 0.0);
    if (total > 0.0) {
        for (double& m : stats.norm_col_means) m /= total;
    }
    stats.max_norm_col_mean =
        *std::max_element(stats.norm_col_means.begin(), stats.norm_col_means.end());
    stats.gini = gini_coefficient(stats.norm_col_means);
    stats.t2i = recall_direction(sparse_all(txt), sparse_all(img));
    stats.i2t = recall_direction(sparse_all(img), sparse_all(txt));
    return stats;
}

int cmd_compare_penalty(const CompareArgs& args) {
    const LoadedDataset ds = load_dataset(args.dataset);
    const Checkpoint a = load_checkpoint_for(ds, args.checkpoint_a);
    const Checkpoint b = load_checkpoint_for(ds, args.checkpoint_b);
    if (a.params.z_txt.vocab_size() != b.params.z_txt.vocab_size()) {
        throw ConfigError("compare-penalty: checkpoints disagree on vocabulary size");
    }
    const auto& samples = ds.split(args.split);
    if (samples.empty()) throw ConfigError("split '" + args.split + "' is empty");

    RunContext ctx = RunContext::start(
        "compare-penalty", args.out, a.config.to_kv(), a.config.hash(),
        json{{"checkpoint_a", args.checkpoint_a},
             {"checkpoint_b", args.checkpoint_b},
             {"dataset", args.dataset},
             {"split", args.split},
             {"penalty_a", to_string(a.config.penalty_kind)},
             {"penalty_b", to_string(b.config.penalty_kind)}},
        {"compare_summary.csv", "compare_tokens.csv"});

    const ActivationStats sa = activation_stats(a.params, samples, args.threads);
    const ActivationStats sb = activation_stats(b.params, samples, args.threads);

    std::ofstream summary = ctx.open_csv("compare_summary.csv", "metric,ckpt_a,ckpt_b");
    auto row = [&](const std::string& name, double va, double vb) {
        summary << name << ',' << format_double(va) << ',' << format_double(vb) << "\n";
    };
    row("max_norm_col_mean", sa.max_norm_col_mean, sb.max_norm_col_mean);
    row("gini_norm_col_mean", sa.gini, sb.gini);
    row("R1_t2i", sa.t2i.r1, sb.t2i.r1);
    row("R5_t2i", sa.t2i.r5, sb.t2i.r5);
    row("R10_t2i", sa.t2i.r10, sb.t2i.r10);
    row("R1_i2t", sa.i2t.r1, sb.i2t.r1);
    row("R5_i2t", sa.i2t.r5, sb.i2t.r5);
    row("R10_i2t", sa.i2t.r10, sb.i2t.r10);
    summary.close();

    std::ofstream tokens = ctx.open_csv(
        "compare_tokens.csv", "token_id,token,freq_a,freq_b,norm_mean_a,norm_mean_b");
    for (std::size_t j = 0; j < sa.norm_col_means.size(); ++j) {
        tokens << j << ',' << ds.vocab.token(j) << ',' << sa.activation_freq[j] << ','
               << sb.activation_freq[j] << ',' << format_double(sa.norm_col_means[j]) << ','
               << format_double(sb.norm_col_means[j]) << "\n";
    }
    tokens.close();

    auto top_overused = [&](const ActivationStats& s, const std::string& label) {
        std::vector<std::size_t> order(s.norm_col_means.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
            return s.norm_col_means[x] > s.norm_col_means[y];
        });
        std::cout << "top tokens by normalized activation (" << label << "):\n";
        for (std::size_t r = 0; r < std::min<std::size_t>(10, order.size()); ++r) {
            std::cout << "  " << ds.vocab.token(order[r]) << "  "
                      << s.norm_col_means[order[r]] << "\n";
        }
    };
    top_overused(sa, "ckpt_a " + to_string(a.config.penalty_kind));
    top_overused(sb, "ckpt_b " + to_string(b.config.penalty_kind));
    std::cout << "max_norm_col_mean  a=" << sa.max_norm_col_mean
              << "  b=" << sb.max_norm_col_mean << "\n"
              << "gini               a=" << sa.gini << "  b=" << sb.gini << "\n"
              << "R@1 t2i            a=" << sa.t2i.r1 << "  b=" << sb.t2i.r1 << "\n"
              << "R@1 i2t            a=" << sa.i2t.r1 << "  b=" << sb.i2t.r1 << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval subcommands
// ---------------------------------------------------------------------------

struct EvalRetrievalArgs {
    std::string checkpoint;
    std::string vectors_img;
    std::string vectors_txt;
    std::string dataset;
    std::string split = "test";
    std::string out;
    std::string save_index;
    unsigned threads = 1;
};

int cmd_eval_retrieval(const EvalRetrievalArgs& args) {
    const LoadedDataset ds = load_dataset(args.dataset);
    const bool from_vectors = !args.vectors_img.empty() || !args.vectors_txt.empty();
    if (from_vectors && (args.vectors_img.empty() || args.vectors_txt.empty())) {
        throw ConfigError("eval retrieval: need both --vectors-img and --vectors-txt");
    }
    if (from_vectors == !args.checkpoint.empty()) {
        throw ConfigError("eval retrieval: pass exactly one of --checkpoint or --vectors-*");
    }

    std::vector<SparseLexical> img, txt;
    KvMap config_echo;
    std::uint64_t config_hash = ds.config_hash;
    if (from_vectors) {
        const auto v = static_cast<std::int32_t>(ds.config.vocab_size);
        std::ifstream fi(args.vectors_img), ft(args.vectors_txt);
        if (!fi) throw ConfigError("cannot open " + args.vectors_img);
        if (!ft) throw ConfigError("cannot open " + args.vectors_txt);
        img = load_sparse_jsonl(fi, v);
        txt = load_sparse_jsonl(ft, v);
        if (img.size() != txt.size() || img.empty()) {
            throw ConfigError("eval retrieval: vector files must pair up non-empty");
        }
        config_echo = ds.config.to_kv();
    } else {
        const Checkpoint ckpt = load_checkpoint_for(ds, args.checkpoint);
        const auto& samples = ds.split(args.split);
        if (samples.empty()) throw ConfigError("split '" + args.split + "' is empty");
        img = sparse_all(encode_images(ckpt.params, samples, args.threads));
        txt = sparse_all(encode_texts(ckpt.params, samples, args.threads));
        config_echo = ckpt.config.to_kv();
        config_hash = ckpt.config.hash();
    }

    RunContext ctx = RunContext::start(
        "eval-retrieval", args.out, config_echo, config_hash,
        json{{"dataset", args.dataset},
             {"checkpoint", args.checkpoint},
             {"vectors_img", args.vectors_img},
             {"vectors_txt", args.vectors_txt},
             {"split", args.split}},
        {"retrieval.csv"});

    const DirectionRecall t2i = recall_direction(txt, img);
    const DirectionRecall i2t = recall_direction(img, txt);

    std::ofstream csv = ctx.open_csv("retrieval.csv", "direction,R1,R5,R10,n_queries");
    csv << "t2i," << format_double(t2i.r1) << ',' << format_double(t2i.r5) << ','
        << format_double(t2i.r10) << ',' << t2i.n_queries << "\n";
    csv << "i2t," << format_double(i2t.r1) << ',' << format_double(i2t.r5) << ','
        << format_double(i2t.r10) << ',' << i2t.n_queries << "\n";
    csv.close();

    if (!args.save_index.empty()) {
        InvertedIndex::build(img).save(args.save_index);
    }
    std::cout << "t2i  R@1=" << t2i.r1 << " R@5=" << t2i.r5 << " R@10=" << t2i.r10 << "  ("
              << t2i.n_queries << " queries)\n"
              << "i2t  R@1=" << i2t.r1 << " R@5=" << i2t.r5 << " R@10=" << i2t.r10 << "  ("
              << i2t.n_queries << " queries)\n";
    return 0;
}

struct EvalSweepArgs {
    std::string checkpoint;
    std::string dataset;
    std::string split = "test";
    std::string ratios = "0,0.25,0.5,0.75,0.9,0.95,0.98,0.99";
    std::string prune_side = "both";
    std::string out;
    unsigned threads = 1;
};

int cmd_eval_sweep(const EvalSweepArgs& args) {
    const LoadedDataset ds = load_dataset(args.dataset);
    const Checkpoint ckpt = load_checkpoint_for(ds, args.checkpoint);
    const auto& samples = ds.split(args.split);
    if (samples.empty()) throw ConfigError("split '" + args.split + "' is empty");
    const std::vector<double> ratios = parse_double_list(args.ratios, "--ratios");
    const PruneSide side = prune_side_from_string(args.prune_side);

    RunContext ctx = RunContext::start("eval-sweep", args.out, ckpt.config.to_kv(),
                                       ckpt.config.hash(),
                                       json{{"dataset", args.dataset},
                                            {"checkpoint", args.checkpoint},
                                            {"split", args.split},
                                            {"ratios", args.ratios},
                                            {"prune_side", args.prune_side}},
                                       {"sweep.csv"});

    const auto img = encode_images(ckpt.params, samples, args.threads);
    const auto txt = encode_texts(ckpt.params, samples, args.threads);
    const auto rows = sparsity_sweep(img, txt, ratios, side);

    std::ofstream csv = ctx.open_csv("sweep.csv", sweep_csv_header(),
                                     "prune_side=" + args.prune_side);
    for (const auto& row : rows) csv << sweep_csv_line(row) << "\n";
    csv.close();
    for (const auto& row : rows) {
        std::cout << row.direction << " ratio=" << row.ratio << " R@1=" << row.r1
                  << " R@5=" << row.r5 << " R@10=" << row.r10
                  << " activated=" << row.activated_mean << "\n";
    }
    return 0;
}

struct EvalPatchdisArgs {
    std::string checkpoint;
    std::string dataset;
    std::string out;
    std::int64_t baseline_trials = 200;
};

int cmd_eval_patchdis(const EvalPatchdisArgs& args) {
    const LoadedDataset ds = load_dataset(args.dataset);
    const Checkpoint ckpt = load_checkpoint_for(ds, args.checkpoint);
    if (ds.scenes.empty()) throw ConfigError("dataset has no scenes");

    RunContext ctx = RunContext::start("eval-patchdis", args.out, ckpt.config.to_kv(),
                                       ckpt.config.hash(),
                                       json{{"dataset", args.dataset},
                                            {"checkpoint", args.checkpoint},
                                            {"baseline_trials", args.baseline_trials}},
                                       {"patchdis.csv"});

    const PatchDisReport report = eval_patchdis(ckpt.params, ds.scenes);
    const double baseline = random_patchdis_baseline(
        ds.scenes, static_cast<std::size_t>(args.baseline_trials), 12345);

    std::ofstream csv = ctx.open_csv(
        "patchdis.csv", "class_id,iou,support_patches",
        "per-class rows: mean IoU over scenes containing the class; final rows: "
        "macro mIoU (mean over scenes of per-scene mIoU) and the Monte-Carlo random baseline");
    for (std::size_t c = 0; c < report.class_mean_iou.size(); ++c) {
        csv << c << ',' << format_double(report.class_mean_iou[c]) << ','
            << report.class_support[c] << "\n";
    }
    csv << "mIoU," << format_double(report.mean_miou) << ','
        << std::accumulate(report.class_support.begin(), report.class_support.end(),
                           std::size_t{0})
        << "\n";
    csv << "random_baseline," << format_double(baseline) << ',' << args.baseline_trials << "\n";
    csv.close();

    std::cout << "mIoU over " << report.n_scenes << " scenes: " << report.mean_miou
              << "  (random baseline " << baseline << ")\n";
    return 0;
}

struct EvalGradcheckArgs {
    std::string out;
    std::uint64_t seed = 1;
    std::int64_t instances = 20;
    double eps = 1e-5;
    double tol = 1e-4;
};

int cmd_eval_gradcheck(const EvalGradcheckArgs& args) {
    std::optional<RunContext> ctx;
    std::ofstream csv;
    if (!args.out.empty()) {
        KvMap kv;
        kv["seed"] = std::to_string(args.seed);
        kv["instances"] = std::to_string(args.instances);
        kv["eps"] = format_double(args.eps);
        kv["tol"] = format_double(args.tol);
        ctx = RunContext::start("eval-gradcheck", args.out, kv, fnv1a64(canonical_kv(kv)),
                                json::object(), {"gradcheck.csv"});
        csv = ctx->open_csv("gradcheck.csv",
                            "instance,parameter,max_rel_err,mean_rel_err,checked,skipped,status");
    }

    bool all_ok = true;
    GradReport aggregate;
    aggregate.eps = args.eps;
    aggregate.tol = args.tol;
    for (std::int64_t inst = 0; inst < args.instances; ++inst) {
        Rng rng(derive_seed(args.seed, static_cast<std::uint64_t>(inst)));
        Matrix codebook(16, 8);
        for (double& v : codebook.data()) v = rng.normal();
        for (std::size_t r = 0; r < codebook.rows(); ++r) l2_normalize(codebook.row(r));
        EncoderParams params = init_encoder_params(
            codebook, 8, 8, 8, 0.07, 100.0,
            derive_seed(args.seed, 1000 + static_cast<std::uint64_t>(inst)));
        TrainingGraph graph = build_training_graph(params, 4, 4, PenaltyKind::Overuse);
        graph.load_params(params);
        Matrix xi(16, 8), xt(4, 8);
        for (double& v : xi.data()) v = rng.uniform(-0.8, 0.8);
        for (double& v : xt.data()) v = rng.uniform(-0.8, 0.8);
        graph.tape.set_value(graph.in_img, xi);
        graph.tape.set_value(graph.in_txt, xt);
        graph.set_lambdas(5e-4, 1e-3);

        const GradReport report = grad_check(graph.tape, graph.trainable(), args.eps, args.tol);
        all_ok = all_ok && report.all_pass();
        if (!report.all_pass()) {
            std::cout << "instance " << inst << " FAILED:\n" << report.to_table();
        }
        if (aggregate.params.empty()) {
            aggregate.params = report.params;
        } else {
            for (std::size_t k = 0; k < report.params.size(); ++k) {
                ParamGradCheck& agg = aggregate.params[k];
                const ParamGradCheck& got = report.params[k];
                agg.max_rel_err = std::max(agg.max_rel_err, got.max_rel_err);
                agg.mean_rel_err += got.mean_rel_err;
                agg.coords_checked += got.coords_checked;
                agg.coords_skipped += got.coords_skipped;
                agg.pass = agg.pass && got.pass;
            }
        }
        if (csv.is_open()) {
            for (const auto& p : report.params) {
                csv << inst << ',' << p.name << ',' << format_double(p.max_rel_err) << ','
                    << format_double(p.mean_rel_err) << ',' << p.coords_checked << ','
                    << p.coords_skipped << ',' << (p.pass ? "ok" : "FAIL") << "\n";
            }
        }
    }
    for (auto& p : aggregate.params) {
        p.mean_rel_err /= static_cast<double>(std::max<std::int64_t>(args.instances, 1));
    }
    std::cout << "worst over " << args.instances << " instances:\n" << aggregate.to_table();
    std::cout << (all_ok ? "gradcheck: all instances passed\n"
                         : "gradcheck: FAILURES detected\n");
    if (!all_ok) throw std::runtime_error("gradient check failed");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lexalign: sparse lexical vision-language alignment experiments"};
    app.require_subcommand(1);

    GenDataArgs gen_args;
    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic paired dataset");
    gen->add_option("--config", gen_args.config_path, "generator config file (key=value)");
    gen->add_option("--set", gen_args.sets, "override config keys (key=value, repeatable)");
    gen->add_option("--out", gen_args.out, "output directory")->required();
    gen->add_option("--threads", gen_args.threads, "worker cap (results are thread-invariant)");

    TrainArgs train_args;
    CLI::App* tr = app.add_subcommand("train", "train the dual-codebook lexical encoders");
    tr->add_option("--config", train_args.config_path, "train config file (key=value)");
    tr->add_option("--set", train_args.sets, "override config keys (repeatable)");
    tr->add_option("--profile", train_args.profile, "base profile: desk or paper");
    tr->add_option("--penalty", train_args.penalty, "penalty kind: overuse|flops|none");
    tr->add_option("--dataset", train_args.dataset, "dataset directory")->required();
    tr->add_option("--out", train_args.out, "output directory")->required();
    tr->add_option("--resume", train_args.resume_path, "checkpoint to continue from");
    tr->add_option("--stop-after-steps", train_args.stop_after_steps,
                   "halt after this global step (resumable)");
    tr->add_flag("--quiet", train_args.quiet, "suppress per-epoch progress lines");

    DumpArgs dump_args;
    CLI::App* dump = app.add_subcommand("dump-lexical", "ranked token table for samples");
    dump->add_option("--checkpoint", dump_args.checkpoint)->required();
    dump->add_option("--dataset", dump_args.dataset)->required();
    dump->add_option("--split", dump_args.split, "train|val|test");
    dump->add_option("--samples", dump_args.samples, "comma-separated sample ids")->required();
    dump->add_option("--patches", dump_args.patches, "restrict to these patch ids");
    dump->add_option("--modality", dump_args.modality, "img (default) or txt");
    dump->add_option("--top-n", dump_args.top_n, "tokens per sample");
    dump->add_option("--out", dump_args.out, "optional output directory for dump.csv");

    CompareArgs cmp_args;
    CLI::App* cmp = app.add_subcommand("compare-penalty",
                                       "token concentration and recall, two checkpoints");
    cmp->add_option("--checkpoint-a", cmp_args.checkpoint_a)->required();
    cmp->add_option("--checkpoint-b", cmp_args.checkpoint_b)->required();
    cmp->add_option("--dataset", cmp_args.dataset)->required();
    cmp->add_option("--split", cmp_args.split);
    cmp->add_option("--out", cmp_args.out)->required();
    cmp->add_option("--threads", cmp_args.threads);

    CLI::App* ev = app.add_subcommand("eval", "evaluation suites");
    ev->require_subcommand(1);

    EvalRetrievalArgs ret_args;
    CLI::App* ev_ret = ev->add_subcommand("retrieval", "cross-modal R@K on a split");
    ev_ret->add_option("--checkpoint", ret_args.checkpoint, "encode the split on the fly");
    ev_ret->add_option("--vectors-img", ret_args.vectors_img, "pre-encoded sparse jsonl");
    ev_ret->add_option("--vectors-txt", ret_args.vectors_txt, "pre-encoded sparse jsonl");
    ev_ret->add_option("--dataset", ret_args.dataset)->required();
    ev_ret->add_option("--split", ret_args.split);
    ev_ret->add_option("--out", ret_args.out)->required();
    ev_ret->add_option("--save-index", ret_args.save_index, "persist the image index");
    ev_ret->add_option("--threads", ret_args.threads);

    EvalSweepArgs sweep_args;
    CLI::App* ev_sweep = ev->add_subcommand("sweep", "retrieval across sparsity ratios");
    ev_sweep->add_option("--checkpoint", sweep_args.checkpoint)->required();
    ev_sweep->add_option("--dataset", sweep_args.dataset)->required();
    ev_sweep->add_option("--split", sweep_args.split);
    ev_sweep->add_option("--ratios", sweep_args.ratios, "comma-separated, each in [0,1)");
    ev_sweep->add_option("--prune-side", sweep_args.prune_side, "both|query|corpus");
    ev_sweep->add_option("--out", sweep_args.out)->required();
    ev_sweep->add_option("--threads", sweep_args.threads);

    EvalPatchdisArgs pd_args;
    CLI::App* ev_pd = ev->add_subcommand("patchdis", "patch-level zero-shot mIoU");
    ev_pd->add_option("--checkpoint", pd_args.checkpoint)->required();
    ev_pd->add_option("--dataset", pd_args.dataset)->required();
    ev_pd->add_option("--out", pd_args.out)->required();
    ev_pd->add_option("--baseline-trials", pd_args.baseline_trials);

    EvalGradcheckArgs gc_args;
    CLI::App* ev_gc = ev->add_subcommand("gradcheck", "finite-difference gradient audit");
    ev_gc->add_option("--out", gc_args.out, "optional output directory");
    ev_gc->add_option("--seed", gc_args.seed);
    ev_gc->add_option("--instances", gc_args.instances);
    ev_gc->add_option("--eps", gc_args.eps);
    ev_gc->add_option("--tol", gc_args.tol);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*gen) return cmd_gen_data(gen_args);
        if (*tr) return cmd_train(train_args);
        if (*dump) return cmd_dump_lexical(dump_args);
        if (*cmp) return cmd_compare_penalty(cmp_args);
        if (*ev_ret) return cmd_eval_retrieval(ret_args);
        if (*ev_sweep) return cmd_eval_sweep(sweep_args);
        if (*ev_pd) return cmd_eval_patchdis(pd_args);
        if (*ev_gc) return cmd_eval_gradcheck(gc_args);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
