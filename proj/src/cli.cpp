#include "mmmt/cli.hpp"

#include <algorithm>
#include <future>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "mmmt/config_io.hpp"
#include "mmmt/data.hpp"
#include "mmmt/error.hpp"
#include "mmmt/evaluation.hpp"
#include "mmmt/model.hpp"
#include "mmmt/training.hpp"

namespace mmmt {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// Shared option groups

struct TrainOverrides {
    std::string config_path;
    std::string heads;
    std::string modalities;
    std::string oversample;
    std::string patience;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint32_t> epochs;
    std::optional<std::uint32_t> batch_size;
    std::optional<std::uint32_t> emotion_classes;
    bool dims_from_data = false;
};

// CLI11's PositiveNumber reports its range in scientific notation.
const CLI::Validator kPositiveInteger(
    [](std::string& text) -> std::string {
        try {
            std::size_t used = 0;
            if (std::stoll(text, &used) >= 1 && used == text.size()) return {};
        } catch (const std::exception&) {
        }
        return "expected a positive integer, got '" + text + "'";
    },
    "POSITIVE");

void add_train_options(CLI::App* cmd, TrainOverrides& o, bool with_modalities) {
    cmd->add_option("--config", o.config_path, "JSON run config or run manifest (defaults apply when omitted)");
    cmd->add_option("--heads", o.heads, "comma list of heads to train, or 'all'");
    if (with_modalities) cmd->add_option("--modalities", o.modalities, "comma list of image,clip,text, or 'all'");
    cmd->add_option("--oversample", o.oversample, "none | mean-inverse | single-head:<head>");
    cmd->add_option("--patience", o.patience, "early-stop patience in epochs, or 'none'");
    cmd->add_option("--seed", o.seed, "run seed");
    cmd->add_option("--epochs", o.epochs, "maximum epochs")->check(kPositiveInteger);
    cmd->add_option("--batch-size", o.batch_size, "mini-batch size")->check(kPositiveInteger);
    cmd->add_option("--emotion-classes", o.emotion_classes, "4 (intensity heads) or 2 (presence heads)")
        ->check(CLI::IsMember({2, 4}));
    cmd->add_flag("--dims-from-data", o.dims_from_data, "take input dims from the training file header");
}

RunConfig resolve_config(const TrainOverrides& o) {
    RunConfig cfg = o.config_path.empty() ? parse_run_config(nlohmann::json::object()) : load_run_config(o.config_path);
    auto wrap = [](const char* flag, auto&& f) {
        try {
            f();
        } catch (const ConfigError& e) {
            throw ConfigError(std::string(flag) + ": " + e.what());
        }
    };
    if (!o.heads.empty()) wrap("--heads", [&] { cfg.train.heads = HeadMask::parse(o.heads); });
    if (!o.modalities.empty()) wrap("--modalities", [&] { cfg.train.modalities = ModalitySet::parse(o.modalities); });
    if (!o.oversample.empty()) wrap("--oversample", [&] { cfg.train.oversample = OversampleMode::parse(o.oversample); });
    if (!o.patience.empty()) {
        if (o.patience == "none") {
            cfg.train.early_stop_patience.reset();
        } else {
            wrap("--patience", [&] {
                try {
                    const long v = std::stol(o.patience);
                    if (v < 0) throw std::invalid_argument("negative");
                    cfg.train.early_stop_patience = static_cast<std::uint32_t>(v);
                } catch (const std::logic_error&) {
                    throw ConfigError("expected a non-negative integer or 'none'");
                }
            });
        }
    }
    if (o.seed) cfg.train.seed = *o.seed;
    if (o.epochs) cfg.train.max_epochs = *o.epochs;
    if (o.batch_size) cfg.train.batch_size = *o.batch_size;
    if (o.emotion_classes) cfg.model.emotion_classes = *o.emotion_classes;
    cfg.model.validate();
    cfg.train.validate();
    return cfg;
}

void check_dims(const FeatureDims& model_dims, const FeatureDims& file_dims, const std::string& file, bool as_config) {
    for (Modality m : kAllModalities) {
        if (model_dims[m] == file_dims[m]) continue;
        const std::string msg = "model.d_" + std::string(modality_name(m)) + " is " + std::to_string(model_dims[m]) +
                                " but " + file + " header says " + std::to_string(file_dims[m]);
        if (as_config) throw ConfigError(msg);
        throw DataError(msg);
    }
}

struct Splits {
    FeatureFile train;
    FeatureFile val;
    std::string train_digest;
    std::string val_digest;
};

Splits load_splits(const std::string& train_path, const std::string& val_path, RunConfig& cfg, bool dims_from_data) {
    Splits s;
    s.train = read_feature_file(train_path);
    s.val = read_feature_file(val_path);
    s.train_digest = sha256_file(train_path);
    s.val_digest = sha256_file(val_path);
    if (dims_from_data) cfg.model.input_dims = s.train.dims;
    check_dims(cfg.model.input_dims, s.train.dims, train_path, true);
    check_dims(cfg.model.input_dims, s.val.dims, val_path, true);
    return s;
}

std::string json_text(const ordered_json& j) {
    return j.dump(2) + "\n";
}

// Runs one training job and writes checkpoint.mmt, epoch_log.jsonl,
// metrics.json and manifest.json into `out_dir`.
struct RunOutcome {
    MetricsReport report;
    TrainResult result;
    std::string checkpoint_digest;
};

RunOutcome run_training(const RunConfig& cfg, const Splits& splits, const std::string& train_path,
                        const std::string& val_path, const fs::path& out_dir, std::ostream* progress,
                        std::ostream& warn_stream, std::mutex& io_mutex) {
    fs::create_directories(out_dir);
    const fs::path checkpoint = out_dir / "checkpoint.mmt";
    const CheckpointMeta meta{cfg.train.modalities, cfg.train.heads};

    RngState init_rng = RngState::derive(cfg.train.seed, 0);
    MmmtModel model = init_model(cfg.model, init_rng);

    TrainHooks hooks;
    hooks.warn = [&](const std::string& msg) {
        std::lock_guard lock(io_mutex);
        warn_stream << "warning: " << msg << '\n';
    };
    hooks.on_improvement = [&](const MmmtModel& best, const EpochLog&) { save_checkpoint(checkpoint, best, meta); };
    if (progress) {
        hooks.on_epoch = [&](const EpochLog& log) {
            std::lock_guard lock(io_mutex);
            *progress << epoch_log_line(log) << '\n';
        };
    }
    RunOutcome outcome;
    outcome.result = train(std::move(model), splits.train.records, splits.val.records, cfg.train, hooks);
    save_checkpoint(checkpoint, outcome.result.best_model, meta);

    std::string log_text;
    for (const EpochLog& log : outcome.result.log) log_text += epoch_log_line(log) + "\n";
    write_file_atomic(out_dir / "epoch_log.jsonl", log_text);

    outcome.report = evaluate_model(outcome.result.best_model, splits.val.records, cfg.train.modalities,
                                    cfg.train.batch_size);
    write_file_atomic(out_dir / "metrics.json", json_text(to_json(outcome.report)));
    outcome.checkpoint_digest = sha256_file(checkpoint);

    ordered_json manifest;
    manifest["command"] = "train";
    manifest["config"] = to_json(cfg);
    manifest["config_digest"] = config_digest(cfg);
    manifest["seed"] = cfg.train.seed;
    manifest["inputs"] = {{"train", {{"path", train_path}, {"sha256", splits.train_digest}}},
                          {"val", {{"path", val_path}, {"sha256", splits.val_digest}}}};
    manifest["artifacts"] = {{"checkpoint", "checkpoint.mmt"},
                             {"checkpoint_sha256", outcome.checkpoint_digest},
                             {"epoch_log", "epoch_log.jsonl"},
                             {"metrics", "metrics.json"}};
    manifest["best_epoch"] = outcome.result.best_epoch;
    manifest["best_metric"] = outcome.result.best_metric;
    manifest["epochs_run"] = outcome.result.log.size();
    manifest["stop_reason"] = outcome.result.stop_reason;
    manifest["metrics"] = to_json(outcome.report);
    write_file_atomic(out_dir / "manifest.json", json_text(manifest));
    return outcome;
}

// Heads the model was not trained on are reported as N/A.
std::vector<LabelSet> golds_for(std::span<const FeatureRecord> records, HeadMask heads) {
    std::vector<LabelSet> golds;
    golds.reserve(records.size());
    for (const auto& r : records) {
        LabelSet l = r.labels;
        for (Head h : kAllHeads) {
            if (!heads.contains(h)) l[h] = LabelSet::kAbsent;
        }
        golds.push_back(l);
    }
    return golds;
}

void print_stats(std::ostream& out, const SplitStats& s) {
    out << "records: " << s.size << '\n';
    for (Head h : kAllHeads) {
        out << std::string(head_name(h)) << ':';
        for (std::size_t c : s[h]) out << ' ' << c;
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_gen(std::size_t n, std::uint64_t seed, double separability, const std::string& weights,
            const std::string& sampling, const std::string& config_path, const std::string& out_path,
            std::ostream& out) {
    SyntheticSpec spec;
    spec.n = n;
    spec.seed = seed;
    spec.separability = separability;
    spec.class_weights = parse_class_weights(weights);
    if (!config_path.empty()) spec.dims = load_run_config(config_path).model.input_dims;
    if (sampling == "quota" || (sampling.empty() && weights.starts_with("table1-"))) {
        spec.sampling = LabelSampling::exact_quota;
    } else if (sampling.empty() || sampling == "multinomial") {
        spec.sampling = LabelSampling::multinomial;
    } else {
        throw ConfigError("--sampling must be multinomial or quota");
    }
    const auto records = generate_synthetic(spec);
    write_feature_file(out_path, spec.dims, records);
    out << "wrote " << records.size() << " records to " << out_path << " (dims " << spec.dims.image << '/'
        << spec.dims.clip << '/' << spec.dims.text << ", sha256 " << sha256_file(out_path) << ")\n";
    print_stats(out, compute_stats(records));
    return kExitOk;
}

int cmd_stats(const std::string& data, const std::string& manifest, const std::string& check, std::ostream& out,
              std::ostream& err) {
    if (data.empty() == manifest.empty()) throw ConfigError("give exactly one of --data or --manifest");
    const SplitStats stats =
        data.empty() ? compute_stats(read_label_manifest(manifest)) : compute_stats(read_feature_file(data).records);
    print_stats(out, stats);
    if (check.empty()) return kExitOk;
    if (!check.starts_with("table1-")) throw ConfigError("--check must be table1-train, table1-validation or table1-test");
    const SplitStats expected = table1_stats(parse_split(check.substr(7)));
    bool ok = expected.size == stats.size;
    if (!ok) err << "record count " << stats.size << " != " << expected.size << '\n';
    for (Head h : kAllHeads) {
        for (std::size_t c = 0; c < expected[h].size(); ++c) {
            if (expected[h][c] != stats[h][c]) {
                ok = false;
                err << head_name(h) << " class " << c << ": " << stats[h][c] << " != " << expected[h][c] << '\n';
            }
        }
    }
    out << (ok ? "matches " : "DOES NOT match ") << check << '\n';
    return ok ? kExitOk : kExitRuntime;
}

int cmd_table1(const std::string& split, std::uint64_t seed, const std::string& out_path, std::ostream& out) {
    const auto rows = table1_manifest(parse_split(split), seed);
    write_label_manifest(out_path, rows);
    out << "wrote " << rows.size() << " rows to " << out_path << '\n';
    return kExitOk;
}

int cmd_train(const TrainOverrides& o, const std::string& train_path, const std::string& val_path,
              const std::string& out_dir, bool verbose, std::ostream& out, std::ostream& err) {
    RunConfig cfg = resolve_config(o);
    const Splits splits = load_splits(train_path, val_path, cfg, o.dims_from_data);
    std::mutex io;
    const RunOutcome r = run_training(cfg, splits, train_path, val_path, out_dir, verbose ? &out : nullptr, err, io);
    out << "trained " << r.result.log.size() << " epochs (" << r.result.stop_reason << "); best epoch "
        << r.result.best_epoch << ", validation metric " << format_score(r.result.best_metric) << '\n';
    out << "checkpoint: " << (fs::path(out_dir) / "checkpoint.mmt").string() << " (sha256 " << r.checkpoint_digest
        << ")\n\n";
    out << render_report(r.report, "validation");
    return kExitOk;
}

struct AblationSubset {
    std::string name;
    std::string slug;
    ModalitySet modalities;
};

std::vector<AblationSubset> ablation_subsets() {
    using M = Modality;
    const std::vector<std::pair<std::string, std::vector<M>>> spec = {
        {"text", {M::text}},
        {"image", {M::image}},
        {"clip", {M::clip}},
        {"image+text", {M::image, M::text}},
        {"clip+image", {M::clip, M::image}},
        {"clip+text", {M::clip, M::text}},
        {"image+clip+text", {M::image, M::clip, M::text}},
    };
    std::vector<AblationSubset> out;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        out.push_back({ablation_row_names().at(i), spec[i].first, ModalitySet(spec[i].second)});
    }
    return out;
}

int cmd_ablate(const TrainOverrides& o, const std::string& train_path, const std::string& val_path,
               const std::string& out_dir, bool parallel, std::ostream& out, std::ostream& err) {
    RunConfig base = resolve_config(o);
    const Splits splits = load_splits(train_path, val_path, base, o.dims_from_data);
    const auto subsets = ablation_subsets();
    const std::string shared_digest = config_digest(base, true);

    std::vector<RunConfig> configs;
    for (const auto& s : subsets) {
        RunConfig c = base;
        c.train.modalities = s.modalities;
        configs.push_back(std::move(c));
    }
    std::mutex io;
    std::vector<RunOutcome> outcomes(subsets.size());
    auto run_one = [&](std::size_t i) {
        outcomes[i] = run_training(configs[i], splits, train_path, val_path, fs::path(out_dir) / subsets[i].slug,
                                   nullptr, err, io);
    };
    if (parallel) {
        std::vector<std::future<void>> jobs;
        for (std::size_t i = 0; i < subsets.size(); ++i) jobs.push_back(std::async(std::launch::async, run_one, i));
        for (auto& j : jobs) j.get();
    } else {
        for (std::size_t i = 0; i < subsets.size(); ++i) run_one(i);
    }

    std::vector<TaskRow> rows;
    ordered_json j;
    j["config_digest"] = shared_digest;
    j["rows"] = ordered_json::array();
    for (std::size_t i = 0; i < subsets.size(); ++i) {
        rows.push_back(task_row(outcomes[i].report, subsets[i].name));
        ordered_json row;
        row["features"] = subsets[i].name;
        row["modalities"] = subsets[i].modalities.to_string();
        row["config_digest"] = config_digest(configs[i], true);
        row["run_dir"] = subsets[i].slug;
        row["best_epoch"] = outcomes[i].result.best_epoch;
        row["metrics"] = to_json(outcomes[i].report);
        j["rows"].push_back(row);
    }
    const std::string table = render_task_table("Features Used", rows);
    write_file_atomic(fs::path(out_dir) / "ablation.txt", table);
    write_file_atomic(fs::path(out_dir) / "ablation.json", json_text(j));
    out << table << "config digest: " << shared_digest << '\n';
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& predictions, const std::string& data,
             const std::string& compare, const std::string& json_out, int emotion_classes, std::ostream& out) {
    if (checkpoint.empty() == predictions.empty()) throw ConfigError("give exactly one of --checkpoint or --predictions");
    const FeatureFile file = read_feature_file(data);
    MetricsReport report;
    if (!checkpoint.empty()) {
        const LoadedCheckpoint ck = load_checkpoint(checkpoint);
        check_dims(ck.model.config.input_dims, file.dims, data, false);
        const auto preds = infer(ck.model, file.records, ck.meta.modalities);
        report = evaluate(preds, golds_for(file.records, ck.meta.heads),
                          static_cast<int>(ck.model.config.emotion_classes));
    } else {
        const auto rows = read_label_manifest(predictions);
        std::map<std::string, LabelSet> by_id;
        for (const auto& r : rows) by_id[r.id] = r.labels;
        HeadMask predicted;
        for (const auto& r : rows) {
            for (Head h : kAllHeads) {
                if (r.labels.has(h)) predicted.set(h);
            }
        }
        std::vector<LabelSet> preds;
        for (const auto& rec : file.records) {
            const auto it = by_id.find(rec.id);
            if (it == by_id.end()) throw DataError("no prediction for record '" + rec.id + "'");
            preds.push_back(it->second);
        }
        report = evaluate(preds, golds_for(file.records, predicted), emotion_classes);
    }
    if (!json_out.empty()) write_file_atomic(json_out, json_text(to_json(report)));
    out << render_report(report);
    if (!compare.empty()) out << '\n' << render_comparison(report, compare);
    return kExitOk;
}

int cmd_predict(const std::string& checkpoint, const std::string& data, const std::string& out_path,
                std::ostream& out) {
    const LoadedCheckpoint ck = load_checkpoint(checkpoint);
    const FeatureFile file = read_feature_file(data);
    check_dims(ck.model.config.input_dims, file.dims, data, false);
    const auto preds = infer(ck.model, file.records, ck.meta.modalities);
    std::vector<ManifestRow> rows;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        LabelSet l = preds[i];
        for (Head h : kAllHeads) {
            if (!ck.meta.heads.contains(h)) l[h] = LabelSet::kAbsent;
        }
        rows.push_back({file.records[i].id, l});
    }
    write_label_manifest(out_path, rows);
    out << "wrote " << rows.size() << " predictions to " << out_path << '\n';
    return kExitOk;
}

int cmd_gradcheck(const std::string& config_path, std::uint64_t seed, double eps, std::size_t max_entries,
                  std::ostream& out) {
    const RunConfig cfg = config_path.empty() ? parse_run_config(nlohmann::json::object()) : load_run_config(config_path);
    RngState rng = RngState::derive(seed, 0);
    MmmtModel model = init_model(cfg.model, rng);
    SyntheticSpec spec;
    spec.n = 2;
    spec.seed = seed;
    spec.separability = 0.5;
    spec.dims = cfg.model.input_dims;
    const auto batch = generate_synthetic(spec);
    GradCheckOptions options;
    options.eps = eps;
    options.max_entries_per_param = max_entries;
    const GradCheckResult r = check_model_gradients(model, batch, cfg.train.modalities, cfg.train.heads, options);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", r.max_rel_error);
    out << "checked " << r.entries_checked << " of " << parameter_count(cfg.model) << " parameters; max relative error "
        << buf;
    if (!r.worst_param.empty()) out << " (" << r.worst_param << "[" << r.worst_index << "])";
    out << '\n';
    if (r.max_rel_error < 1e-4) {
        out << "gradient check passed\n";
        return kExitOk;
    }
    out << "gradient check FAILED (threshold 1e-4)\n";
    return kExitRuntime;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multimodal multitask transformer for meme affect classification"};
    app.require_subcommand(1);

    // gen
    std::size_t gen_n = 0;
    std::uint64_t gen_seed = 0;
    double gen_sep = 1.0;
    std::string gen_weights = "uniform", gen_sampling, gen_config, gen_out;
    auto* gen = app.add_subcommand("gen", "generate a synthetic feature file");
    gen->add_option("--n", gen_n, "number of records")->required()->check(kPositiveInteger);
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--separability", gen_sep, "0 = pure noise, 1 = noiseless class anchors")->check(CLI::Range(0.0, 1.0));
    gen->add_option("--weights", gen_weights, "uniform | table1-<split> | head=w,w,...;head=...");
    gen->add_option("--sampling", gen_sampling, "multinomial | quota (default: quota for table1 presets)");
    gen->add_option("--config", gen_config, "take input dims from this run config");
    gen->add_option("--out", gen_out, "output feature file")->required();

    // stats
    std::string stats_data, stats_manifest, stats_check;
    auto* stats = app.add_subcommand("stats", "label distribution of a feature file or CSV manifest");
    stats->add_option("--data", stats_data, "feature file");
    stats->add_option("--manifest", stats_manifest, "CSV label manifest");
    stats->add_option("--check", stats_check, "compare against table1-<split>; exit 1 on any mismatch");

    // table1
    std::string t1_split = "train", t1_out;
    std::uint64_t t1_seed = 2022;
    auto* table1 = app.add_subcommand("table1", "write a label manifest with the published split distribution");
    table1->add_option("--split", t1_split, "train | validation | test");
    table1->add_option("--seed", t1_seed, "pairing seed");
    table1->add_option("--out", t1_out, "output CSV")->required();

    // train
    TrainOverrides train_o;
    std::string train_train, train_val, train_out;
    bool train_verbose = false;
    auto* train_cmd = app.add_subcommand("train", "train a model and keep the best validation checkpoint");
    add_train_options(train_cmd, train_o, true);
    train_cmd->add_option("--train", train_train, "training feature file")->required();
    train_cmd->add_option("--val", train_val, "validation feature file")->required();
    train_cmd->add_option("--out", train_out, "output directory")->required();
    train_cmd->add_flag("--verbose", train_verbose, "print the epoch log while training");

    // ablate
    TrainOverrides ablate_o;
    std::string ablate_train, ablate_val, ablate_out;
    bool ablate_parallel = false;
    auto* ablate = app.add_subcommand("ablate", "train on all seven modality subsets with one config");
    add_train_options(ablate, ablate_o, false);
    ablate->add_option("--train", ablate_train, "training feature file")->required();
    ablate->add_option("--val", ablate_val, "validation feature file")->required();
    ablate->add_option("--out", ablate_out, "output directory")->required();
    ablate->add_flag("--parallel", ablate_parallel, "run the seven trainings concurrently");

    // eval
    std::string eval_ck, eval_preds, eval_data, eval_compare, eval_json;
    int eval_k = 4;
    auto* eval = app.add_subcommand("eval", "score a checkpoint or a prediction CSV against labelled features");
    eval->add_option("--checkpoint", eval_ck, "model checkpoint");
    eval->add_option("--predictions", eval_preds, "prediction CSV from `predict`");
    eval->add_option("--data", eval_data, "labelled feature file")->required();
    eval->add_option("--compare", eval_compare, "print a reference table: table2 | table3 | table5 | table7");
    eval->add_option("--json", eval_json, "also write the report as JSON");
    eval->add_option("--emotion-classes", eval_k, "emotion label width of --predictions")->check(CLI::IsMember({2, 4}));

    // predict
    std::string pred_ck, pred_data, pred_out;
    auto* pred = app.add_subcommand("predict", "write per-record predictions as CSV");
    pred->add_option("--checkpoint", pred_ck, "model checkpoint")->required();
    pred->add_option("--data", pred_data, "feature file")->required();
    pred->add_option("--out", pred_out, "output CSV")->required();

    // gradcheck
    std::string gc_config;
    std::uint64_t gc_seed = 0;
    double gc_eps = 1e-5;
    std::size_t gc_max = 64;
    bool gc_full = false;
    auto* gc = app.add_subcommand("gradcheck", "compare analytic gradients with central differences");
    gc->add_option("--config", gc_config, "run config (model section and heads/modalities are used)");
    gc->add_option("--seed", gc_seed, "seed for the model and the two-record batch");
    gc->add_option("--eps", gc_eps, "finite-difference step")->check(CLI::Range(1e-6, 1e-4));
    gc->add_option("--max-entries", gc_max, "entries probed per parameter tensor (0 = all)");
    gc->add_flag("--full", gc_full, "probe every entry of every parameter");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*gen) return cmd_gen(gen_n, gen_seed, gen_sep, gen_weights, gen_sampling, gen_config, gen_out, out);
        if (*stats) return cmd_stats(stats_data, stats_manifest, stats_check, out, err);
        if (*table1) return cmd_table1(t1_split, t1_seed, t1_out, out);
        if (*train_cmd) return cmd_train(train_o, train_train, train_val, train_out, train_verbose, out, err);
        if (*ablate) return cmd_ablate(ablate_o, ablate_train, ablate_val, ablate_out, ablate_parallel, out, err);
        if (*eval) return cmd_eval(eval_ck, eval_preds, eval_data, eval_compare, eval_json, eval_k, out);
        if (*pred) return cmd_predict(pred_ck, pred_data, pred_out, out);
        if (*gc) return cmd_gradcheck(gc_config, gc_seed, gc_eps, gc_full ? 0 : gc_max, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace mmmt
