// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>

#include <unistd.h>

#include <json.hpp>

#include "mmmt/cli.hpp"
#include "mmmt/config_io.hpp"
#include "mmmt/data.hpp"
#include "mmmt/evaluation.hpp"
#include "mmmt/model.hpp"
#include "mmmt/ordinal.hpp"
#include "mmmt/training.hpp"

using namespace mmmt;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

class ScratchDir {
public:
    explicit ScratchDir(const std::string& tag)
        : path_(fs::temp_directory_path() / ("mmmt-accept-" + tag + "-" + std::to_string(::getpid()))) {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    std::string operator/(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

int cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    if (code != 0) std::cerr << err.str();
    return code;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

ModelConfig small_config() {
    ModelConfig c;
    c.input_dims = {24, 16, 20};
    c.d_common = 32;
    c.d_model = 16;
    return c;
}

std::vector<FeatureRecord> synthetic(std::size_t n, std::uint64_t seed, double sep, const FeatureDims& dims) {
    SyntheticSpec s;
    s.n = n;
    s.seed = seed;
    s.separability = sep;
    s.dims = dims;
    return generate_synthetic(s);
}

// ---------------------------------------------------------------------------

Verdict gradient() {
    const auto t0 = std::chrono::steady_clock::now();
    RngState rng(1);
    const ModelConfig c = small_config();
    MmmtModel m = init_model(c, rng);
    const auto batch = synthetic(2, 4, 0.5, c.input_dims);
    const auto r = check_model_gradients(m, batch, ModalitySet::all(), HeadMask::all());
    const double t = seconds_since(t0);
    Verdict v;
    v.pass = r.max_rel_error < 1e-4 && r.entries_checked == parameter_count(c) && t < 60.0;
    v.detail = "max rel error " + fmt("%.2e", r.max_rel_error) + " over " + std::to_string(r.entries_checked) + "/" +
               std::to_string(parameter_count(c)) + " parameters in " + fmt("%.1f", t) + " s";
    return v;
}

Verdict permutation() {
    RngState rng(2);
    const ModelConfig c;
    const MmmtModel m = init_model(c, rng);
    const auto batch = synthetic(100, 9, 0.3, c.input_dims);
    std::vector<Modality> order(kAllModalities.begin(), kAllModalities.end());
    RngState unused(0);
    const HeadOutputs ref = forward(m, batch, ModalitySet(order), false, unused);
    double worst = 0.0;
    int perms = 0;
    do {
        const HeadOutputs out = forward(m, batch, ModalitySet(order), false, unused);
        for (Head h : kAllHeads) {
            for (std::size_t i = 0; i < out[h].size(); ++i) worst = std::max(worst, std::abs(out[h][i] - ref[h][i]));
        }
        ++perms;
    } while (std::next_permutation(order.begin(), order.end()));
    return {worst < 1e-9 && perms == 6, std::to_string(perms) + " orders x 100 inputs, max diff " + fmt("%.1e", worst)};
}

Verdict coral() {
    bool ok = true;
    for (int k = 2; k <= 8; ++k) {
        for (int r = 0; r < k; ++r) {
            const auto e = extend_labels(r, k);
            ok = ok && e.is_prefix() && e.popcount() == static_cast<std::size_t>(r);
        }
    }
    RngState rng(4);
    for (int trial = 0; trial < 200 && ok; ++trial) {
        const int k = 2 + static_cast<int>(rng.below(7));
        CoralHead head("h", 1, k);
        head.weight.value[0] = 1.0;
        std::vector<double> b(head.thresholds());
        for (double& x : b) x = rng.normal() * 4.0;
        std::sort(b.begin(), b.end(), std::greater<>());
        head.bias.value = Tensor({b.size()}, b);
        const Tensor logits = coral_forward(Tensor({1, 1}, {rng.normal() * 3.0}), head);
        for (std::size_t i = 1; i < logits.size(); ++i) ok = ok && sigmoid(logits[i]) <= sigmoid(logits[i - 1]);
    }
    const double loss = coral_loss(Tensor::from_rows({{0, 0, 0}}), std::vector<ExtendedLabels>{extend_labels(2, 4)});
    const double err = std::abs(loss - 3.0 * std::log(2.0));
    return {ok && err < 1e-12, "round trip K<=8, monotone probabilities, |loss - 3 ln 2| = " + fmt("%.1e", err)};
}

Verdict metric_oracle() {
    struct Q {
        long long n = 0, d = 1;
        Q() = default;
        Q(long long a, long long b) : n(a / std::gcd(a, b)), d(b / std::gcd(a, b)) {}
        Q operator+(Q o) const { return {n * o.d + o.n * d, d * o.d}; }
        Q operator*(Q o) const { return {n * o.n, d * o.d}; }
        Q operator/(Q o) const { return {n * o.d, d * o.n}; }
    };
    auto oracle = [](const std::vector<int>& p, const std::vector<int>& g, int k) {
        std::vector<std::vector<long long>> cm(k, std::vector<long long>(k, 0));
        for (std::size_t i = 0; i < p.size(); ++i) ++cm[g[i]][p[i]];
        Q total;
        for (int c = 0; c < k; ++c) {
            long long row = 0, col = 0;
            for (int j = 0; j < k; ++j) {
                row += cm[c][j];
                col += cm[j][c];
            }
            if (row == 0 || cm[c][c] == 0) continue;
            const Q prec(cm[c][c], col), rec(cm[c][c], row);
            total = total + Q(row, static_cast<long long>(p.size())) * (Q(2, 1) * prec * rec / (prec + rec));
        }
        return static_cast<double>(total.n) / static_cast<double>(total.d);
    };
    RngState rng(77);
    int mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int k = 2 + static_cast<int>(rng.below(4));
        const std::size_t n = 1 + rng.below(500);
        std::vector<int> g(n), p(n);
        for (std::size_t i = 0; i < n; ++i) {
            g[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
            p[i] = rng.uniform() < 0.5 ? g[i] : static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
        }
        if (weighted_f1(p, g, k) != oracle(p, g, k)) ++mismatches;
    }
    const double hand = weighted_f1(std::vector<int>{0, 1, 1}, std::vector<int>{0, 0, 1}, 2);
    return {mismatches == 0 && hand == 2.0 / 3.0,
            std::to_string(mismatches) + " mismatches in 1000 fuzz cases, hand case " + fmt("%.17g", hand)};
}

Verdict aggregation() {
    SubtaskScores s;
    s.humour_b = 0.8111;
    s.sarcasm_b = 0.8191;
    s.offensive_b = 0.485;
    s.motivation = 0.98;
    const auto b = aggregate(s).task_b;
    return {b && std::abs(*b - 0.7738) <= 0.0005, "task B " + (b ? fmt("%.6f", *b) : std::string("N/A"))};
}

Verdict schedule() {
    const TrainConfig cfg;
    const std::uint64_t spe = 28;
    const std::uint64_t s = 5 * spe;
    const double a = lr_at(0, spe, cfg), b = lr_at(s, spe, cfg), c = lr_at(2 * s, spe, cfg);
    return {a == 1e-4 && b == 1e-3 && c == 1e-4,
            "step 0 " + fmt("%.17g", a) + ", peak " + fmt("%.17g", b) + ", cycle end " + fmt("%.17g", c)};
}

Verdict oversampling() {
    std::vector<LabelSet> labels(100000);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i][Head::motivation] = i % 10 == 0 ? 1 : 0;
    OversampleMode mode;
    mode.kind = OversampleMode::Kind::single_head;
    mode.head = Head::motivation;
    const auto idx = oversample_indices(labels, mode, 123);
    std::size_t minority = 0;
    for (auto i : idx) minority += labels[i][Head::motivation] == 1 ? 1 : 0;
    const double f = static_cast<double>(minority) / static_cast<double>(idx.size());
    return {std::abs(f - 0.5) <= 0.01 && idx.size() == 100000, "minority frequency " + fmt("%.4f", f)};
}

Verdict overfit() {
    const auto t0 = std::chrono::steady_clock::now();
    const ModelConfig c;
    const auto data = synthetic(64, 12, 1.0, c.input_dims);
    TrainConfig cfg;
    cfg.max_epochs = 500;
    cfg.early_stop_patience.reset();
    cfg.seed = 12;
    TrainHooks hooks;
    hooks.should_stop = [](const EpochLog& l) {
        return std::all_of(l.val_f1.begin(), l.val_f1.end(), [](const auto& f) { return !f || *f >= 0.99; });
    };
    RngState rng = RngState::derive(cfg.seed, 0);
    const auto result = train(init_model(c, rng), data, data, cfg, hooks);
    const auto report = evaluate_model(result.best_model, data, cfg.modalities);
    double lowest = 1.0;
    for (Head h : kAllHeads) lowest = std::min(lowest, head_score(report, h).value_or(0.0));
    const double t = seconds_since(t0);
    return {lowest >= 0.99 && result.log.size() <= 500 && t < 300.0,
            "lowest head F1 " + fmt("%.4f", lowest) + " after " + std::to_string(result.log.size()) + " epochs in " +
                fmt("%.1f", t) + " s"};
}

Verdict table1() {
    // Train / validation / test counts as published.
    const std::array<std::array<std::vector<std::size_t>, 5>, 3> published = {{
        {{{973, 4510, 1517}, {918, 3666, 1865, 551}, {3871, 1759, 1069, 301}, {5182, 1107, 529, 182}, {6714, 286}}},
        {{{200, 975, 325}, {229, 745, 419, 107}, {804, 388, 246, 62}, {1110, 238, 107, 45}, {1430, 70}}},
        {{{451, 971, 78}, {62, 892, 398, 148}, {185, 248, 892, 175}, {943, 457, 87, 13}, {1480, 20}}},
    }};
    const char* names[3] = {"train", "validation", "test"};
    int bad = 0;
    for (int s = 0; s < 3; ++s) {
        const auto path = fs::path(MMMT_DATA_DIR) / ("table1_" + std::string(names[s]) + ".csv");
        const SplitStats st = compute_stats(read_label_manifest(path));
        for (Head h : kAllHeads) bad += st[h] == published[s][static_cast<int>(h)] ? 0 : 1;
        bad += cli({"stats", "--manifest", path.string(), "--check", std::string("table1-") + names[s]}) == 0 ? 0 : 1;
    }
    return {bad == 0, std::to_string(bad) + " mismatching rows across bundled train/validation/test manifests"};
}

Verdict ablation() {
    ScratchDir dir("ablate");
    // Default model; early stopping ends each run once the score plateaus.
    json cfg{{"train", {{"max_epochs", 500}, {"early_stop_patience", 20}, {"seed", 7}}}};
    std::ofstream(dir / "cfg.json") << cfg.dump();
    const std::string data = dir / "data.mmf";
    if (cli({"gen", "--n", "64", "--seed", "11", "--separability", "1", "--out", data}) != 0 ||
        cli({"ablate", "--config", dir / "cfg.json", "--train", data, "--val", data, "--out", dir / "out", "--parallel"}) !=
            0) {
        return {false, "ablate command failed"};
    }
    const auto j = json::parse(slurp(dir / "out/ablation.json"));
    bool ok = j["rows"].size() == 7;
    double lowest = 1.0;
    for (std::size_t i = 0; ok && i < 7; ++i) {
        ok = j["rows"][i]["features"] == ablation_row_names()[i] && j["rows"][i]["config_digest"] == j["config_digest"];
        lowest = std::min(lowest, j["rows"][i]["metrics"]["mean"].get<double>());
    }
    return {ok && lowest >= 0.99, std::to_string(j["rows"].size()) + " rows in order, shared digest, lowest Mean " +
                                      fmt("%.4f", lowest)};
}

Verdict determinism() {
    ScratchDir dir("determinism");
    json cfg{{"model", {{"d_image", 24}, {"d_clip", 16}, {"d_text", 20}, {"d_common", 32}, {"d_model", 16}}},
             {"train", {{"max_epochs", 8}, {"seed", 5}}}};
    std::ofstream(dir / "cfg.json") << cfg.dump();
    const std::string tr = dir / "train.mmf", va = dir / "val.mmf";
    cli({"gen", "--n", "96", "--seed", "1", "--separability", "0.6", "--config", dir / "cfg.json", "--out", tr});
    cli({"gen", "--n", "32", "--seed", "2", "--separability", "0.6", "--config", dir / "cfg.json", "--out", va});
    for (const char* run : {"a", "b"}) {
        if (cli({"train", "--config", dir / "cfg.json", "--train", tr, "--val", va, "--out", dir / run}) != 0) {
            return {false, "train command failed"};
        }
    }
    bool same = true;
    for (const char* f : {"checkpoint.mmt", "metrics.json", "epoch_log.jsonl"}) {
        const std::string a = slurp(dir / ("a/" + std::string(f))), b = slurp(dir / ("b/" + std::string(f)));
        same = same && !a.empty() && a == b;
    }
    return {same, same ? "checkpoints, metric reports and epoch logs byte-identical" : "runs differ"};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
        {"gradient correctness", gradient},
        {"permutation invariance", permutation},
        {"coral suite", coral},
        {"metric oracle", metric_oracle},
        {"aggregation regression", aggregation},
        {"schedule", schedule},
        {"oversampling", oversampling},
        {"overfit smoke test", overfit},
        {"table 1 reproduction", table1},
        {"ablation structure", ablation},
        {"determinism", determinism},
    };
    int failures = 0;
    for (const auto& [name, check] : criteria) {
        Verdict v;
        try {
            v = check();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failures += v.pass ? 0 : 1;
        std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
    }
    std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failures == 0 ? 0 : 1;
}
