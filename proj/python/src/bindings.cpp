#include <map>
#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mmmt/cli.hpp"
#include "mmmt/config_io.hpp"
#include "mmmt/data.hpp"
#include "mmmt/error.hpp"
#include "mmmt/evaluation.hpp"
#include "mmmt/model.hpp"
#include "mmmt/ordinal.hpp"
#include "mmmt/training.hpp"

namespace py = pybind11;
using namespace mmmt;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Structured values cross the boundary as JSON text; the Python side decodes.
RunConfig config_from(const std::string& text) { return parse_run_config(json::parse(text.empty() ? "{}" : text)); }

std::string stats_json(const SplitStats& st) {
    ordered_json j;
    j["size"] = st.size;
    for (Head h : kAllHeads) j[std::string(head_name(h))] = st[h];
    return j.dump();
}

std::vector<int> labels_of(const LabelSet& l) {
    std::vector<int> out;
    for (Head h : kAllHeads) out.push_back(l[h]);
    return out;
}

std::string train_files(const std::string& config, const std::filesystem::path& train_path,
                        const std::filesystem::path& val_path, const std::filesystem::path& checkpoint) {
    const RunConfig cfg = config_from(config);
    const FeatureFile tr = read_feature_file(train_path), va = read_feature_file(val_path);
    TrainResult result;
    {
        py::gil_scoped_release release;
        RngState rng = RngState::derive(cfg.train.seed, 0);
        result = train(init_model(cfg.model, rng), tr.records, va.records, cfg.train);
    }
    if (!checkpoint.empty()) save_checkpoint(checkpoint, result.best_model, {cfg.train.modalities, cfg.train.heads});
    ordered_json j;
    j["best_epoch"] = result.best_epoch;
    j["best_metric"] = result.best_metric;
    j["stop_reason"] = result.stop_reason;
    j["log"] = ordered_json::array();
    for (const auto& e : result.log) j["log"].push_back(ordered_json::parse(epoch_log_line(e)));
    j["metrics"] = to_json(evaluate_model(result.best_model, va.records, cfg.train.modalities));
    return j.dump();
}

}  // namespace

PYBIND11_MODULE(_mmmt, m) {
    m.doc() = "Native core of the multimodal multitask meme classifier";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    auto data = py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<LabelError>(m, "LabelError", data.ptr());
    py::register_exception<FormatError>(m, "FormatError", data.ptr());
    py::register_exception<InputError>(m, "InputError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());
    py::register_exception<DimensionError>(m, "DimensionError", base.ptr());

    m.def(
        "lr_at",
        [](std::uint64_t step, std::uint64_t steps_per_epoch, double base_lr, double max_lr, double step_size_epochs) {
            TrainConfig cfg;
            cfg.base_lr = base_lr;
            cfg.max_lr = max_lr;
            cfg.lr_step_size_epochs = step_size_epochs;
            return lr_at(step, steps_per_epoch, cfg);
        },
        py::arg("step"), py::arg("steps_per_epoch"), py::arg("base_lr") = 1e-4, py::arg("max_lr") = 1e-3,
        py::arg("step_size_epochs") = 5.0);

    m.def(
        "weighted_f1",
        [](const std::vector<int>& preds, const std::vector<int>& golds, int num_classes) {
            return weighted_f1(preds, golds, num_classes);
        },
        py::arg("preds"), py::arg("golds"), py::arg("num_classes"));
    m.def("binarize_task_c", [](const std::vector<int>& ranks) { return binarize_task_c(ranks); });
    m.def(
        "aggregate_json",
        [](const std::map<std::string, double>& scores) {
            SubtaskScores s;
            const std::map<std::string, std::optional<double>*> slots = {
                {"sentiment", &s.sentiment},     {"humour_b", &s.humour_b},       {"humour_c", &s.humour_c},
                {"sarcasm_b", &s.sarcasm_b},     {"sarcasm_c", &s.sarcasm_c},     {"offensive_b", &s.offensive_b},
                {"offensive_c", &s.offensive_c}, {"motivation", &s.motivation}};
            for (const auto& [name, value] : scores) {
                const auto it = slots.find(name);
                if (it == slots.end()) throw InputError("unknown subtask '" + name + "'");
                *it->second = value;
            }
            return to_json(aggregate(s)).dump();
        });
    m.def("extend_labels", [](int rank, int num_classes) {
        const auto e = extend_labels(rank, num_classes);
        return std::vector<int>(e.bits.begin(), e.bits.end());
    });
    m.def("coral_loss", [](const std::vector<std::vector<double>>& logits, const std::vector<int>& ranks) {
        if (logits.size() != ranks.size()) throw InputError("coral_loss: logits and ranks differ in length");
        std::vector<ExtendedLabels> y;
        for (int r : ranks) y.push_back(extend_labels(r, logits.empty() ? 2 : static_cast<int>(logits[0].size()) + 1));
        const std::size_t width = logits.empty() ? 0 : logits[0].size();
        Tensor t({logits.size(), width});
        for (std::size_t r = 0; r < logits.size(); ++r) {
            if (logits[r].size() != width) throw InputError("coral_loss: ragged logits");
            for (std::size_t c = 0; c < width; ++c) t.at(r, c) = logits[r][c];
        }
        return coral_loss(t, y);
    });

    m.def("parameter_count", [](const std::string& config) { return parameter_count(config_from(config).model); });
    m.def("config_digest", [](const std::string& config, bool ignore_modalities) {
        return config_digest(config_from(config), ignore_modalities);
    }, py::arg("config"), py::arg("ignore_modalities") = false);

    m.def(
        "generate_synthetic",
        [](const std::filesystem::path& out, std::size_t n, std::uint64_t seed, double separability,
           const std::string& config) {
            SyntheticSpec spec;
            spec.n = n;
            spec.seed = seed;
            spec.separability = separability;
            spec.dims = config_from(config).model.input_dims;
            write_feature_file(out, spec.dims, generate_synthetic(spec));
        },
        py::arg("out"), py::arg("n"), py::arg("seed") = 0, py::arg("separability") = 1.0, py::arg("config") = "");
    m.def("read_labels", [](const std::filesystem::path& path) {
        std::vector<std::pair<std::string, std::vector<int>>> out;
        for (const auto& r : read_feature_file(path).records) out.emplace_back(r.id, labels_of(r.labels));
        return out;
    });
    m.def("read_dims", [](const std::filesystem::path& path) {
        const auto d = read_feature_file(path).dims;
        return std::vector<std::uint32_t>{d.image, d.clip, d.text};
    });
    m.def("stats_json", [](const std::filesystem::path& path) {
        return stats_json(compute_stats(read_feature_file(path).records));
    });
    m.def("table1_stats_json", [](const std::string& split) { return stats_json(table1_stats(parse_split(split))); });

    m.def("train_json", &train_files, py::arg("config"), py::arg("train"), py::arg("val"),
          py::arg("checkpoint") = std::filesystem::path());
    m.def("evaluate_json", [](const std::filesystem::path& checkpoint, const std::filesystem::path& data) {
        const auto ck = load_checkpoint(checkpoint);
        const auto file = read_feature_file(data);
        return to_json(evaluate_model(ck.model, file.records, ck.meta.modalities)).dump();
    });
    m.def("predict", [](const std::filesystem::path& checkpoint, const std::filesystem::path& data) {
        const auto ck = load_checkpoint(checkpoint);
        const auto file = read_feature_file(data);
        const auto preds = infer(ck.model, file.records, ck.meta.modalities);
        std::vector<std::pair<std::string, std::vector<int>>> out;
        for (std::size_t i = 0; i < preds.size(); ++i) out.emplace_back(file.records[i].id, labels_of(preds[i]));
        return out;
    });
    m.def(
        "gradcheck",
        [](const std::string& config, std::uint64_t seed, std::size_t max_entries) {
            const RunConfig cfg = config_from(config);
            RngState rng = RngState::derive(seed, 0);
            MmmtModel model = init_model(cfg.model, rng);
            SyntheticSpec spec;
            spec.n = 2;
            spec.seed = seed;
            spec.separability = 0.5;
            spec.dims = cfg.model.input_dims;
            const auto batch = generate_synthetic(spec);
            GradCheckOptions options;
            options.max_entries_per_param = max_entries;
            const auto r = check_model_gradients(model, batch, cfg.train.modalities, cfg.train.heads, options);
            return py::make_tuple(r.max_rel_error, r.entries_checked);
        },
        py::arg("config") = "", py::arg("seed") = 0, py::arg("max_entries") = 0);

    m.def("run_cli", [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
    });
}
