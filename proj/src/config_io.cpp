#include "mmmt/config_io.hpp"

#include <fstream>
#include <set>

#include <openssl/evp.h>

#include "mmmt/error.hpp"

namespace mmmt {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void check_keys(const json& obj, const std::string& section, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError(section + ": expected an object");
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.contains(key)) throw ConfigError(section + "." + key + ": unknown field");
    }
}

template <typename T>
void read_field(const json& obj, const std::string& section, const char* key, T& out) {
    const auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
        if constexpr (std::is_unsigned_v<T>) {
            if (!it->is_number_integer() || it->get<long long>() < 0) throw std::invalid_argument("type");
            out = it->get<T>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!it->is_number()) throw std::invalid_argument("type");
            out = it->get<T>();
        } else {
            out = it->get<T>();
        }
    } catch (const std::exception&) {
        throw ConfigError(section + "." + key + ": invalid value " + it->dump());
    }
}

std::string read_string(const json& obj, const std::string& section, const char* key, const std::string& fallback) {
    const auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    if (it->is_string()) return it->get<std::string>();
    if (it->is_array()) {
        std::string joined;
        for (const auto& v : *it) {
            if (!v.is_string()) throw ConfigError(section + "." + key + ": expected strings");
            if (!joined.empty()) joined += ',';
            joined += v.get<std::string>();
        }
        return joined;
    }
    throw ConfigError(section + "." + key + ": expected a string or list of strings");
}

template <typename F>
auto with_field(const std::string& field, F&& f) {
    try {
        return f();
    } catch (const ConfigError& e) {
        throw ConfigError(field + ": " + e.what());
    }
}

ModelConfig parse_model(const json& j) {
    const std::string s = "model";
    check_keys(j, s,
               {"d_image", "d_clip", "d_text", "d_common", "d_model", "layers", "heads_per_layer", "ff_multiplier",
                "dropout_rate", "layer_norm_eps", "emotion_classes"});
    ModelConfig c;
    read_field(j, s, "d_image", c.input_dims.image);
    read_field(j, s, "d_clip", c.input_dims.clip);
    read_field(j, s, "d_text", c.input_dims.text);
    read_field(j, s, "d_common", c.d_common);
    read_field(j, s, "d_model", c.d_model);
    read_field(j, s, "layers", c.layers);
    read_field(j, s, "heads_per_layer", c.heads_per_layer);
    read_field(j, s, "ff_multiplier", c.ff_multiplier);
    read_field(j, s, "dropout_rate", c.dropout_rate);
    read_field(j, s, "layer_norm_eps", c.layer_norm_eps);
    read_field(j, s, "emotion_classes", c.emotion_classes);
    return c;
}

TrainConfig parse_train(const json& j) {
    const std::string s = "train";
    check_keys(j, s,
               {"max_epochs", "batch_size", "base_lr", "max_lr", "lr_step_size_epochs", "adam", "early_stop_patience",
                "heads", "modalities", "oversample", "head_weights", "seed"});
    TrainConfig c;
    read_field(j, s, "max_epochs", c.max_epochs);
    read_field(j, s, "batch_size", c.batch_size);
    read_field(j, s, "base_lr", c.base_lr);
    read_field(j, s, "max_lr", c.max_lr);
    read_field(j, s, "lr_step_size_epochs", c.lr_step_size_epochs);
    if (const auto it = j.find("adam"); it != j.end()) {
        check_keys(*it, "train.adam", {"beta1", "beta2", "eps"});
        read_field(*it, "train.adam", "beta1", c.adam.beta1);
        read_field(*it, "train.adam", "beta2", c.adam.beta2);
        read_field(*it, "train.adam", "eps", c.adam.eps);
    }
    if (const auto it = j.find("early_stop_patience"); it != j.end()) {
        if (it->is_null()) {
            c.early_stop_patience.reset();
        } else {
            std::uint32_t p = 0;
            read_field(j, s, "early_stop_patience", p);
            c.early_stop_patience = p;
        }
    }
    c.heads = with_field("train.heads", [&] { return HeadMask::parse(read_string(j, s, "heads", "all")); });
    c.modalities =
        with_field("train.modalities", [&] { return ModalitySet::parse(read_string(j, s, "modalities", "all")); });
    c.oversample = with_field("train.oversample",
                              [&] { return OversampleMode::parse(read_string(j, s, "oversample", "mean-inverse")); });
    if (const auto it = j.find("head_weights"); it != j.end()) {
        if (!it->is_object()) throw ConfigError("train.head_weights: expected an object");
        for (const auto& [key, value] : it->items()) {
            const Head h = with_field("train.head_weights", [&] { return parse_head(key); });
            if (!value.is_number()) throw ConfigError("train.head_weights." + key + ": expected a number");
            c.head_weights[static_cast<std::size_t>(h)] = value.get<double>();
        }
    }
    read_field(j, s, "seed", c.seed);
    return c;
}

}  // namespace

RunConfig parse_run_config(const json& root) {
    const json& j = root.contains("config") && root.contains("command") ? root.at("config") : root;
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    check_keys(j, "config", {"model", "train"});
    RunConfig c;
    if (j.contains("model")) c.model = parse_model(j.at("model"));
    if (j.contains("train")) c.train = parse_train(j.at("train"));
    c.model.validate();
    c.train.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_run_config(j);
}

ordered_json to_json(const ModelConfig& c) {
    ordered_json j;
    j["d_image"] = c.input_dims.image;
    j["d_clip"] = c.input_dims.clip;
    j["d_text"] = c.input_dims.text;
    j["d_common"] = c.d_common;
    j["d_model"] = c.d_model;
    j["layers"] = c.layers;
    j["heads_per_layer"] = c.heads_per_layer;
    j["ff_multiplier"] = c.ff_multiplier;
    j["dropout_rate"] = c.dropout_rate;
    j["layer_norm_eps"] = c.layer_norm_eps;
    j["emotion_classes"] = c.emotion_classes;
    return j;
}

ordered_json to_json(const TrainConfig& c) {
    ordered_json j;
    j["max_epochs"] = c.max_epochs;
    j["batch_size"] = c.batch_size;
    j["base_lr"] = c.base_lr;
    j["max_lr"] = c.max_lr;
    j["lr_step_size_epochs"] = c.lr_step_size_epochs;
    j["adam"] = {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}};
    if (c.early_stop_patience) {
        j["early_stop_patience"] = *c.early_stop_patience;
    } else {
        j["early_stop_patience"] = nullptr;
    }
    j["heads"] = c.heads.to_string();
    j["modalities"] = c.modalities.to_string();
    j["oversample"] = c.oversample.to_string();
    ordered_json w;
    for (Head h : kAllHeads) w[std::string(head_name(h))] = c.head_weights[static_cast<std::size_t>(h)];
    j["head_weights"] = w;
    j["seed"] = c.seed;
    return j;
}

ordered_json to_json(const RunConfig& c) {
    ordered_json j;
    j["model"] = to_json(c.model);
    j["train"] = to_json(c.train);
    return j;
}

ordered_json to_json(const MetricsReport& r) {
    auto v = [](const std::optional<double>& x) -> ordered_json { return x ? ordered_json(*x) : ordered_json(nullptr); };
    const SubtaskScores& s = r.subtasks;
    ordered_json j;
    j["subtasks"] = ordered_json{{"sentiment", v(s.sentiment)},     {"humour_b", v(s.humour_b)},
                                 {"humour_c", v(s.humour_c)},       {"sarcasm_b", v(s.sarcasm_b)},
                                 {"sarcasm_c", v(s.sarcasm_c)},     {"offensive_b", v(s.offensive_b)},
                                 {"offensive_c", v(s.offensive_c)}, {"motivation", v(s.motivation)}};
    j["task_a"] = v(r.task_a);
    j["task_b"] = v(r.task_b);
    j["task_c"] = v(r.task_c);
    j["mean"] = v(r.mean);
    return j;
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 computation failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

std::string sha256_file(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return sha256_hex(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string config_digest(const RunConfig& config, bool ignore_modalities) {
    ordered_json j = to_json(config);
    if (ignore_modalities) j["train"].erase("modalities");
    return sha256_hex(j.dump());
}

}  // namespace mmmt
