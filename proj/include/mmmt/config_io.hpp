#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "mmmt/evaluation.hpp"
#include "mmmt/model.hpp"
#include "mmmt/training.hpp"

namespace mmmt {

/// Everything needed to reproduce a training run.
///
/// On disk this is a JSON object with optional "model" and "train" sections;
/// omitted fields keep their defaults and unknown fields are rejected:
///
///   model: d_image, d_clip, d_text, d_common, d_model, layers,
///          heads_per_layer (array), ff_multiplier, dropout_rate,
///          layer_norm_eps, emotion_classes (4 or 2)
///   train: max_epochs, batch_size, base_lr, max_lr, lr_step_size_epochs,
///          adam {beta1, beta2, eps}, early_stop_patience (integer or null),
///          heads ("all" or comma list), modalities ("all" or comma list),
///          oversample ("none" | "mean-inverse" | "single-head:<head>"),
///          head_weights {head: weight}, seed
///
/// A run manifest (which carries the same object under "config") is accepted
/// wherever a config file is.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const RunConfig& config);
nlohmann::ordered_json to_json(const ModelConfig& config);
nlohmann::ordered_json to_json(const TrainConfig& config);
nlohmann::ordered_json to_json(const MetricsReport& report);

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Digest of the canonical config JSON. With `ignore_modalities` the modality
/// mask is left out, so runs that differ only in their inputs share a digest.
std::string config_digest(const RunConfig& config, bool ignore_modalities = false);

}  // namespace mmmt
