#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmmt/data.hpp"
#include "mmmt/evaluation.hpp"
#include "mmmt/model.hpp"

namespace mmmt {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct TrainConfig {
    std::uint32_t max_epochs = 100;
    std::uint32_t batch_size = 256;
    double base_lr = 1e-4;
    double max_lr = 1e-3;
    double lr_step_size_epochs = 5.0;
    AdamConfig adam;
    // Epochs without improvement before stopping; empty means never stop early.
    std::optional<std::uint32_t> early_stop_patience = 10;
    HeadMask heads = HeadMask::all();
    ModalitySet modalities = ModalitySet::all();
    OversampleMode oversample;
    HeadWeights head_weights = kUnitHeadWeights;
    std::uint64_t seed = 0;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// Triangular cyclical schedule. With s = step size in steps, the rate rises
/// linearly from base_lr to max_lr over s steps, falls back over the next s,
/// and repeats.
double lr_at(std::uint64_t step, std::uint64_t steps_per_epoch, const TrainConfig& cfg);

struct AdamState {
    std::uint64_t step = 0;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
};

AdamState make_adam_state(std::span<Parameter* const> params);

/// Bias-corrected Adam update using each parameter's accumulated gradient.
/// Throws NumericError naming the parameter if a gradient is not finite.
void adam_step(std::span<Parameter* const> params, AdamState& state, double lr, const AdamConfig& cfg = {});

struct EpochLog {
    std::uint32_t epoch = 0;  // 1-based
    std::uint64_t steps = 0;  // optimizer steps taken so far
    double lr_first = 0.0;
    double lr_last = 0.0;
    std::array<std::optional<double>, 5> train_loss;  // mean per-head loss over the epoch
    std::array<std::optional<double>, 5> val_f1;      // per-head selection score
    double val_metric = 0.0;                           // mean of val_f1 over enabled heads
    double best_metric = 0.0;
    bool improved = false;
};

/// One line of the epoch log (JSON object, no trailing newline).
std::string epoch_log_line(const EpochLog& log);

struct TrainResult {
    MmmtModel best_model;
    std::vector<EpochLog> log;
    double best_metric = 0.0;
    std::uint32_t best_epoch = 0;
    std::string stop_reason;
};

struct TrainHooks {
    std::function<void(const EpochLog&)> on_epoch;
    // Called with the new best model whenever the validation metric improves.
    std::function<void(const MmmtModel&, const EpochLog&)> on_improvement;
    std::function<void(const std::string&)> warn;
    // Returning true after an epoch ends training early (stop_reason "stopped by caller").
    std::function<bool(const EpochLog&)> should_stop;
};

/// Trains `model` in place and returns a copy of the parameters from the
/// epoch with the best validation metric.
TrainResult train(MmmtModel model, std::span<const FeatureRecord> train_records,
                  std::span<const FeatureRecord> val_records, const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Eval-mode predictions over `records`, processed in chunks of `batch_size`.
std::vector<LabelSet> infer(const MmmtModel& model, std::span<const FeatureRecord> records,
                            const ModalitySet& modalities, std::size_t batch_size = 256);

/// Metrics of `model` on labelled records.
MetricsReport evaluate_model(const MmmtModel& model, std::span<const FeatureRecord> records,
                             const ModalitySet& modalities, std::size_t batch_size = 256);

/// Mean of head_score over the heads in `heads` (0 for heads without a score).
double selection_metric(const MetricsReport& report, HeadMask heads, int emotion_classes);

}  // namespace mmmt
