#include "mmmt/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "mmmt/error.hpp"

namespace mmmt {

void TrainConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw ConfigError("train." + field + ": " + why);
    };
    if (max_epochs == 0) fail("max_epochs", "must be at least 1");
    if (batch_size == 0) fail("batch_size", "must be at least 1");
    if (!(base_lr > 0.0)) fail("base_lr", "must be positive");
    if (!(max_lr >= base_lr)) fail("max_lr", "must be >= base_lr");
    if (!(lr_step_size_epochs > 0.0)) fail("lr_step_size_epochs", "must be positive");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) fail("adam.beta1", "must lie in [0, 1)");
    if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) fail("adam.beta2", "must lie in [0, 1)");
    if (!(adam.eps > 0.0)) fail("adam.eps", "must be positive");
    if (heads.empty()) fail("heads", "must name at least one head");
    if (modalities.empty()) fail("modalities", "must name at least one modality");
    for (double w : head_weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) fail("head_weights", "must be finite and non-negative");
    }
}

double lr_at(std::uint64_t step, std::uint64_t steps_per_epoch, const TrainConfig& cfg) {
    const double s = cfg.lr_step_size_epochs * static_cast<double>(std::max<std::uint64_t>(steps_per_epoch, 1));
    const double t = static_cast<double>(step);
    const double cycle = std::floor(1.0 + t / (2.0 * s));
    const double x = std::abs(t / s - 2.0 * cycle + 1.0);
    return cfg.base_lr + (cfg.max_lr - cfg.base_lr) * std::max(0.0, 1.0 - x);
}

AdamState make_adam_state(std::span<Parameter* const> params) {
    AdamState s;
    for (const Parameter* p : params) {
        s.first_moment.emplace_back(p->value.shape());
        s.second_moment.emplace_back(p->value.shape());
    }
    return s;
}

void adam_step(std::span<Parameter* const> params, AdamState& state, double lr, const AdamConfig& cfg) {
    if (state.first_moment.size() != params.size()) {
        throw DimensionError("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                             " parameters, got " + std::to_string(params.size()));
    }
    for (const Parameter* p : params) {
        if (!p->grad.all_finite()) throw NumericError("non-finite gradient in parameter '" + p->name + "'");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter& p = *params[i];
        Tensor& m = state.first_moment[i];
        Tensor& v = state.second_moment[i];
        if (m.shape() != p.value.shape()) {
            throw DimensionError("adam_step: moment shape mismatch for '" + p.name + "'");
        }
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double g = p.grad[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = m[j] / c1;
            const double v_hat = v[j] / c2;
            p.value[j] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
}

std::string epoch_log_line(const EpochLog& log) {
    nlohmann::ordered_json j;
    j["epoch"] = log.epoch;
    j["steps"] = log.steps;
    j["lr_first"] = log.lr_first;
    j["lr_last"] = log.lr_last;
    nlohmann::ordered_json loss = nlohmann::ordered_json::object();
    nlohmann::ordered_json f1 = nlohmann::ordered_json::object();
    for (Head h : kAllHeads) {
        const auto i = static_cast<std::size_t>(h);
        if (log.train_loss[i]) loss[std::string(head_name(h))] = *log.train_loss[i];
        if (log.val_f1[i]) f1[std::string(head_name(h))] = *log.val_f1[i];
    }
    j["train_loss"] = loss;
    j["val_f1"] = f1;
    j["val_metric"] = log.val_metric;
    j["best_metric"] = log.best_metric;
    j["improved"] = log.improved;
    return j.dump();
}

std::vector<LabelSet> infer(const MmmtModel& model, std::span<const FeatureRecord> records,
                            const ModalitySet& modalities, std::size_t batch_size) {
    std::vector<LabelSet> out;
    out.reserve(records.size());
    RngState unused(0);
    batch_size = std::max<std::size_t>(batch_size, 1);
    for (std::size_t start = 0; start < records.size(); start += batch_size) {
        const auto chunk = records.subspan(start, std::min(batch_size, records.size() - start));
        const auto preds = predict(forward(model, chunk, modalities, false, unused));
        out.insert(out.end(), preds.begin(), preds.end());
    }
    return out;
}

MetricsReport evaluate_model(const MmmtModel& model, std::span<const FeatureRecord> records,
                             const ModalitySet& modalities, std::size_t batch_size) {
    const auto preds = infer(model, records, modalities, batch_size);
    std::vector<LabelSet> golds;
    golds.reserve(records.size());
    for (const auto& r : records) golds.push_back(r.labels);
    return evaluate(preds, golds, static_cast<int>(model.config.emotion_classes));
}

double selection_metric(const MetricsReport& report, HeadMask heads, int emotion_classes) {
    double sum = 0.0;
    const auto enabled = heads.heads();
    for (Head h : enabled) sum += head_score(report, h, emotion_classes).value_or(0.0);
    return enabled.empty() ? 0.0 : sum / static_cast<double>(enabled.size());
}

namespace {

void require_labels(std::span<const FeatureRecord> records, HeadMask heads, const char* split) {
    for (const auto& r : records) {
        r.labels.validate(r.id);
        for (Head h : heads.heads()) {
            if (!r.labels.has(h)) {
                throw LabelError(std::string(split) + " record '" + r.id + "' has no " + std::string(head_name(h)) +
                                 " label");
            }
        }
    }
}

}  // namespace

TrainResult train(MmmtModel model, std::span<const FeatureRecord> train_records,
                  std::span<const FeatureRecord> val_records, const TrainConfig& cfg, const TrainHooks& hooks) {
    cfg.validate();
    if (train_records.empty()) throw DataError("training split is empty");
    if (val_records.empty()) throw DataError("validation split is empty");
    require_labels(train_records, cfg.heads, "training");
    require_labels(val_records, cfg.heads, "validation");

    const int emotion_k = static_cast<int>(model.config.emotion_classes);
    auto params = model.parameters();
    AdamState adam = make_adam_state(params);
    RngState dropout_rng = RngState::derive(cfg.seed, 10);

    std::vector<LabelSet> train_labels;
    train_labels.reserve(train_records.size());
    for (const auto& r : train_records) train_labels.push_back(r.labels);
    OversampleMode oversample = cfg.oversample;
    oversample.heads = cfg.heads;

    const std::size_t n = train_records.size();
    const std::size_t batch_size = cfg.batch_size;
    const std::uint64_t steps_per_epoch = (n + batch_size - 1) / batch_size;

    TrainResult result;
    result.best_model = model;
    result.best_metric = -std::numeric_limits<double>::infinity();
    std::uint32_t without_improvement = 0;
    std::uint64_t step = 0;
    std::vector<FeatureRecord> batch;
    batch.reserve(batch_size);
    std::vector<LabelSet> batch_labels;

    for (std::uint32_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        EpochLog log;
        log.epoch = epoch;
        const std::uint64_t epoch_seed = RngState::derive(cfg.seed, 1000 + epoch).next_u64();
        const auto order = oversample_indices(train_labels, oversample, epoch_seed, epoch == 1 ? hooks.warn : nullptr);

        std::array<double, 5> loss_sum{};
        for (std::size_t start = 0; start < n; start += batch_size) {
            const std::size_t end = std::min(n, start + batch_size);
            batch.clear();
            batch_labels.clear();
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(train_records[order[i]]);
                batch_labels.push_back(train_labels[order[i]]);
            }
            ForwardCache cache;
            const HeadOutputs out = forward(model, batch, cfg.modalities, true, dropout_rng, &cache);
            HeadOutputs dlogits;
            const LossBreakdown loss = multitask_loss(out, batch_labels, cfg.heads, cfg.head_weights, &dlogits);
            if (!std::isfinite(loss.total)) {
                throw NumericError("non-finite training loss at step " + std::to_string(step));
            }
            zero_grads(params);
            backward(model, cache, dlogits);
            const double lr = lr_at(step, steps_per_epoch, cfg);
            if (start == 0) log.lr_first = lr;
            log.lr_last = lr;
            adam_step(params, adam, lr, cfg.adam);
            ++step;
            for (Head h : cfg.heads.heads()) {
                const auto i = static_cast<std::size_t>(h);
                loss_sum[i] += *loss.per_head[i] * static_cast<double>(end - start);
            }
        }
        for (Head h : cfg.heads.heads()) {
            const auto i = static_cast<std::size_t>(h);
            log.train_loss[i] = loss_sum[i] / static_cast<double>(n);
        }
        log.steps = step;

        const MetricsReport report = evaluate_model(model, val_records, cfg.modalities, batch_size);
        for (Head h : cfg.heads.heads()) {
            log.val_f1[static_cast<std::size_t>(h)] = head_score(report, h, emotion_k).value_or(0.0);
        }
        log.val_metric = selection_metric(report, cfg.heads, emotion_k);
        if (log.val_metric > result.best_metric) {
            result.best_metric = log.val_metric;
            result.best_epoch = epoch;
            result.best_model = model;
            log.improved = true;
            without_improvement = 0;
        } else {
            ++without_improvement;
        }
        log.best_metric = result.best_metric;
        result.log.push_back(log);
        if (log.improved && hooks.on_improvement) hooks.on_improvement(result.best_model, log);
        if (hooks.on_epoch) hooks.on_epoch(log);

        if (cfg.early_stop_patience && !log.improved && without_improvement >= *cfg.early_stop_patience) {
            result.stop_reason = "no improvement for " + std::to_string(without_improvement) + " epochs";
            break;
        }
        if (hooks.should_stop && hooks.should_stop(log)) {
            result.stop_reason = "stopped by caller";
            break;
        }
    }
    if (result.stop_reason.empty()) result.stop_reason = "reached max_epochs";
    for (Parameter* p : result.best_model.parameters()) p->zero_grad();
    return result;
}

}  // namespace mmmt
