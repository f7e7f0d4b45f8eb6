#include <doctest.h>

#include <cmath>
#include <limits>

#include <json.hpp>

#include "mmmt/error.hpp"
#include "mmmt/training.hpp"
#include "test_support.hpp"

using namespace mmmt;
using testing::synthetic;
using testing::tiny_config;

namespace {

TrainConfig quick_config() {
    TrainConfig t;
    t.max_epochs = 6;
    t.batch_size = 16;
    t.seed = 3;
    return t;
}

MmmtModel fresh_model(std::uint64_t seed = 1) {
    RngState rng(seed);
    return init_model(tiny_config(), rng);
}

}  // namespace

TEST_CASE("lr_at published anchors are exact") {
    const TrainConfig cfg;
    const std::uint64_t spe = 28;  // 7000 / 256 rounded up
    const std::uint64_t s = 5 * spe;
    CHECK(lr_at(0, spe, cfg) == 1e-4);
    CHECK(lr_at(s, spe, cfg) == 1e-3);
    CHECK(lr_at(2 * s, spe, cfg) == 1e-4);
    CHECK(lr_at(s / 2, spe, cfg) == doctest::Approx(5.5e-4).epsilon(1e-12));
    CHECK(lr_at(3 * s, spe, cfg) == 1e-3);
}

TEST_CASE("lr_at is bounded and periodic") {
    TrainConfig cfg;
    cfg.lr_step_size_epochs = 2.5;
    for (std::uint64_t spe : {1u, 3u, 7u}) {
        const auto period = static_cast<std::uint64_t>(2 * 2.5 * static_cast<double>(spe));
        for (std::uint64_t step = 0; step < 400; ++step) {
            const double lr = lr_at(step, spe, cfg);
            CHECK(lr >= cfg.base_lr);
            CHECK(lr <= cfg.max_lr);
            if (period * 2.5 == std::floor(period * 2.5)) {
                CHECK(lr_at(step + period, spe, cfg) == doctest::Approx(lr).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("adam hand cases") {
    Parameter p("theta", Tensor({1}, {1.0}));
    std::vector<Parameter*> ps{&p};
    AdamState st = make_adam_state(ps);
    p.grad[0] = 0.0;
    adam_step(ps, st, 0.1);
    CHECK(p.value[0] == 1.0);

    Parameter q("theta", Tensor({1}, {1.0}));
    std::vector<Parameter*> qs{&q};
    AdamState sq = make_adam_state(qs);
    q.grad[0] = 1.0;
    adam_step(qs, sq, 0.1);
    // m_hat = 1, v_hat = 1: step = 0.1 / (1 + 1e-8)
    CHECK(q.value[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));
    CHECK(sq.step == 1);
}

TEST_CASE("adam converges on a quadratic") {
    Parameter p("theta", Tensor({1}, {1.0}));
    std::vector<Parameter*> ps{&p};
    AdamState st = make_adam_state(ps);
    for (int i = 0; i < 500; ++i) {
        p.grad[0] = 2.0 * p.value[0];
        adam_step(ps, st, 0.1);
    }
    CHECK(std::abs(p.value[0]) < 1e-3);
}

TEST_CASE("adam rejects non-finite gradients by name") {
    Parameter p("encoder.0.ff.in.weight", Tensor({2}, {1.0, 2.0}));
    std::vector<Parameter*> ps{&p};
    AdamState st = make_adam_state(ps);
    p.grad[1] = std::numeric_limits<double>::quiet_NaN();
    try {
        adam_step(ps, st, 0.1);
        FAIL("NaN accepted");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("encoder.0.ff.in.weight") != std::string::npos);
    }
    CHECK(p.value[0] == 1.0);
}

TEST_CASE("train config validation") {
    TrainConfig t;
    t.base_lr = 0.0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
    t = TrainConfig{};
    t.max_lr = 1e-5;
    CHECK_THROWS_AS(t.validate(), ConfigError);
    t = TrainConfig{};
    t.batch_size = 0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
    t = TrainConfig{};
    t.heads = HeadMask();
    CHECK_THROWS_AS(t.validate(), ConfigError);
    CHECK_NOTHROW(TrainConfig{}.validate());
}

TEST_CASE("a tiny step lowers the batch loss") {
    MmmtModel m = fresh_model(2);
    const auto batch = synthetic(8, 4, 0.5, m.config.input_dims);
    std::vector<LabelSet> labels;
    for (const auto& r : batch) labels.push_back(r.labels);
    auto params = m.parameters();
    AdamState st = make_adam_state(params);
    RngState unused(0);
    ForwardCache cache;
    HeadOutputs dl;
    const double before =
        multitask_loss(forward(m, batch, ModalitySet::all(), false, unused, &cache), labels, HeadMask::all(),
                       kUnitHeadWeights, &dl)
            .total;
    zero_grads(params);
    backward(m, cache, dl);
    adam_step(params, st, 1e-6);
    const double after = multitask_loss(forward(m, batch, ModalitySet::all(), false, unused), labels, HeadMask::all()).total;
    CHECK(after < before);
}

TEST_CASE("train keeps the final partial batch and logs every epoch") {
    const auto tr = synthetic(40, 1, 0.8, tiny_config().input_dims);
    const auto va = synthetic(20, 2, 0.8, tiny_config().input_dims);
    TrainConfig cfg = quick_config();
    cfg.early_stop_patience.reset();
    cfg.batch_size = 16;
    std::vector<std::string> lines;
    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochLog& log) { lines.push_back(epoch_log_line(log)); };
    const auto result = train(fresh_model(), tr, va, cfg, hooks);
    REQUIRE(result.log.size() == cfg.max_epochs);
    CHECK(result.stop_reason == "reached max_epochs");
    for (std::size_t e = 0; e < result.log.size(); ++e) CHECK(result.log[e].steps == 3 * (e + 1));
    REQUIRE(lines.size() == cfg.max_epochs);
    const auto j = nlohmann::json::parse(lines.front());
    CHECK(j["epoch"] == 1);
    CHECK(j["lr_first"].get<double>() == 1e-4);
    CHECK(j["train_loss"].size() == 5);
    CHECK(j["val_f1"].size() == 5);
}

TEST_CASE("best-checkpoint law") {
    const auto tr = synthetic(48, 5, 0.9, tiny_config().input_dims);
    const auto va = synthetic(24, 6, 0.9, tiny_config().input_dims);
    TrainConfig cfg = quick_config();
    cfg.max_epochs = 12;
    cfg.early_stop_patience.reset();
    int improvements = 0;
    TrainHooks hooks;
    hooks.on_improvement = [&](const MmmtModel&, const EpochLog& log) {
        CHECK(log.improved);
        ++improvements;
    };
    const auto result = train(fresh_model(), tr, va, cfg, hooks);
    double best = -1.0, prev_best = -1.0;
    int improved = 0;
    for (const auto& log : result.log) {
        best = std::max(best, log.val_metric);
        CHECK(log.best_metric >= prev_best);
        CHECK(log.best_metric == best);
        prev_best = log.best_metric;
        improved += log.improved ? 1 : 0;
    }
    CHECK(improvements == improved);
    CHECK(result.best_metric == best);
    CHECK(result.log[result.best_epoch - 1].val_metric == best);
    const auto report = evaluate_model(result.best_model, va, cfg.modalities);
    CHECK(selection_metric(report, cfg.heads, 4) == best);
}

TEST_CASE("patience 0 stops at the first non-improving epoch") {
    const auto tr = synthetic(32, 7, 0.0, tiny_config().input_dims);
    const auto va = synthetic(16, 8, 0.0, tiny_config().input_dims);
    TrainConfig cfg = quick_config();
    cfg.max_epochs = 60;
    cfg.early_stop_patience = 0;
    const auto result = train(fresh_model(), tr, va, cfg);
    REQUIRE(!result.log.empty());
    CHECK(!result.log.back().improved);
    for (std::size_t i = 0; i + 1 < result.log.size(); ++i) CHECK(result.log[i].improved);
    CHECK(result.log.size() < 60);

    cfg.early_stop_patience = 2;
    const auto r2 = train(fresh_model(), tr, va, cfg);
    const auto n = r2.log.size();
    if (n < 60) {
        CHECK(!r2.log[n - 1].improved);
        CHECK(!r2.log[n - 2].improved);
    }
}

TEST_CASE("training is deterministic") {
    const auto tr = synthetic(30, 9, 0.7, tiny_config().input_dims);
    const auto va = synthetic(10, 10, 0.7, tiny_config().input_dims);
    TrainConfig cfg = quick_config();
    cfg.oversample = OversampleMode::parse("mean-inverse");
    std::vector<std::string> a_lines, b_lines;
    TrainHooks ha, hb;
    ha.on_epoch = [&](const EpochLog& l) { a_lines.push_back(epoch_log_line(l)); };
    hb.on_epoch = [&](const EpochLog& l) { b_lines.push_back(epoch_log_line(l)); };
    const auto a = train(fresh_model(), tr, va, cfg, ha);
    const auto b = train(fresh_model(), tr, va, cfg, hb);
    CHECK(a_lines == b_lines);
    CHECK(a.best_model == b.best_model);
    CHECK(encode_checkpoint(a.best_model, {}) == encode_checkpoint(b.best_model, {}));

    cfg.seed = 4;
    const auto c = train(fresh_model(), tr, va, cfg);
    CHECK(!(c.best_model == a.best_model));
}

TEST_CASE("train input errors") {
    const auto tr = synthetic(8, 1, 0.5, tiny_config().input_dims);
    const auto va = synthetic(4, 2, 0.5, tiny_config().input_dims);
    const TrainConfig cfg = quick_config();
    CHECK_THROWS_AS(train(fresh_model(), {}, va, cfg), DataError);
    CHECK_THROWS_AS(train(fresh_model(), tr, {}, cfg), DataError);
    auto unlabeled = va;
    unlabeled[2].labels[Head::sarcasm] = LabelSet::kAbsent;
    try {
        train(fresh_model(), tr, unlabeled, cfg);
        FAIL("missing label accepted");
    } catch (const LabelError& e) {
        CHECK(std::string(e.what()).find(unlabeled[2].id) != std::string::npos);
    }
    // A head that is not trained may be absent.
    TrainConfig only = cfg;
    only.heads = HeadMask::parse("sentiment");
    only.max_epochs = 1;
    CHECK_NOTHROW(train(fresh_model(), tr, unlabeled, only));
    TrainConfig bad = cfg;
    bad.max_epochs = 0;
    CHECK_THROWS_AS(train(fresh_model(), tr, va, bad), ConfigError);
}

TEST_CASE("should_stop hook ends training") {
    const auto tr = synthetic(8, 1, 0.5, tiny_config().input_dims);
    TrainConfig cfg = quick_config();
    cfg.early_stop_patience.reset();
    TrainHooks hooks;
    hooks.should_stop = [](const EpochLog& l) { return l.epoch == 2; };
    const auto result = train(fresh_model(), tr, tr, cfg, hooks);
    CHECK(result.log.size() == 2);
    CHECK(result.stop_reason == "stopped by caller");
}

TEST_CASE("reduced-width model overfits separable data") {
    const auto data = synthetic(64, 12, 1.0, tiny_config().input_dims);
    TrainConfig cfg;
    cfg.max_epochs = 500;
    cfg.early_stop_patience.reset();
    cfg.seed = 12;
    TrainHooks hooks;
    hooks.should_stop = [](const EpochLog& l) {
        for (const auto& f : l.val_f1) {
            if (f && *f < 0.99) return false;
        }
        return true;
    };
    const auto result = train(fresh_model(3), data, data, cfg, hooks);
    const auto report = evaluate_model(result.best_model, data, cfg.modalities);
    for (Head h : kAllHeads) CHECK(head_score(report, h).value() >= 0.99);
}
