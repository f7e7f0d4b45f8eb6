#include "mmmt/evaluation.hpp"

#include <cstdio>
#include <iomanip>
#include <sstream>

#include "mmmt/error.hpp"

namespace mmmt {

namespace {

using Int128 = __int128;

Int128 gcd128(Int128 a, Int128 b) {
    if (a < 0) a = -a;
    while (b != 0) {
        const Int128 t = a % b;
        a = b;
        b = t;
    }
    return a;
}

// Non-negative fraction in lowest terms; add/scale report overflow.
struct Fraction {
    Int128 num = 0;
    Int128 den = 1;

    bool add(Int128 n, Int128 d) {
        const Int128 g = gcd128(d, den);
        Int128 lhs, rhs, new_den;
        if (__builtin_mul_overflow(num, d / g, &lhs) || __builtin_mul_overflow(n, den / g, &rhs) ||
            __builtin_mul_overflow(den / g, d, &new_den) || __builtin_add_overflow(lhs, rhs, &num)) {
            return false;
        }
        den = new_den;
        reduce();
        return true;
    }
    bool scale(Int128 n, Int128 d) {
        const Int128 g1 = gcd128(num, d), g2 = gcd128(n, den);
        Int128 new_num, new_den;
        if (__builtin_mul_overflow(num / g1, n / g2, &new_num) ||
            __builtin_mul_overflow(den / g2, d / g1, &new_den)) {
            return false;
        }
        num = new_num;
        den = new_den;
        reduce();
        return true;
    }
    void reduce() {
        const Int128 g = gcd128(num, den);
        if (g > 1) {
            num /= g;
            den /= g;
        }
    }
    double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }
};

}  // namespace

double weighted_f1(std::span<const int> preds, std::span<const int> golds, int num_classes) {
    if (preds.size() != golds.size()) {
        throw InputError("weighted_f1: " + std::to_string(preds.size()) + " predictions for " +
                         std::to_string(golds.size()) + " gold labels");
    }
    if (preds.empty()) throw InputError("weighted_f1: empty input");
    if (num_classes < 1) throw InputError("weighted_f1: num_classes must be positive");
    const auto k = static_cast<std::size_t>(num_classes);
    std::vector<std::size_t> tp(k, 0), predicted(k, 0), actual(k, 0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const int p = preds[i], g = golds[i];
        if (p < 0 || p >= num_classes || g < 0 || g >= num_classes) {
            throw InputError("weighted_f1: label outside [0, " + std::to_string(num_classes - 1) + "] at index " +
                             std::to_string(i));
        }
        ++predicted[static_cast<std::size_t>(p)];
        ++actual[static_cast<std::size_t>(g)];
        if (p == g) ++tp[static_cast<std::size_t>(p)];
    }
    // score = (2/n) * sum_c actual_c * tp_c / (predicted_c + actual_c), summed as an
    // exact fraction so the result does not depend on accumulation order.
    Fraction acc;
    bool exact = true;
    double fallback = 0.0;
    const double n = static_cast<double>(preds.size());
    for (std::size_t c = 0; c < k; ++c) {
        if (actual[c] == 0) continue;
        const auto denom = static_cast<Int128>(predicted[c] + actual[c]);
        fallback += static_cast<double>(actual[c]) / n * (2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom));
        if (exact) exact = acc.add(static_cast<Int128>(actual[c]) * static_cast<Int128>(tp[c]), denom);
    }
    if (!exact) return fallback;
    if (!acc.scale(2, static_cast<Int128>(preds.size()))) return fallback;
    return acc.to_double();
}

std::vector<int> binarize_task_c(std::span<const int> ranks) {
    std::vector<int> out(ranks.size());
    for (std::size_t i = 0; i < ranks.size(); ++i) {
        if (ranks[i] < 0 || ranks[i] > 3) {
            throw InputError("binarize_task_c: rank " + std::to_string(ranks[i]) + " at index " + std::to_string(i) +
                             " outside [0, 3]");
        }
        out[i] = ranks[i] > 0 ? 1 : 0;
    }
    return out;
}

namespace {

std::optional<double> mean_of(std::initializer_list<std::optional<double>> values) {
    double sum = 0.0;
    for (const auto& v : values) {
        if (!v) return std::nullopt;
        sum += *v;
    }
    return sum / static_cast<double>(values.size());
}

}  // namespace

MetricsReport aggregate(const SubtaskScores& s) {
    MetricsReport r;
    r.subtasks = s;
    r.task_a = s.sentiment;
    r.task_b = mean_of({s.humour_b, s.sarcasm_b, s.offensive_b, s.motivation});
    r.task_c = mean_of({s.humour_c, s.sarcasm_c, s.offensive_c, s.motivation});
    r.mean = mean_of({r.task_a, r.task_b, r.task_c});
    return r;
}

MetricsReport evaluate(std::span<const LabelSet> preds, std::span<const LabelSet> golds, int emotion_classes) {
    if (preds.size() != golds.size()) {
        throw InputError("evaluate: " + std::to_string(preds.size()) + " predictions for " +
                         std::to_string(golds.size()) + " records");
    }
    auto collect = [&](Head h, std::vector<int>& p, std::vector<int>& g) {
        for (std::size_t i = 0; i < golds.size(); ++i) {
            if (!golds[i].has(h)) continue;
            if (!preds[i].has(h)) throw InputError("evaluate: missing " + std::string(head_name(h)) + " prediction");
            p.push_back(preds[i][h]);
            g.push_back(golds[i][h]);
        }
    };
    SubtaskScores s;
    {
        std::vector<int> p, g;
        collect(Head::sentiment, p, g);
        if (!g.empty()) s.sentiment = weighted_f1(p, g, 3);
    }
    {
        std::vector<int> p, g;
        collect(Head::motivation, p, g);
        if (!g.empty()) s.motivation = weighted_f1(p, g, 2);
    }
    const std::array<std::pair<std::optional<double>*, std::optional<double>*>, 3> slots = {
        std::pair{&s.humour_b, &s.humour_c}, std::pair{&s.sarcasm_b, &s.sarcasm_c},
        std::pair{&s.offensive_b, &s.offensive_c}};
    const std::array<Head, 3> emotions = {Head::humour, Head::sarcasm, Head::offensive};
    for (std::size_t e = 0; e < emotions.size(); ++e) {
        std::vector<int> p, g;
        collect(emotions[e], p, g);
        if (g.empty()) continue;
        const auto gold_b = binarize_task_c(g);
        if (emotion_classes == 2) {
            *slots[e].first = weighted_f1(p, gold_b, 2);
        } else {
            *slots[e].first = weighted_f1(binarize_task_c(p), gold_b, 2);
            *slots[e].second = weighted_f1(p, g, 4);
        }
    }
    return aggregate(s);
}

std::optional<double> head_score(const MetricsReport& report, Head head, int emotion_classes) {
    const SubtaskScores& s = report.subtasks;
    const bool binary = emotion_classes == 2;
    switch (head) {
        case Head::sentiment: return s.sentiment;
        case Head::humour: return binary ? s.humour_b : s.humour_c;
        case Head::sarcasm: return binary ? s.sarcasm_b : s.sarcasm_c;
        case Head::offensive: return binary ? s.offensive_b : s.offensive_c;
        case Head::motivation: return s.motivation;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Reference numbers

const ReferenceTables& reference_tables() {
    static const ReferenceTables tables = [] {
        ReferenceTables t;
        t.per_emotion = {
            {"Sentiment", "Task A", 0.5072, 0.5318},   {"Humour", "Task B", 0.9239, 0.8111},
            {"Humour", "Task C", 0.4131, 0.4036},      {"Sarcasm", "Task B", 0.6386, 0.8191},
            {"Sarcasm", "Task C", 0.1604, 0.3083},     {"Offensive", "Task B", 0.5581, 0.485},
            {"Offensive", "Task C", 0.5045, 0.485},    {"Motivation", "Tasks B & C", 0.9764, 0.98},
        };
        t.per_task = {
            {"Only Text", 0.5072, 0.7743, 0.5136, 0.5984},
            {"MMMT", 0.5318, 0.7738, 0.5443, 0.6166},
        };
        t.ablation = {
            {"Only Text", 0.5127, 0.6494, 0.5001, 0.5541},
            {"Only Image", 0.5139, 0.6404, 0.5117, 0.5553},
            {"Only CLIP", 0.5113, 0.6559, 0.4835, 0.5502},
            {"Image + Text", 0.5118, 0.6452, 0.5041, 0.5537},
            {"CLIP + Image", 0.5077, 0.6398, 0.5053, 0.5510},
            {"CLIP + Text", 0.5118, 0.6551, 0.5032, 0.5567},
            {"Image + CLIP + Text", 0.5178, 0.6394, 0.5029, 0.5534},
        };
        t.leaderboard = {
            {"BLUE", 0.5318, 0.8059, 0.5443, 0.6273},
            {"BROWALLIA", 0.5255, 0.767, 0.5453, 0.6126},
            {"Amazon PARS", 0.5025, 0.7609, 0.5564, 0.6066},
            {"HCILab", 0.4995, 0.7414, 0.5301, 0.5903},
            {"weipengfei", 0.4887, 0.6915, 0.5033, 0.5612},
            {"BASELINE", 0.434, 0.7358, 0.5105, 0.5601},
            {"Yet", 0.5088, 0.6106, 0.51, 0.5431},
            {"Greeny", 0.5037, 0.6106, 0.484, 0.5328},
            {"Little Flower", 0.5081, 0.8229, std::nullopt, std::nullopt},
        };
        return t;
    }();
    return tables;
}

const std::vector<std::string>& ablation_row_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& row : reference_tables().ablation) n.push_back(row.name);
        return n;
    }();
    return names;
}

// ---------------------------------------------------------------------------
// Rendering

std::string format_score(const std::optional<double>& v) {
    if (!v) return "N/A";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return buf;
}

namespace {

std::string format_delta(const std::optional<double>& a, const std::optional<double>& b) {
    if (!a || !b) return "N/A";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.4f", *a - *b);
    return buf;
}

std::size_t name_width(std::string_view header, std::span<const TaskRow> rows) {
    std::size_t w = header.size();
    for (const auto& r : rows) w = std::max(w, r.name.size());
    return w;
}

}  // namespace

std::string render_task_table(std::string_view first_column, std::span<const TaskRow> rows) {
    const std::size_t w = name_width(first_column, rows);
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(w)) << first_column << " | Task A | Task B | Task C | Mean\n";
    os << std::string(w, '-') << "-+--------+--------+--------+-------\n";
    for (const auto& r : rows) {
        os << std::left << std::setw(static_cast<int>(w)) << r.name << " | " << std::setw(6) << format_score(r.task_a)
           << " | " << std::setw(6) << format_score(r.task_b) << " | " << std::setw(6) << format_score(r.task_c)
           << " | " << format_score(r.mean) << '\n';
    }
    return os.str();
}

std::string render_emotion_table(std::span<const EmotionRow> rows) {
    std::ostringstream os;
    os << "Emotion    | Task        | Only Text | MMMT\n";
    os << "-----------+-------------+-----------+-------\n";
    for (const auto& r : rows) {
        os << std::left << std::setw(10) << r.emotion << " | " << std::setw(11) << r.task << " | " << std::setw(9)
           << format_score(r.text_only) << " | " << format_score(r.mmmt) << '\n';
    }
    return os.str();
}

TaskRow task_row(const MetricsReport& report, std::string name) {
    return TaskRow{std::move(name), report.task_a, report.task_b, report.task_c, report.mean};
}

std::string render_report(const MetricsReport& report, std::string_view name) {
    const SubtaskScores& s = report.subtasks;
    std::ostringstream os;
    os << "Emotion    | Task        | Weighted F1\n";
    os << "-----------+-------------+------------\n";
    auto line = [&](const char* emotion, const char* task, const std::optional<double>& v) {
        os << std::left << std::setw(10) << emotion << " | " << std::setw(11) << task << " | " << format_score(v)
           << '\n';
    };
    line("Sentiment", "Task A", s.sentiment);
    line("Humour", "Task B", s.humour_b);
    line("Humour", "Task C", s.humour_c);
    line("Sarcasm", "Task B", s.sarcasm_b);
    line("Sarcasm", "Task C", s.sarcasm_c);
    line("Offensive", "Task B", s.offensive_b);
    line("Offensive", "Task C", s.offensive_c);
    line("Motivation", "Tasks B & C", s.motivation);
    os << '\n';
    const TaskRow row = task_row(report, std::string(name));
    os << render_task_table("Model", std::span(&row, 1));
    return os.str();
}

std::string render_comparison(const MetricsReport& report, std::string_view which) {
    const ReferenceTables& ref = reference_tables();
    std::ostringstream os;
    auto table_with_run = [&](const std::vector<TaskRow>& reference, std::string_view header, const TaskRow& own) {
        std::vector<TaskRow> rows = reference;
        rows.push_back(task_row(report, "this run"));
        os << render_task_table(header, rows);
        os << "delta vs " << own.name << ": Task A " << format_delta(report.task_a, own.task_a) << ", Task B "
           << format_delta(report.task_b, own.task_b) << ", Task C " << format_delta(report.task_c, own.task_c)
           << ", Mean " << format_delta(report.mean, own.mean) << '\n';
    };
    if (which == "table7") {
        table_with_run(ref.leaderboard, "Team Name", ref.leaderboard.front());
    } else if (which == "table3") {
        table_with_run(ref.per_task, "Model", ref.per_task.back());
    } else if (which == "table5") {
        table_with_run(ref.ablation, "Features Used", ref.ablation.back());
    } else if (which == "table2") {
        os << render_emotion_table(ref.per_emotion) << '\n' << render_report(report);
    } else {
        throw ConfigError("--compare must be one of table2, table3, table5, table7; got '" + std::string(which) + "'");
    }
    return os.str();
}

}  // namespace mmmt
