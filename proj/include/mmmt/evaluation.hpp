#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmmt/data.hpp"

namespace mmmt {

/// Support-weighted mean of per-class F1. Classes with no support get weight
/// zero; an undefined precision or recall counts as 0.
double weighted_f1(std::span<const int> preds, std::span<const int> golds, int num_classes);

/// Intensity rank -> presence: 0 stays 0, 1..3 become 1.
std::vector<int> binarize_task_c(std::span<const int> ranks);

/// Per-subtask weighted F1 scores. `_b` is presence (binary), `_c` is intensity.
/// Motivation is binary and counts toward both task B and task C.
struct SubtaskScores {
    std::optional<double> sentiment;
    std::optional<double> humour_b, humour_c;
    std::optional<double> sarcasm_b, sarcasm_c;
    std::optional<double> offensive_b, offensive_c;
    std::optional<double> motivation;
};

struct MetricsReport {
    SubtaskScores subtasks;
    std::optional<double> task_a, task_b, task_c, mean;
};

/// task_a = sentiment, task_b / task_c = mean of their four subtasks, mean =
/// mean of the three tasks. Aggregates with a missing input stay empty ("N/A").
MetricsReport aggregate(const SubtaskScores& scores);

/// Scores predictions against gold labels. Records whose gold label for a head
/// is absent are skipped for that head. With `emotion_classes == 2` the
/// emotion predictions are already binary and only task B is scored for them.
MetricsReport evaluate(std::span<const LabelSet> preds, std::span<const LabelSet> golds, int emotion_classes = 4);

/// The per-head score used for model selection: sentiment, the emotion heads
/// at the width they were trained with, and motivation.
std::optional<double> head_score(const MetricsReport& report, Head head, int emotion_classes = 4);

// ---------------------------------------------------------------------------
// Published reference numbers

struct TaskRow {
    std::string name;
    std::optional<double> task_a, task_b, task_c, mean;
};

struct EmotionRow {
    std::string emotion;
    std::string task;
    double text_only;
    double mmmt;
};

struct ReferenceTables {
    std::vector<EmotionRow> per_emotion;  // test scores per subtask, both systems
    std::vector<TaskRow> per_task;        // test task scores, both systems
    std::vector<TaskRow> ablation;        // validation scores per feature subset
    std::vector<TaskRow> leaderboard;     // shared-task leaderboard
};

const ReferenceTables& reference_tables();

/// Row names of the modality ablation, in published order.
const std::vector<std::string>& ablation_row_names();

// ---------------------------------------------------------------------------
// Rendering

std::string format_score(const std::optional<double>& v);
std::string render_task_table(std::string_view first_column, std::span<const TaskRow> rows);
std::string render_emotion_table(std::span<const EmotionRow> rows);
/// Per-subtask breakdown followed by the task row of `report`.
std::string render_report(const MetricsReport& report, std::string_view name = "this run");
TaskRow task_row(const MetricsReport& report, std::string name);

/// Reference table `which` ("table2", "table3", "table5", "table7") with this
/// run appended and signed deltas against the team's own reference row.
std::string render_comparison(const MetricsReport& report, std::string_view which);

}  // namespace mmmt
