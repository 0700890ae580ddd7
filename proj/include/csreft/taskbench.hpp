#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "csreft/trainer.hpp"

namespace csreft {

// Token-level sequence mappings that conflict with each other, a minimal
// controllable model of skill interference.
enum class TaskKind { kCopy, kReverse, kIncrement, kConstant };

TaskKind task_kind_from_name(const std::string& name);
const char* task_kind_name(TaskKind kind);

struct TaskSpec {
    int id = 1;  // 1-based
    TaskKind kind = TaskKind::kCopy;
    int seq_len = 8;
    int vocab = 16;
    // Token forced at position 0 of every input so the task is observable
    // from the sequence itself (a stand-in for task-revealing instruction
    // text); -1 disables. The router is never told the task id directly.
    int cue = -1;

    int constant_token() const { return id % vocab; }
};

// y as a pure function of (kind, x).
std::vector<int> task_targets(const TaskSpec& spec, const std::vector<int>& tokens);

// n examples with inputs drawn uniformly over the vocab (position 0 pinned
// to the cue token when one is set) and targets from task_targets.
// Deterministic in the seed. Example.task is spec.id - 1.
std::vector<Example> gen_task_data(const TaskSpec& spec, int n, std::uint64_t seed);

struct SplitData {
    std::vector<Example> train;
    std::vector<Example> holdout;
    std::vector<int> holdout_indices;  // ascending indices into the input
};

// Disjoint train/holdout split via a seeded shuffle.
SplitData split_dataset(const std::vector<Example>& data, double holdout_fraction,
                        std::uint64_t seed);

// Smallest-relative-gap shared-edit rank whose parameter count matches the
// given budget within 10%; throws BudgetError when no rank in [1, d] does.
int match_shared_rank(std::int64_t target_budget, int d, int n_sites);

// One independent single-edit state per task, trained on that task's pool
// only. Specialist i's parameters are disjoint from specialist j's.
std::vector<TrainState> train_specialists(const FrozenModel& model,
                                          const std::vector<std::vector<Example>>& pools, int rank,
                                          const std::vector<HookSite>& sites,
                                          const TrainConfig& config);

struct BenchmarkConfig {
    BackboneConfig backbone;
    std::vector<TaskKind> task_kinds = {TaskKind::kCopy, TaskKind::kReverse, TaskKind::kIncrement,
                                        TaskKind::kConstant};
    int seq_len = 8;
    int vocab = 16;
    bool cue_tokens = true;
    int rank = 4;
    std::vector<int> hook_layers;     // empty = every layer
    std::vector<int> hook_positions;  // empty = every position
    int examples_per_task = 256;
    double holdout_fraction = 0.25;
    TrainConfig train;
    GateMode eval_gate = GateMode::kSoft;
    RouteInput route_input = RouteInput::kFirstToken;

    void validate() const;
    std::vector<HookSite> sites() const;
    int n_tasks() const { return static_cast<int>(task_kinds.size()); }
};

struct InterferenceReport {
    int k = 0;
    std::vector<std::string> task_names;
    std::uint64_t seed = 0;
    GateMode eval_gate = GateMode::kSoft;

    int shared_rank = 0;
    std::int64_t budget_csreft = 0;
    std::int64_t budget_shared = 0;

    std::vector<double> loss_frozen;       // per task, held-out
    std::vector<double> loss_specialist;   // specialist i on task i
    std::vector<double> loss_shared;       // shared edit on task j
    std::vector<double> loss_csreft;       // composed model on task j
    std::vector<double> loss_csreft_hard;  // composed model, hard gates

    // matrix[i][j]: held-out loss change on task j caused by the model
    // trained with emphasis on task i (specialist i), relative to frozen.
    std::vector<std::vector<double>> matrix;
    bool diag_dominant = false;  // every row's diagonal is its minimum

    std::vector<std::vector<int>> holdout_indices;  // per task

    double mean_frozen = 0.0;
    double mean_specialist = 0.0;
    double mean_shared = 0.0;
    double mean_csreft = 0.0;
    double mean_csreft_hard = 0.0;
};

// Trains the three arms (shared single edit, composed edits + router,
// per-task specialists) on identical data with parameter budgets matched
// within 10%, then evaluates every configuration on every task's held-out
// split. Single-threaded and deterministic in the config seeds.
InterferenceReport run_interference_benchmark(const BenchmarkConfig& config,
                                              std::ostream* progress = nullptr);

std::string render_report(const InterferenceReport& report);
std::string render_matrix_csv(const InterferenceReport& report);

}  // namespace csreft
