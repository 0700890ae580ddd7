#pragma once

#include <string>
#include <vector>

#include "csreft/taskbench.hpp"

namespace csreft {

// Run configuration: key-value text with [section] headers, '#' comments.
// Every field has a default; unknown sections or keys are rejected with a
// diagnostic naming the offending key.
struct RunConfig {
    BackboneConfig backbone;

    int rank = 4;
    std::vector<int> hook_layers;     // empty = every layer
    std::vector<int> hook_positions;  // empty = every position

    bool router_enabled = true;
    double threshold = 0.5;
    RouteInput route_input = RouteInput::kFirstToken;

    TrainConfig train;

    std::vector<TaskKind> task_kinds = {TaskKind::kCopy, TaskKind::kReverse, TaskKind::kIncrement,
                                        TaskKind::kConstant};
    int seq_len = 8;
    int vocab = 16;
    bool cue_tokens = true;
    int examples_per_task = 128;
    double holdout_fraction = 0.25;

    std::string out_dir = "out";
    GateMode eval_gate = GateMode::kSoft;

    void validate() const;  // throws ConfigError naming the field
    BenchmarkConfig benchmark() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string render_run_config(const RunConfig& config);

}  // namespace csreft
