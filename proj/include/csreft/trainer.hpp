#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "csreft/backbone.hpp"
#include "csreft/intervention.hpp"
#include "csreft/router.hpp"

namespace csreft {

struct TrainConfig {
    double lambda = 0.01;  // sparsity weight on the gate vector
    double lr = 1e-3;
    int steps = 0;
    int batch_size = 8;
    std::uint64_t seed = 7;
    GateMode gate_mode_train = GateMode::kSoft;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;  // throws ConfigError naming the field
};

// One labeled sequence. The task index selects which targets apply; it is
// never visible to the forward pass or the router.
struct Example {
    int task = 0;  // 0-based
    std::vector<int> tokens;
    std::vector<int> targets;
};

// Trainable state: per-(task, site) edits plus an optional router. Without
// a router every gate is fixed at 1 (single-edit and specialist training).
// The backbone is never part of this state.
struct TrainState {
    std::vector<std::vector<SubspaceEdit>> edits;  // [task][site]
    std::optional<RouterNet> router;
    RouteInput route_input = RouteInput::kFirstToken;
    std::vector<HookSite> sites;
    int step = 0;
    std::vector<double> loss_history;
    std::vector<Tensor> adam_m, adam_v;  // aligned with trainable_params order

    int n_tasks() const { return static_cast<int>(edits.size()); }
};

TrainState init_state(const FrozenModel& model, int k, int rank, const std::vector<HookSite>& sites,
                      bool with_router, std::uint64_t seed);

enum class ParamGroup {
    kEditBasis,
    kEditCoordMap,
    kEditCoordBias,
    kRouterW1,
    kRouterB1,
    kRouterW2,
    kRouterB2,
};

const char* param_group_name(ParamGroup g);

struct ParamRef {
    std::string name;
    ParamGroup group;
    Tensor* tensor;
};

// Fixed enumeration order: edits task-major then site, basis/coord_map/
// coord_bias per edit, then router w1,b1,w2,b2.
std::vector<ParamRef> trainable_params(TrainState& state);

// Omega(alpha): mean L1 of the gate vector.
double sparsity_penalty(const Tensor& alpha);

struct BatchGraph {
    NodeId loss = -1;
    double task_loss = 0.0;   // cross-entropy part
    double omega = 0.0;       // mean sparsity part
    Tensor mean_alpha;        // per-gate batch mean, empty without a router
    std::vector<NodeId> param_leaves;  // aligned with trainable_params order
};

// Builds the joint objective for one batch on the given tape:
// mean cross-entropy over examples plus lambda * mean gate sparsity.
// In hard gate mode the thresholded gates enter as constants, so no
// gradient reaches the router. Throws EmptyBatch on an empty batch.
BatchGraph build_batch_loss(Tape& tape, const TrainState& state, const FrozenModel& model,
                            const std::vector<Example>& batch, double lambda, GateMode gate_mode,
                            bool requires_grad);

// One Adam step over all trainable parameters followed by basis retraction
// on every edit. Appends the loss to the history and increments the step
// counter. Throws NonFiniteLoss with a (step, parameter) diagnostic when
// the loss or a gradient stops being finite.
void train_step(TrainState& state, const FrozenModel& model, const std::vector<Example>& batch,
                const TrainConfig& config, std::string* log_line = nullptr);

// Runs config.steps steps, sampling batches uniformly from the pool with a
// generator seeded by config.seed. Writes one tab-separated line per step
// (step, total loss, task loss, omega, per-gate mean alpha) to the sink.
void train_run(TrainState& state, const FrozenModel& model, const std::vector<Example>& pool,
               const TrainConfig& config, std::ostream* log = nullptr);

// Values-only composed forward for one sequence: edits gated by the router
// (or fixed at 1 without one) applied at every site.
Tensor composed_logits(const TrainState& state, const FrozenModel& model,
                       const std::vector<int>& tokens, GateMode gate_mode);

// Mean cross-entropy of the composed model over a dataset, values only.
double eval_loss(const TrainState& state, const FrozenModel& model,
                 const std::vector<Example>& examples, GateMode gate_mode);

// Same for the bare frozen model.
double eval_frozen(const FrozenModel& model, const std::vector<Example>& examples);

struct TrainableCount {
    std::int64_t edit_params = 0;
    std::int64_t router_params = 0;
    std::int64_t total = 0;
    std::int64_t backbone_params = 0;
    double fraction = 0.0;
};

// Counted from the actual tensors, exact integer arithmetic.
TrainableCount count_trainable(const TrainState& state, const FrozenModel& model);

// Closed forms, usable without materializing any tensors.
std::int64_t edit_param_count(int rank, int d);
std::int64_t router_param_count(int d, int k);
std::int64_t backbone_param_count(const BackboneConfig& config);

}  // namespace csreft
