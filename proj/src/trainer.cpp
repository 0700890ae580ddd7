#include "csreft/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include "csreft/errors.hpp"
#include "csreft/linalg.hpp"
#include "csreft/rng.hpp"

namespace csreft {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
    if (steps < 0) throw ConfigError("train.steps must be >= 0");
    if (!(lambda >= 0.0)) throw ConfigError("train.lambda must be >= 0");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("train.adam_beta1 must be in [0,1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("train.adam_beta2 must be in [0,1)");
    if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be > 0");
}

TrainState init_state(const FrozenModel& model, int k, int rank, const std::vector<HookSite>& sites,
                      bool with_router, std::uint64_t seed) {
    if (k < 1) throw ConfigError("need at least one edit set");
    if (rank < 1 || rank > model.config.d) {
        throw ShapeError("edit rank " + std::to_string(rank) + " outside [1," +
                         std::to_string(model.config.d) + "]");
    }
    if (sites.empty()) throw ConfigError("need at least one hook site");
    for (const HookSite& s : sites) {
        if (s.layer < 0 || s.layer >= model.config.n_layers) {
            throw ConfigError("hook layer " + std::to_string(s.layer) + " outside model");
        }
    }

    Rng seeder(seed);
    TrainState state;
    state.sites = sites;
    state.edits.resize(static_cast<std::size_t>(k));
    for (int t = 0; t < k; ++t) {
        for (const HookSite& s : sites) {
            state.edits[static_cast<std::size_t>(t)].push_back(
                identity_init(rank, model.config.d, s, seeder.next_u64()));
        }
    }
    if (with_router) {
        state.router = init_router(model.config.d, k, seeder.next_u64());
    }
    for (const ParamRef& p : trainable_params(state)) {
        state.adam_m.push_back(Tensor::zeros(p.tensor->shape));
        state.adam_v.push_back(Tensor::zeros(p.tensor->shape));
    }
    return state;
}

const char* param_group_name(ParamGroup g) {
    switch (g) {
        case ParamGroup::kEditBasis: return "edit.R";
        case ParamGroup::kEditCoordMap: return "edit.W";
        case ParamGroup::kEditCoordBias: return "edit.b";
        case ParamGroup::kRouterW1: return "router.W1";
        case ParamGroup::kRouterB1: return "router.b1";
        case ParamGroup::kRouterW2: return "router.W2";
        case ParamGroup::kRouterB2: return "router.b2";
    }
    return "?";
}

std::vector<ParamRef> trainable_params(TrainState& state) {
    std::vector<ParamRef> out;
    for (std::size_t t = 0; t < state.edits.size(); ++t) {
        for (std::size_t s = 0; s < state.edits[t].size(); ++s) {
            SubspaceEdit& e = state.edits[t][s];
            const std::string tag = "edit[" + std::to_string(t) + "][" + std::to_string(s) + "]";
            out.push_back({tag + ".R", ParamGroup::kEditBasis, &e.basis});
            out.push_back({tag + ".W", ParamGroup::kEditCoordMap, &e.coord_map});
            out.push_back({tag + ".b", ParamGroup::kEditCoordBias, &e.coord_bias});
        }
    }
    if (state.router) {
        out.push_back({"router.W1", ParamGroup::kRouterW1, &state.router->w1});
        out.push_back({"router.b1", ParamGroup::kRouterB1, &state.router->b1});
        out.push_back({"router.W2", ParamGroup::kRouterW2, &state.router->w2});
        out.push_back({"router.b2", ParamGroup::kRouterB2, &state.router->b2});
    }
    return out;
}

double sparsity_penalty(const Tensor& alpha) {
    double s = 0.0;
    for (double v : alpha.data) s += v;
    return s / static_cast<double>(alpha.numel());
}

namespace {

// Composed forward for one sequence on an existing tape: router gates (soft
// node / hard constants / fixed ones) applied to every edit delta at every
// site. Fills alpha_node_out with the soft gate node (-1 without a router)
// and gates_out with the gate values actually applied.
NodeId composed_example_forward(Tape& tape, const TrainState& state, const FrozenModel& model,
                                const std::vector<std::vector<EditNodes>>& edit_nodes,
                                const RouterNodes& router_nodes, int first_hooked_layer,
                                GateMode gate_mode, const std::vector<int>& tokens,
                                NodeId* alpha_node_out, Tensor* gates_out) {
    const int k = state.n_tasks();
    NodeId alpha_node = -1;
    Tensor hard_gates;

    std::vector<std::pair<int, ObserverFn>> observers;
    if (state.router) {
        observers.emplace_back(first_hooked_layer, [&](Tape& t, NodeId h_full) {
            NodeId embed;
            if (state.route_input == RouteInput::kFirstToken) {
                embed = t.slice(h_full, 0, 0, 1);
            } else {
                const int n = t.value(h_full).shape[0];
                NodeId ones = t.constant(Tensor::full({1, n}, 1.0));
                embed = t.scalar_mul(t.matmul(ones, h_full), 1.0 / n);
            }
            alpha_node = route_node(t, router_nodes, embed);
            if (gate_mode == GateMode::kHard) {
                hard_gates = gate(Tensor::vector(t.value(alpha_node).data), GateMode::kHard,
                                  state.router->threshold);
            }
        });
    }

    std::vector<std::pair<HookSite, EditFn>> hooks;
    for (std::size_t s = 0; s < state.sites.size(); ++s) {
        hooks.emplace_back(state.sites[s], [&, s](Tape& t, NodeId pre) {
            NodeId acc = -1;
            for (int i = 0; i < k; ++i) {
                NodeId delta = -1;
                if (!state.router) {
                    delta = edit_delta_node(t, edit_nodes[static_cast<std::size_t>(i)][s], pre);
                } else if (gate_mode == GateMode::kHard) {
                    if (hard_gates.data[static_cast<std::size_t>(i)] == 0.0) continue;
                    delta = edit_delta_node(t, edit_nodes[static_cast<std::size_t>(i)][s], pre);
                } else {
                    NodeId coeff = t.slice(alpha_node, 1, i, 1);
                    delta = t.mul(edit_delta_node(t, edit_nodes[static_cast<std::size_t>(i)][s], pre),
                                  coeff);
                }
                acc = acc < 0 ? delta : t.add(acc, delta);
            }
            return acc < 0 ? pre : t.add(pre, acc);
        });
    }

    HookedForwardResult fwd = forward_with_hooks(tape, model, tokens, hooks, observers);
    if (alpha_node_out) *alpha_node_out = alpha_node;
    if (gates_out) {
        if (!state.router) {
            *gates_out = Tensor::full({k}, 1.0);
        } else if (gate_mode == GateMode::kHard) {
            *gates_out = hard_gates;
        } else {
            *gates_out = Tensor::vector(tape.value(alpha_node).data);
        }
    }
    return fwd.logits;
}

struct GraphLeaves {
    std::vector<std::vector<EditNodes>> edit_nodes;
    RouterNodes router_nodes;
    std::vector<NodeId> flat;
    int first_hooked_layer = 0;
};

GraphLeaves make_leaves(Tape& tape, const TrainState& state, bool requires_grad) {
    GraphLeaves leaves;
    const int k = state.n_tasks();
    leaves.edit_nodes.resize(static_cast<std::size_t>(k));
    for (int t = 0; t < k; ++t) {
        for (const SubspaceEdit& e : state.edits[static_cast<std::size_t>(t)]) {
            leaves.edit_nodes[static_cast<std::size_t>(t)].push_back(
                edit_leaves(tape, e, requires_grad));
        }
        for (const EditNodes& en : leaves.edit_nodes[static_cast<std::size_t>(t)]) {
            leaves.flat.push_back(en.basis);
            leaves.flat.push_back(en.coord_map);
            leaves.flat.push_back(en.coord_bias);
        }
    }
    if (state.router) {
        leaves.router_nodes = router_leaves(tape, *state.router, requires_grad);
        leaves.flat.push_back(leaves.router_nodes.w1);
        leaves.flat.push_back(leaves.router_nodes.b1);
        leaves.flat.push_back(leaves.router_nodes.w2);
        leaves.flat.push_back(leaves.router_nodes.b2);
    }
    leaves.first_hooked_layer = state.sites.empty() ? 0 : state.sites[0].layer;
    for (const HookSite& s : state.sites) {
        leaves.first_hooked_layer = std::min(leaves.first_hooked_layer, s.layer);
    }
    return leaves;
}

}  // namespace

BatchGraph build_batch_loss(Tape& tape, const TrainState& state, const FrozenModel& model,
                            const std::vector<Example>& batch, double lambda, GateMode gate_mode,
                            bool requires_grad) {
    if (batch.empty()) throw EmptyBatch("batch_loss on an empty batch");

    BatchGraph graph;
    const int k = state.n_tasks();
    GraphLeaves leaves = make_leaves(tape, state, requires_grad);
    graph.param_leaves = leaves.flat;

    std::vector<NodeId> ce_nodes;
    std::vector<NodeId> omega_nodes;
    Tensor alpha_sum = Tensor::zeros({k});

    for (const Example& ex : batch) {
        NodeId alpha_node = -1;
        Tensor gates;
        NodeId logits =
            composed_example_forward(tape, state, model, leaves.edit_nodes, leaves.router_nodes,
                                     leaves.first_hooked_layer, gate_mode, ex.tokens, &alpha_node,
                                     &gates);
        ce_nodes.push_back(tape.cross_entropy(logits, ex.targets));

        if (state.router) {
            if (gate_mode == GateMode::kHard) {
                omega_nodes.push_back(tape.constant(Tensor({1}, {sparsity_penalty(gates)})));
            } else {
                omega_nodes.push_back(tape.mean(alpha_node));
            }
            axpy(1.0, gates, alpha_sum);
        }
    }

    const double inv_b = 1.0 / static_cast<double>(batch.size());
    NodeId ce_total = ce_nodes[0];
    for (std::size_t i = 1; i < ce_nodes.size(); ++i) ce_total = tape.add(ce_total, ce_nodes[i]);
    ce_total = tape.scalar_mul(ce_total, inv_b);
    graph.task_loss = tape.scalar_value(ce_total);

    if (!omega_nodes.empty()) {
        NodeId om = omega_nodes[0];
        for (std::size_t i = 1; i < omega_nodes.size(); ++i) om = tape.add(om, omega_nodes[i]);
        om = tape.scalar_mul(om, inv_b);
        graph.omega = tape.scalar_value(om);
        graph.loss = tape.add(ce_total, tape.scalar_mul(om, lambda));
        graph.mean_alpha = alpha_sum;
        for (double& v : graph.mean_alpha.data) v *= inv_b;
    } else {
        graph.omega = 0.0;
        graph.loss = ce_total;
    }
    return graph;
}

namespace {

std::string format_log_line(int step, double total, double task, double omega, const Tensor& mean_alpha) {
    char buf[64];
    std::string line = std::to_string(step);
    auto push = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        line += '\t';
        line += buf;
    };
    push(total);
    push(task);
    push(omega);
    for (double v : mean_alpha.data) push(v);
    return line;
}

}  // namespace

void train_step(TrainState& state, const FrozenModel& model, const std::vector<Example>& batch,
                const TrainConfig& config, std::string* log_line) {
    std::vector<ParamRef> params = trainable_params(state);

    Tape tape;
    BatchGraph graph;
    try {
        graph = build_batch_loss(tape, state, model, batch, config.lambda, config.gate_mode_train, true);
    } catch (const NonFinite& e) {
        throw NonFiniteLoss("step " + std::to_string(state.step) + ": " + e.what());
    }
    const double loss_value = tape.scalar_value(graph.loss);
    if (!std::isfinite(loss_value)) {
        throw NonFiniteLoss("step " + std::to_string(state.step) + ": loss is not finite");
    }

    std::vector<Tensor> grads = tape.backward(graph.loss);

    const int t = state.step + 1;
    const double bc1 = 1.0 - std::pow(config.adam_beta1, t);
    const double bc2 = 1.0 - std::pow(config.adam_beta2, t);
    for (std::size_t p = 0; p < params.size(); ++p) {
        const Tensor& g = grads[static_cast<std::size_t>(graph.param_leaves[p])];
        if (!all_finite(g)) {
            throw NonFiniteLoss("step " + std::to_string(state.step) + ": non-finite gradient for " +
                                params[p].name);
        }
        Tensor& m = state.adam_m[p];
        Tensor& v = state.adam_v[p];
        Tensor& x = *params[p].tensor;
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            m.data[i] = config.adam_beta1 * m.data[i] + (1.0 - config.adam_beta1) * g.data[i];
            v.data[i] = config.adam_beta2 * v.data[i] + (1.0 - config.adam_beta2) * g.data[i] * g.data[i];
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            x.data[i] -= config.lr * mhat / (std::sqrt(vhat) + config.adam_eps);
        }
    }

    for (auto& task_edits : state.edits) {
        for (SubspaceEdit& e : task_edits) e = retract(e);
    }

    state.step += 1;
    state.loss_history.push_back(loss_value);
    if (log_line) {
        *log_line = format_log_line(state.step, loss_value, graph.task_loss, graph.omega,
                                    graph.mean_alpha);
    }
}

void train_run(TrainState& state, const FrozenModel& model, const std::vector<Example>& pool,
               const TrainConfig& config, std::ostream* log) {
    config.validate();
    if (pool.empty()) throw EmptyBatch("training pool is empty");
    Rng sampler(config.seed);
    for (int s = 0; s < config.steps; ++s) {
        std::vector<Example> batch;
        batch.reserve(static_cast<std::size_t>(config.batch_size));
        for (int b = 0; b < config.batch_size; ++b) {
            batch.push_back(pool[static_cast<std::size_t>(sampler.next_below(pool.size()))]);
        }
        std::string line;
        train_step(state, model, batch, config, log ? &line : nullptr);
        if (log) (*log) << line << '\n';
    }
}

Tensor composed_logits(const TrainState& state, const FrozenModel& model,
                       const std::vector<int>& tokens, GateMode gate_mode) {
    Tape tape;
    GraphLeaves leaves = make_leaves(tape, state, false);
    NodeId logits =
        composed_example_forward(tape, state, model, leaves.edit_nodes, leaves.router_nodes,
                                 leaves.first_hooked_layer, gate_mode, tokens, nullptr, nullptr);
    return tape.value(logits);
}

double eval_loss(const TrainState& state, const FrozenModel& model,
                 const std::vector<Example>& examples, GateMode gate_mode) {
    if (examples.empty()) throw EmptyBatch("eval on an empty dataset");
    double total = 0.0;
    for (const Example& ex : examples) {
        Tape tape;
        BatchGraph g = build_batch_loss(tape, state, model, {ex}, 0.0, gate_mode, false);
        total += g.task_loss;
    }
    return total / static_cast<double>(examples.size());
}

double eval_frozen(const FrozenModel& model, const std::vector<Example>& examples) {
    if (examples.empty()) throw EmptyBatch("eval on an empty dataset");
    double total = 0.0;
    for (const Example& ex : examples) {
        Tape tape;
        HookedForwardResult fwd = forward_with_hooks(tape, model, ex.tokens, {});
        total += tape.scalar_value(tape.cross_entropy(fwd.logits, ex.targets));
    }
    return total / static_cast<double>(examples.size());
}

TrainableCount count_trainable(const TrainState& state, const FrozenModel& model) {
    TrainableCount c;
    for (const auto& task_edits : state.edits) {
        for (const SubspaceEdit& e : task_edits) {
            c.edit_params += e.basis.numel() + e.coord_map.numel() + e.coord_bias.numel();
        }
    }
    if (state.router) {
        c.router_params = state.router->w1.numel() + state.router->b1.numel() +
                          state.router->w2.numel() + state.router->b2.numel();
    }
    c.total = c.edit_params + c.router_params;
    c.backbone_params = model.param_count();
    c.fraction = static_cast<double>(c.total) / static_cast<double>(c.backbone_params);
    return c;
}

std::int64_t edit_param_count(int rank, int d) {
    return 2ll * rank * d + rank;
}

std::int64_t router_param_count(int d, int k) {
    const std::int64_t hidden = d / 2 > 0 ? d / 2 : 1;
    return static_cast<std::int64_t>(d) * hidden + hidden + hidden * k + k;
}

std::int64_t backbone_param_count(const BackboneConfig& config) {
    const std::int64_t d = config.d;
    const std::int64_t per_layer = 12 * d * d + 9 * d;
    return static_cast<std::int64_t>(config.vocab_size) * d +
           static_cast<std::int64_t>(config.max_seq_len) * d +
           static_cast<std::int64_t>(config.n_layers) * per_layer + 2 * d +
           d * static_cast<std::int64_t>(config.vocab_size);
}

}  // namespace csreft
