#include "csreft/gradcheck.hpp"

#include <cmath>
#include <map>

#include "csreft/errors.hpp"
#include "csreft/rng.hpp"
#include "csreft/trainer.hpp"

namespace csreft {

namespace {

void check_eps(double eps) {
    if (!(eps >= 1e-7 && eps <= 1e-3)) {
        throw ConfigError("grad_check eps must lie in [1e-7, 1e-3]");
    }
}

double finite_or_throw(double v) {
    if (!std::isfinite(v)) throw NonFinite("grad_check probe produced a non-finite loss");
    return v;
}

}  // namespace

double grad_check(const LossBuilder& f, std::vector<Tensor> params, double eps) {
    check_eps(eps);

    Tape tape;
    std::vector<NodeId> leaves;
    NodeId loss = f(tape, params, leaves);
    finite_or_throw(tape.scalar_value(loss));
    std::vector<Tensor> grads = tape.backward(loss);

    double worst = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (std::size_t i = 0; i < params[p].data.size(); ++i) {
            const double orig = params[p].data[i];
            params[p].data[i] = orig + eps;
            Tape tp;
            std::vector<NodeId> lp;
            const double fplus = finite_or_throw(tp.scalar_value(f(tp, params, lp)));
            params[p].data[i] = orig - eps;
            Tape tm;
            std::vector<NodeId> lm;
            const double fminus = finite_or_throw(tm.scalar_value(f(tm, params, lm)));
            params[p].data[i] = orig;
            const double numeric = (fplus - fminus) / (2.0 * eps);
            const double analytic = grads[static_cast<std::size_t>(leaves[p])].data[i];
            const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
            worst = std::max(worst, std::fabs(analytic - numeric) / denom);
        }
    }
    return worst;
}

GradCheckReport grad_check_model(int d, int r, int k, double eps) {
    check_eps(eps);

    BackboneConfig cfg;
    cfg.vocab_size = 8;
    cfg.d = d;
    cfg.n_layers = 2;
    cfg.n_heads = d % 2 == 0 ? 2 : 1;
    cfg.max_seq_len = 4;
    cfg.seed = 11;
    FrozenModel model = build_frozen(cfg);

    std::vector<HookSite> sites;
    for (int l = 0; l < cfg.n_layers; ++l) sites.push_back(HookSite{l, {}});
    TrainState state = init_state(model, k, r, sites, /*with_router=*/true, 13);

    Rng rng(17);
    std::vector<Example> batch;
    for (int e = 0; e < 2; ++e) {
        Example ex;
        ex.task = e % k;
        for (int t = 0; t < cfg.max_seq_len; ++t) {
            ex.tokens.push_back(static_cast<int>(rng.next_below(cfg.vocab_size)));
            ex.targets.push_back(static_cast<int>(rng.next_below(cfg.vocab_size)));
        }
        batch.push_back(std::move(ex));
    }
    const double lambda = 0.01;

    std::vector<ParamRef> params = trainable_params(state);

    Tape tape;
    BatchGraph graph = build_batch_loss(tape, state, model, batch, lambda, GateMode::kSoft, true);
    finite_or_throw(tape.scalar_value(graph.loss));
    std::vector<Tensor> grads = tape.backward(graph.loss);

    auto loss_at = [&]() {
        Tape t;
        BatchGraph g = build_batch_loss(t, state, model, batch, lambda, GateMode::kSoft, false);
        return finite_or_throw(t.scalar_value(g.loss));
    };

    std::map<ParamGroup, GradCheckGroup> by_group;
    GradCheckReport report;
    for (std::size_t p = 0; p < params.size(); ++p) {
        const Tensor& analytic_grad = grads[static_cast<std::size_t>(graph.param_leaves[p])];
        Tensor& value = *params[p].tensor;
        for (std::size_t i = 0; i < value.data.size(); ++i) {
            const double orig = value.data[i];
            value.data[i] = orig + eps;
            const double fplus = loss_at();
            value.data[i] = orig - eps;
            const double fminus = loss_at();
            value.data[i] = orig;
            const double numeric = (fplus - fminus) / (2.0 * eps);
            const double analytic = analytic_grad.data[i];
            const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
            const double err = std::fabs(analytic - numeric) / denom;

            GradCheckGroup& grp = by_group[params[p].group];
            grp.group = param_group_name(params[p].group);
            if (err >= grp.max_rel_err) {
                grp.max_rel_err = err;
                grp.worst_param = params[p].name + "[" + std::to_string(i) + "]";
            }
            if (err >= report.max_rel_err) {
                report.max_rel_err = err;
                report.worst_param = grp.worst_param;
            }
        }
    }
    for (auto& [g, res] : by_group) report.groups.push_back(res);
    return report;
}

}  // namespace csreft
