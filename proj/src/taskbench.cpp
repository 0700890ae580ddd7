#include "csreft/taskbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "csreft/errors.hpp"
#include "csreft/rng.hpp"

namespace csreft {

TaskKind task_kind_from_name(const std::string& name) {
    if (name == "copy") return TaskKind::kCopy;
    if (name == "reverse") return TaskKind::kReverse;
    if (name == "increment") return TaskKind::kIncrement;
    if (name == "constant") return TaskKind::kConstant;
    throw ConfigError("unknown task kind '" + name + "'");
}

const char* task_kind_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::kCopy: return "copy";
        case TaskKind::kReverse: return "reverse";
        case TaskKind::kIncrement: return "increment";
        case TaskKind::kConstant: return "constant";
    }
    return "?";
}

namespace {

void check_spec(const TaskSpec& spec) {
    if (spec.vocab < 2) throw ConfigError("task vocab must be >= 2");
    if (spec.seq_len < 1) throw ConfigError("task seq_len must be >= 1");
    if (spec.id < 1) throw ConfigError("task id must be >= 1");
    if (spec.cue >= spec.vocab) throw ConfigError("task cue token outside vocab");
}

}  // namespace

std::vector<int> task_targets(const TaskSpec& spec, const std::vector<int>& tokens) {
    check_spec(spec);
    const int n = static_cast<int>(tokens.size());
    std::vector<int> y(static_cast<std::size_t>(n));
    switch (spec.kind) {
        case TaskKind::kCopy:
            y = tokens;
            break;
        case TaskKind::kReverse:
            for (int t = 0; t < n; ++t) y[static_cast<std::size_t>(t)] = tokens[static_cast<std::size_t>(n - 1 - t)];
            break;
        case TaskKind::kIncrement:
            for (int t = 0; t < n; ++t) y[static_cast<std::size_t>(t)] = (tokens[static_cast<std::size_t>(t)] + 1) % spec.vocab;
            break;
        case TaskKind::kConstant:
            for (int t = 0; t < n; ++t) y[static_cast<std::size_t>(t)] = spec.constant_token();
            break;
    }
    return y;
}

std::vector<Example> gen_task_data(const TaskSpec& spec, int n, std::uint64_t seed) {
    check_spec(spec);
    if (n < 1) throw ConfigError("gen_task_data needs n >= 1");
    Rng rng(seed);
    std::vector<Example> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int e = 0; e < n; ++e) {
        Example ex;
        ex.task = spec.id - 1;
        ex.tokens.resize(static_cast<std::size_t>(spec.seq_len));
        for (int t = 0; t < spec.seq_len; ++t) {
            ex.tokens[static_cast<std::size_t>(t)] = static_cast<int>(rng.next_below(spec.vocab));
        }
        if (spec.cue >= 0) ex.tokens[0] = spec.cue;
        ex.targets = task_targets(spec, ex.tokens);
        out.push_back(std::move(ex));
    }
    return out;
}

SplitData split_dataset(const std::vector<Example>& data, double holdout_fraction,
                        std::uint64_t seed) {
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
        throw ConfigError("holdout_fraction must lie in (0,1)");
    }
    const int n = static_cast<int>(data.size());
    const int n_holdout = std::max(1, static_cast<int>(std::ceil(n * holdout_fraction)));
    if (n_holdout >= n) throw ConfigError("holdout split leaves no training data");

    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    Rng rng(seed);
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i + 1)));
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }

    SplitData split;
    split.holdout_indices.assign(perm.begin(), perm.begin() + n_holdout);
    std::sort(split.holdout_indices.begin(), split.holdout_indices.end());
    std::vector<char> is_holdout(static_cast<std::size_t>(n), 0);
    for (int i : split.holdout_indices) is_holdout[static_cast<std::size_t>(i)] = 1;
    for (int i = 0; i < n; ++i) {
        (is_holdout[static_cast<std::size_t>(i)] ? split.holdout : split.train)
            .push_back(data[static_cast<std::size_t>(i)]);
    }
    return split;
}

int match_shared_rank(std::int64_t target_budget, int d, int n_sites) {
    int best_rank = 1;
    double best_gap = 1e300;
    for (int r = 1; r <= d; ++r) {
        const double budget = static_cast<double>(n_sites) * static_cast<double>(edit_param_count(r, d));
        const double gap = std::fabs(budget - static_cast<double>(target_budget)) /
                           static_cast<double>(target_budget);
        if (gap < best_gap) {
            best_gap = gap;
            best_rank = r;
        }
    }
    if (best_gap > 0.10) {
        std::ostringstream os;
        os << "cannot match parameter budget " << target_budget << " within 10% at d=" << d
           << " (best gap " << best_gap * 100.0 << "% at rank " << best_rank << ")";
        throw BudgetError(os.str());
    }
    return best_rank;
}

std::vector<TrainState> train_specialists(const FrozenModel& model,
                                          const std::vector<std::vector<Example>>& pools, int rank,
                                          const std::vector<HookSite>& sites,
                                          const TrainConfig& config) {
    Rng seeder(config.seed);
    std::vector<TrainState> specialists;
    for (const std::vector<Example>& pool : pools) {
        TrainState state = init_state(model, 1, rank, sites, /*with_router=*/false, seeder.next_u64());
        TrainConfig cfg = config;
        cfg.seed = seeder.next_u64();
        train_run(state, model, pool, cfg);
        specialists.push_back(std::move(state));
    }
    return specialists;
}

void BenchmarkConfig::validate() const {
    if (task_kinds.size() < 2) throw ConfigError("benchmark needs at least 2 tasks");
    if (vocab < 2) throw ConfigError("tasks.vocab must be >= 2");
    if (vocab > backbone.vocab_size) throw ConfigError("tasks.vocab exceeds backbone vocab_size");
    if (seq_len < 1 || seq_len > backbone.max_seq_len) {
        throw ConfigError("tasks.seq_len outside [1, backbone.max_seq_len]");
    }
    if (rank < 1 || rank > backbone.d) throw ConfigError("intervention.rank outside [1, d]");
    if (examples_per_task < 4) throw ConfigError("tasks.examples_per_task must be >= 4");
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
        throw ConfigError("tasks.holdout_fraction must lie in (0,1)");
    }
    for (int l : hook_layers) {
        if (l < 0 || l >= backbone.n_layers) throw ConfigError("intervention.layers entry outside model");
    }
    for (int p : hook_positions) {
        if (p < 0 || p >= seq_len) throw ConfigError("intervention.positions entry outside sequence");
    }
    train.validate();
}

std::vector<HookSite> BenchmarkConfig::sites() const {
    std::vector<int> layers = hook_layers;
    if (layers.empty()) {
        for (int l = 0; l < backbone.n_layers; ++l) layers.push_back(l);
    }
    std::vector<HookSite> out;
    for (int l : layers) out.push_back(HookSite{l, hook_positions});
    return out;
}

InterferenceReport run_interference_benchmark(const BenchmarkConfig& config, std::ostream* progress) {
    config.validate();
    const int k = config.n_tasks();
    FrozenModel model = build_frozen(config.backbone);
    const std::vector<HookSite> sites = config.sites();
    const int n_sites = static_cast<int>(sites.size());

    InterferenceReport report;
    report.k = k;
    report.seed = config.train.seed;
    report.eval_gate = config.eval_gate;

    report.budget_csreft = static_cast<std::int64_t>(k) * n_sites *
                               edit_param_count(config.rank, config.backbone.d) +
                           router_param_count(config.backbone.d, k);
    report.shared_rank = match_shared_rank(report.budget_csreft, config.backbone.d, n_sites);
    report.budget_shared =
        static_cast<std::int64_t>(n_sites) * edit_param_count(report.shared_rank, config.backbone.d);

    Rng seeder(config.train.seed);
    std::vector<std::vector<Example>> train_pools;
    std::vector<std::vector<Example>> holdouts;
    std::vector<Example> mixture;
    for (int i = 0; i < k; ++i) {
        TaskSpec spec;
        spec.id = i + 1;
        spec.kind = config.task_kinds[static_cast<std::size_t>(i)];
        spec.seq_len = config.seq_len;
        spec.vocab = config.vocab;
        spec.cue = config.cue_tokens ? i % config.vocab : -1;
        report.task_names.push_back(task_kind_name(spec.kind));

        std::vector<Example> data = gen_task_data(spec, config.examples_per_task, seeder.next_u64());
        SplitData split = split_dataset(data, config.holdout_fraction, seeder.next_u64());
        mixture.insert(mixture.end(), split.train.begin(), split.train.end());
        train_pools.push_back(std::move(split.train));
        holdouts.push_back(std::move(split.holdout));
        report.holdout_indices.push_back(std::move(split.holdout_indices));
    }

    const std::uint64_t seed_csreft_state = seeder.next_u64();
    const std::uint64_t seed_csreft_train = seeder.next_u64();
    const std::uint64_t seed_shared_state = seeder.next_u64();
    const std::uint64_t seed_shared_train = seeder.next_u64();
    const std::uint64_t seed_specialists = seeder.next_u64();

    if (progress) (*progress) << "training composed model (" << k << " edits + router)\n";
    TrainState csreft_state =
        init_state(model, k, config.rank, sites, /*with_router=*/true, seed_csreft_state);
    csreft_state.route_input = config.route_input;
    TrainConfig cs_cfg = config.train;
    cs_cfg.seed = seed_csreft_train;
    train_run(csreft_state, model, mixture, cs_cfg);

    if (progress) (*progress) << "training shared single edit (rank " << report.shared_rank << ")\n";
    TrainState shared_state =
        init_state(model, 1, report.shared_rank, sites, /*with_router=*/false, seed_shared_state);
    TrainConfig sh_cfg = config.train;
    sh_cfg.seed = seed_shared_train;
    train_run(shared_state, model, mixture, sh_cfg);

    if (progress) (*progress) << "training " << k << " specialists\n";
    TrainConfig sp_cfg = config.train;
    sp_cfg.seed = seed_specialists;
    std::vector<TrainState> specialists =
        train_specialists(model, train_pools, config.rank, sites, sp_cfg);

    if (progress) (*progress) << "evaluating\n";
    for (int j = 0; j < k; ++j) {
        const std::vector<Example>& h = holdouts[static_cast<std::size_t>(j)];
        report.loss_frozen.push_back(eval_frozen(model, h));
        report.loss_shared.push_back(eval_loss(shared_state, model, h, GateMode::kSoft));
        report.loss_csreft.push_back(eval_loss(csreft_state, model, h, config.eval_gate));
        report.loss_csreft_hard.push_back(eval_loss(csreft_state, model, h, GateMode::kHard));
        report.loss_specialist.push_back(
            eval_loss(specialists[static_cast<std::size_t>(j)], model, h, GateMode::kSoft));
    }

    report.matrix.assign(static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(k), 0.0));
    report.diag_dominant = true;
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            const double loss_ij = i == j ? report.loss_specialist[static_cast<std::size_t>(i)]
                                          : eval_loss(specialists[static_cast<std::size_t>(i)], model,
                                                      holdouts[static_cast<std::size_t>(j)],
                                                      GateMode::kSoft);
            report.matrix[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                loss_ij - report.loss_frozen[static_cast<std::size_t>(j)];
        }
        for (int j = 0; j < k; ++j) {
            if (report.matrix[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] >
                report.matrix[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) {
                report.diag_dominant = false;
            }
        }
    }

    auto mean = [k](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / k;
    };
    report.mean_frozen = mean(report.loss_frozen);
    report.mean_specialist = mean(report.loss_specialist);
    report.mean_shared = mean(report.loss_shared);
    report.mean_csreft = mean(report.loss_csreft);
    report.mean_csreft_hard = mean(report.loss_csreft_hard);
    return report;
}

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string render_report(const InterferenceReport& r) {
    std::ostringstream os;
    os << "format = csreft-interference-report-v1\n";
    os << "k = " << r.k << "\n";
    os << "tasks = ";
    for (int i = 0; i < r.k; ++i) os << (i ? "," : "") << r.task_names[static_cast<std::size_t>(i)];
    os << "\n";
    os << "seed = " << r.seed << "\n";
    os << "gate_eval = " << (r.eval_gate == GateMode::kSoft ? "soft" : "hard") << "\n";
    os << "shared_rank = " << r.shared_rank << "\n";
    os << "budget_csreft = " << r.budget_csreft << "\n";
    os << "budget_shared = " << r.budget_shared << "\n";
    os << "budget_ratio = "
       << fmt(static_cast<double>(r.budget_shared) / static_cast<double>(r.budget_csreft)) << "\n";
    os << "diag_dominant = " << (r.diag_dominant ? "yes" : "no") << "\n";
    os << "mean_loss_frozen = " << fmt(r.mean_frozen) << "\n";
    os << "mean_loss_specialist = " << fmt(r.mean_specialist) << "\n";
    os << "mean_loss_shared = " << fmt(r.mean_shared) << "\n";
    os << "mean_loss_csreft = " << fmt(r.mean_csreft) << "\n";
    os << "mean_loss_csreft_hard = " << fmt(r.mean_csreft_hard) << "\n";
    for (int j = 0; j < r.k; ++j) {
        const std::string t = ".task" + std::to_string(j + 1);
        os << "loss_frozen" << t << " = " << fmt(r.loss_frozen[static_cast<std::size_t>(j)]) << "\n";
        os << "loss_specialist" << t << " = " << fmt(r.loss_specialist[static_cast<std::size_t>(j)]) << "\n";
        os << "loss_shared" << t << " = " << fmt(r.loss_shared[static_cast<std::size_t>(j)]) << "\n";
        os << "loss_csreft" << t << " = " << fmt(r.loss_csreft[static_cast<std::size_t>(j)]) << "\n";
        os << "loss_csreft_hard" << t << " = " << fmt(r.loss_csreft_hard[static_cast<std::size_t>(j)])
           << "\n";
    }
    for (int i = 0; i < r.k; ++i) {
        for (int j = 0; j < r.k; ++j) {
            os << "matrix." << i + 1 << "." << j + 1 << " = "
               << fmt(r.matrix[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) << "\n";
        }
    }
    for (int j = 0; j < r.k; ++j) {
        os << "holdout_indices.task" << j + 1 << " = ";
        const auto& idx = r.holdout_indices[static_cast<std::size_t>(j)];
        for (std::size_t i = 0; i < idx.size(); ++i) os << (i ? "," : "") << idx[i];
        os << "\n";
    }
    return os.str();
}

std::string render_matrix_csv(const InterferenceReport& r) {
    std::ostringstream os;
    for (int i = 0; i < r.k; ++i) {
        for (int j = 0; j < r.k; ++j) {
            os << (j ? "," : "") << fmt(r.matrix[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace csreft
