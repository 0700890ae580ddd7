// csreft: train, benchmark and inspect compositional subspace edits on a
// frozen toy transformer.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "csreft/checkpoint.hpp"
#include "csreft/config.hpp"
#include "csreft/errors.hpp"
#include "csreft/gradcheck.hpp"
#include "csreft/rng.hpp"
#include "csreft/taskbench.hpp"

namespace {

using namespace csreft;

enum LogLevel { kQuiet = 0, kInfo = 1, kDebug = 2 };

LogLevel log_level() {
    const char* env = std::getenv("CSREFT_LOG");
    if (!env) return kInfo;
    const std::string v = env;
    if (v == "quiet") return kQuiet;
    if (v == "debug") return kDebug;
    return kInfo;
}

void info(const std::string& msg) {
    if (log_level() >= kInfo) std::cerr << msg << "\n";
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open '" + tmp + "' for writing");
        f.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!f) throw IoError("short write to '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

struct Overrides {
    std::string config_path;
    std::string out_dir;
    std::string gate;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

RunConfig load_with_overrides(const Overrides& ov) {
    RunConfig cfg = load_run_config(ov.config_path);
    if (ov.seed_set) cfg.train.seed = ov.seed;
    if (!ov.out_dir.empty()) cfg.out_dir = ov.out_dir;
    if (!ov.gate.empty()) {
        const GateMode mode = ov.gate == "hard" ? GateMode::kHard : GateMode::kSoft;
        cfg.train.gate_mode_train = mode;
        cfg.eval_gate = mode;
    }
    cfg.validate();
    return cfg;
}

int cmd_train(const Overrides& ov) {
    RunConfig cfg = load_with_overrides(ov);
    FrozenModel model = build_frozen(cfg.backbone);
    BenchmarkConfig bench = cfg.benchmark();
    const std::vector<HookSite> sites = bench.sites();
    const int k = static_cast<int>(cfg.task_kinds.size());

    Rng seeder(cfg.train.seed);
    std::vector<Example> mixture;
    for (int i = 0; i < k; ++i) {
        TaskSpec spec;
        spec.id = i + 1;
        spec.kind = cfg.task_kinds[static_cast<std::size_t>(i)];
        spec.seq_len = cfg.seq_len;
        spec.vocab = cfg.vocab;
        spec.cue = cfg.cue_tokens ? i % cfg.vocab : -1;
        std::vector<Example> data = gen_task_data(spec, cfg.examples_per_task, seeder.next_u64());
        SplitData split = split_dataset(data, cfg.holdout_fraction, seeder.next_u64());
        mixture.insert(mixture.end(), split.train.begin(), split.train.end());
    }
    const std::uint64_t state_seed = seeder.next_u64();
    const std::uint64_t train_seed = seeder.next_u64();

    TrainState state = init_state(model, k, cfg.rank, sites, cfg.router_enabled, state_seed);
    if (state.router) state.router->threshold = cfg.threshold;
    state.route_input = cfg.route_input;
    TrainConfig tc = cfg.train;
    tc.seed = train_seed;

    info("training " + std::to_string(k) + " edit set(s) for " + std::to_string(tc.steps) + " steps");
    std::ostringstream log;
    log << "# step\ttotal_loss\ttask_loss\tomega";
    if (state.router) {
        for (int i = 0; i < k; ++i) log << "\tmean_alpha" << i + 1;
    }
    log << "\n";
    train_run(state, model, mixture, tc, &log);
    if (log_level() >= kDebug) std::cerr << log.str();

    std::filesystem::create_directories(cfg.out_dir);
    const std::string log_path = cfg.out_dir + "/train.log";
    const std::string ckpt_path = cfg.out_dir + "/checkpoint.csrf";
    write_file_atomic(log_path, log.str());
    save_checkpoint(checkpoint_from_state(state, model,
                                          {{"train_seed", std::to_string(cfg.train.seed)}}),
                    ckpt_path);

    TrainableCount count = count_trainable(state, model);
    info("final loss " +
         (state.loss_history.empty() ? std::string("n/a") : std::to_string(state.loss_history.back())));
    info("trainable params " + std::to_string(count.total) + " (" + std::to_string(count.fraction) +
         " of backbone " + std::to_string(count.backbone_params) + ")");
    info("wrote " + log_path + " and " + ckpt_path);
    return 0;
}

int cmd_interfere(const Overrides& ov) {
    RunConfig cfg = load_with_overrides(ov);
    BenchmarkConfig bench = cfg.benchmark();
    std::ostream* progress = log_level() >= kInfo ? &std::cerr : nullptr;
    InterferenceReport report = run_interference_benchmark(bench, progress);

    std::filesystem::create_directories(cfg.out_dir);
    const std::string report_path = cfg.out_dir + "/report.txt";
    const std::string csv_path = cfg.out_dir + "/interference.csv";
    write_file_atomic(report_path, render_report(report));
    write_file_atomic(csv_path, render_matrix_csv(report));

    info("mean held-out loss: frozen " + std::to_string(report.mean_frozen) + ", shared " +
         std::to_string(report.mean_shared) + ", composed " + std::to_string(report.mean_csreft) +
         ", specialists " + std::to_string(report.mean_specialist));
    info("wrote " + report_path + " and " + csv_path);
    return 0;
}

int cmd_gradcheck(int d, int r, int k, double eps) {
    if (d > 32) throw ConfigError("gradcheck dim must be <= 32");
    GradCheckReport report = grad_check_model(d, r, k, eps);
    char buf[64];
    for (const GradCheckGroup& g : report.groups) {
        std::snprintf(buf, sizeof buf, "%.6e", g.max_rel_err);
        std::cout << g.group << " max_rel_err " << buf << " worst " << g.worst_param << "\n";
    }
    std::snprintf(buf, sizeof buf, "%.6e", report.max_rel_err);
    std::cout << "overall max_rel_err " << buf << " worst " << report.worst_param << "\n";
    const bool pass = report.max_rel_err <= 1e-5;
    std::cout << (pass ? "PASS" : "FAIL") << " (tolerance 1e-5)\n";
    if (!pass) {
        std::cerr << "gradcheck failed: worst parameter " << report.worst_param << "\n";
        return 3;
    }
    return 0;
}

int cmd_countparams(const Overrides& ov) {
    RunConfig cfg = load_with_overrides(ov);
    const int k = static_cast<int>(cfg.task_kinds.size());
    const int n_sites = cfg.hook_layers.empty() ? cfg.backbone.n_layers
                                                : static_cast<int>(cfg.hook_layers.size());
    const std::int64_t edits = static_cast<std::int64_t>(k) * n_sites *
                               edit_param_count(cfg.rank, cfg.backbone.d);
    const std::int64_t router = cfg.router_enabled ? router_param_count(cfg.backbone.d, k) : 0;
    const std::int64_t total = edits + router;
    const std::int64_t backbone = backbone_param_count(cfg.backbone);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(total) / static_cast<double>(backbone));
    std::cout << "edit_params = " << edits << "\n";
    std::cout << "router_params = " << router << "\n";
    std::cout << "trainable_params = " << total << "\n";
    std::cout << "backbone_params = " << backbone << "\n";
    std::cout << "fraction = " << buf << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"compositional subspace edits with learned routing on a frozen backbone"};
    app.require_subcommand(1);

    Overrides ov;
    app.add_option("--config", ov.config_path, "run configuration file");
    auto* seed_opt = app.add_option("--seed", ov.seed, "override the training seed");
    app.add_option("--out", ov.out_dir, "override the output directory");
    app.add_option("--gate", ov.gate, "override gate mode")->check(CLI::IsMember({"soft", "hard"}));

    CLI::App* train = app.add_subcommand("train", "train edits and router, write checkpoint + log");
    CLI::App* interfere =
        app.add_subcommand("interfere", "run the cross-task interference benchmark");
    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "compare analytic gradients with central differences");
    CLI::App* countparams = app.add_subcommand("countparams", "print trainable parameter counts");

    int gc_dim = 8, gc_rank = 2, gc_tasks = 2;
    double gc_eps = 1e-5;
    gradcheck->add_option("--dim", gc_dim, "hidden dim");
    gradcheck->add_option("--rank", gc_rank, "edit rank");
    gradcheck->add_option("--tasks", gc_tasks, "number of edit sets");
    gradcheck->add_option("--eps", gc_eps, "finite-difference step");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (train->parsed() || interfere->parsed() || countparams->parsed()) {
            if (ov.config_path.empty()) {
                std::cerr << "error: --config is required for this command\n";
                return 1;
            }
        }
        ov.seed_set = seed_opt->count() > 0;
        if (train->parsed()) return cmd_train(ov);
        if (interfere->parsed()) return cmd_interfere(ov);
        if (gradcheck->parsed()) return cmd_gradcheck(gc_dim, gc_rank, gc_tasks, gc_eps);
        if (countparams->parsed()) return cmd_countparams(ov);
    } catch (const NonFiniteLoss& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 2;
    } catch (const NonFinite& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
