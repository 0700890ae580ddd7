// Python bindings for the csreft core library.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>

#include "csreft/checkpoint.hpp"
#include "csreft/config.hpp"
#include "csreft/errors.hpp"
#include "csreft/gradcheck.hpp"
#include "csreft/linalg.hpp"
#include "csreft/taskbench.hpp"

namespace py = pybind11;
using namespace csreft;

namespace {

py::array_t<double> to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<double> out(shape);
    std::copy(t.data.begin(), t.data.end(), out.mutable_data());
    return out;
}

Tensor from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    std::vector<int> shape;
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape.push_back(static_cast<int>(arr.shape(i)));
    std::vector<double> data(arr.data(), arr.data() + arr.size());
    return Tensor(std::move(shape), std::move(data));
}

GateMode gate_mode(const std::string& name) {
    if (name == "soft") return GateMode::kSoft;
    if (name == "hard") return GateMode::kHard;
    throw ConfigError("gate mode must be 'soft' or 'hard'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "compositional subspace edits with learned routing on a frozen toy transformer";

    py::register_exception<ShapeError>(m, "ShapeError");
    py::register_exception<RankDeficient>(m, "RankDeficient");
    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<BudgetError>(m, "BudgetError");
    py::register_exception<CheckpointError>(m, "CheckpointError");

    m.def(
        "orthonormalize_rows",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& mat) {
            return to_array(orthonormalize_rows(from_array(mat)));
        },
        py::arg("matrix"));
    m.def(
        "random_orthonormal",
        [](int r, int d, std::uint64_t seed) { return to_array(random_orthonormal(r, d, seed)); },
        py::arg("r"), py::arg("d"), py::arg("seed"));
    m.def(
        "rowspace_projector",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& mat) {
            return to_array(rowspace_projector(from_array(mat)));
        },
        py::arg("matrix"));

    py::class_<BackboneConfig>(m, "BackboneConfig")
        .def(py::init<>())
        .def_readwrite("vocab_size", &BackboneConfig::vocab_size)
        .def_readwrite("d", &BackboneConfig::d)
        .def_readwrite("n_layers", &BackboneConfig::n_layers)
        .def_readwrite("n_heads", &BackboneConfig::n_heads)
        .def_readwrite("max_seq_len", &BackboneConfig::max_seq_len)
        .def_readwrite("seed", &BackboneConfig::seed);

    py::class_<HookSite>(m, "HookSite")
        .def(py::init([](int layer, std::vector<int> positions) {
                 return HookSite{layer, std::move(positions)};
             }),
             py::arg("layer"), py::arg("positions") = std::vector<int>{})
        .def_readwrite("layer", &HookSite::layer)
        .def_readwrite("positions", &HookSite::positions);

    py::class_<FrozenModel>(m, "FrozenModel")
        .def_property_readonly("config", [](const FrozenModel& f) { return f.config; })
        .def("param_count", &FrozenModel::param_count)
        .def("checksum", &FrozenModel::checksum);
    m.def("build_frozen", &build_frozen, py::arg("config"));
    m.def(
        "plain_logits",
        [](const FrozenModel& model, const std::vector<int>& tokens) {
            return to_array(plain_logits(model, tokens));
        },
        py::arg("model"), py::arg("tokens"));

    py::class_<SubspaceEdit>(m, "SubspaceEdit")
        .def_property_readonly("basis", [](const SubspaceEdit& e) { return to_array(e.basis); })
        .def_property_readonly("coord_map", [](const SubspaceEdit& e) { return to_array(e.coord_map); })
        .def_property_readonly("coord_bias",
                               [](const SubspaceEdit& e) { return to_array(e.coord_bias); })
        .def_property_readonly("rank", &SubspaceEdit::rank)
        .def_property_readonly("dim", &SubspaceEdit::dim)
        .def("orthonormality_error", &SubspaceEdit::orthonormality_error);
    m.def(
        "identity_init",
        [](int r, int d, const HookSite& site, std::uint64_t seed) {
            return identity_init(r, d, site, seed);
        },
        py::arg("r"), py::arg("d"), py::arg("site"), py::arg("seed"));
    m.def(
        "apply_edit",
        [](const SubspaceEdit& e, const py::array_t<double, py::array::c_style | py::array::forcecast>& h) {
            return to_array(apply_edit(e, from_array(h)));
        },
        py::arg("edit"), py::arg("h"));
    m.def(
        "edit_delta",
        [](const SubspaceEdit& e, const py::array_t<double, py::array::c_style | py::array::forcecast>& h) {
            return to_array(edit_delta(e, from_array(h)));
        },
        py::arg("edit"), py::arg("h"));
    m.def("retract", &retract, py::arg("edit"));

    py::class_<RouterNet>(m, "RouterNet")
        .def_property_readonly("w1", [](const RouterNet& r) { return to_array(r.w1); })
        .def_property_readonly("w2", [](const RouterNet& r) { return to_array(r.w2); })
        .def_readwrite("threshold", &RouterNet::threshold);
    m.def("init_router", &init_router, py::arg("d"), py::arg("k"), py::arg("seed"));
    m.def("zero_router", &zero_router, py::arg("d"), py::arg("k"));
    m.def(
        "route",
        [](const RouterNet& r, const py::array_t<double, py::array::c_style | py::array::forcecast>& h) {
            return to_array(route(r, from_array(h)));
        },
        py::arg("router"), py::arg("h_first"));
    m.def(
        "gate",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& alpha,
           const std::string& mode, double threshold) {
            return to_array(gate(from_array(alpha), gate_mode(mode), threshold));
        },
        py::arg("alpha"), py::arg("mode"), py::arg("threshold") = 0.5);
    m.def(
        "compose",
        [](const std::vector<SubspaceEdit>& edits,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& alpha,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& h) {
            return to_array(compose(edits, from_array(alpha), from_array(h)));
        },
        py::arg("edits"), py::arg("alpha"), py::arg("h"));
    m.def(
        "sparsity_penalty",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& alpha) {
            return sparsity_penalty(from_array(alpha));
        },
        py::arg("alpha"));

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("lambda_", &TrainConfig::lambda)
        .def_readwrite("lr", &TrainConfig::lr)
        .def_readwrite("steps", &TrainConfig::steps)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("seed", &TrainConfig::seed);

    py::class_<Example>(m, "Example")
        .def(py::init<>())
        .def_readwrite("task", &Example::task)
        .def_readwrite("tokens", &Example::tokens)
        .def_readwrite("targets", &Example::targets);

    py::class_<TrainState>(m, "TrainState")
        .def_readonly("step", &TrainState::step)
        .def_readonly("loss_history", &TrainState::loss_history)
        .def_property_readonly("edits", [](const TrainState& s) { return s.edits; })
        .def_property_readonly("router", [](const TrainState& s) -> std::optional<RouterNet> {
            return s.router;
        });
    m.def("init_state", &init_state, py::arg("model"), py::arg("k"), py::arg("rank"),
          py::arg("sites"), py::arg("with_router"), py::arg("seed"));
    m.def(
        "train_run",
        [](TrainState& state, const FrozenModel& model, const std::vector<Example>& pool,
           const TrainConfig& config) {
            std::ostringstream log;
            train_run(state, model, pool, config, &log);
            return log.str();
        },
        py::arg("state"), py::arg("model"), py::arg("pool"), py::arg("config"));
    m.def(
        "composed_logits",
        [](const TrainState& state, const FrozenModel& model, const std::vector<int>& tokens,
           const std::string& mode) {
            return to_array(composed_logits(state, model, tokens, gate_mode(mode)));
        },
        py::arg("state"), py::arg("model"), py::arg("tokens"), py::arg("gate_mode") = "soft");
    m.def(
        "eval_loss",
        [](const TrainState& state, const FrozenModel& model, const std::vector<Example>& examples,
           const std::string& mode) { return eval_loss(state, model, examples, gate_mode(mode)); },
        py::arg("state"), py::arg("model"), py::arg("examples"), py::arg("gate_mode") = "soft");
    m.def("eval_frozen", &eval_frozen, py::arg("model"), py::arg("examples"));

    py::class_<TrainableCount>(m, "TrainableCount")
        .def_readonly("edit_params", &TrainableCount::edit_params)
        .def_readonly("router_params", &TrainableCount::router_params)
        .def_readonly("total", &TrainableCount::total)
        .def_readonly("backbone_params", &TrainableCount::backbone_params)
        .def_readonly("fraction", &TrainableCount::fraction);
    m.def("count_trainable", &count_trainable, py::arg("state"), py::arg("model"));
    m.def("edit_param_count", &edit_param_count, py::arg("rank"), py::arg("d"));
    m.def("router_param_count", &router_param_count, py::arg("d"), py::arg("k"));
    m.def("backbone_param_count", &backbone_param_count, py::arg("config"));

    m.def(
        "grad_check_model",
        [](int d, int r, int k, double eps) {
            GradCheckReport rep = grad_check_model(d, r, k, eps);
            py::dict groups;
            for (const GradCheckGroup& g : rep.groups) groups[g.group.c_str()] = g.max_rel_err;
            return py::make_tuple(rep.max_rel_err, rep.worst_param, groups);
        },
        py::arg("d"), py::arg("r"), py::arg("k"), py::arg("eps") = 1e-5);

    py::class_<TaskSpec>(m, "TaskSpec")
        .def(py::init([](const std::string& kind, int id, int seq_len, int vocab, int cue) {
                 TaskSpec s;
                 s.id = id;
                 s.kind = task_kind_from_name(kind);
                 s.seq_len = seq_len;
                 s.vocab = vocab;
                 s.cue = cue;
                 return s;
             }),
             py::arg("kind"), py::arg("id") = 1, py::arg("seq_len") = 8, py::arg("vocab") = 16,
             py::arg("cue") = -1)
        .def_readwrite("id", &TaskSpec::id)
        .def_readwrite("seq_len", &TaskSpec::seq_len)
        .def_readwrite("vocab", &TaskSpec::vocab)
        .def_readwrite("cue", &TaskSpec::cue);
    m.def("task_targets", &task_targets, py::arg("spec"), py::arg("tokens"));
    m.def("gen_task_data", &gen_task_data, py::arg("spec"), py::arg("n"), py::arg("seed"));

    py::class_<InterferenceReport>(m, "InterferenceReport")
        .def_readonly("k", &InterferenceReport::k)
        .def_readonly("task_names", &InterferenceReport::task_names)
        .def_readonly("shared_rank", &InterferenceReport::shared_rank)
        .def_readonly("budget_csreft", &InterferenceReport::budget_csreft)
        .def_readonly("budget_shared", &InterferenceReport::budget_shared)
        .def_readonly("loss_frozen", &InterferenceReport::loss_frozen)
        .def_readonly("loss_specialist", &InterferenceReport::loss_specialist)
        .def_readonly("loss_shared", &InterferenceReport::loss_shared)
        .def_readonly("loss_csreft", &InterferenceReport::loss_csreft)
        .def_readonly("matrix", &InterferenceReport::matrix)
        .def_readonly("diag_dominant", &InterferenceReport::diag_dominant)
        .def_readonly("mean_frozen", &InterferenceReport::mean_frozen)
        .def_readonly("mean_specialist", &InterferenceReport::mean_specialist)
        .def_readonly("mean_shared", &InterferenceReport::mean_shared)
        .def_readonly("mean_csreft", &InterferenceReport::mean_csreft);

    m.def(
        "run_interference_benchmark",
        [](const py::dict& kwargs) {
            BenchmarkConfig b;
            if (kwargs.contains("d")) b.backbone.d = kwargs["d"].cast<int>();
            if (kwargs.contains("vocab")) {
                b.vocab = kwargs["vocab"].cast<int>();
                b.backbone.vocab_size = b.vocab;
            }
            if (kwargs.contains("seq_len")) {
                b.seq_len = kwargs["seq_len"].cast<int>();
                b.backbone.max_seq_len = b.seq_len;
            }
            if (kwargs.contains("layers")) b.backbone.n_layers = kwargs["layers"].cast<int>();
            if (kwargs.contains("heads")) b.backbone.n_heads = kwargs["heads"].cast<int>();
            if (kwargs.contains("rank")) b.rank = kwargs["rank"].cast<int>();
            if (kwargs.contains("steps")) b.train.steps = kwargs["steps"].cast<int>();
            if (kwargs.contains("lr")) b.train.lr = kwargs["lr"].cast<double>();
            if (kwargs.contains("seed")) b.train.seed = kwargs["seed"].cast<std::uint64_t>();
            if (kwargs.contains("examples_per_task")) {
                b.examples_per_task = kwargs["examples_per_task"].cast<int>();
            }
            if (kwargs.contains("kinds")) {
                b.task_kinds.clear();
                for (const auto& item : kwargs["kinds"].cast<py::list>()) {
                    b.task_kinds.push_back(task_kind_from_name(item.cast<std::string>()));
                }
            }
            return run_interference_benchmark(b);
        },
        py::arg("options"));
    m.def("render_report", &render_report, py::arg("report"));

    m.def(
        "save_state",
        [](const TrainState& state, const FrozenModel& model, const std::string& path) {
            save_checkpoint(checkpoint_from_state(state, model), path);
        },
        py::arg("state"), py::arg("model"), py::arg("path"));
    m.def(
        "load_state",
        [](const FrozenModel& model, const std::string& path) {
            return state_from_checkpoint(load_checkpoint(path), model);
        },
        py::arg("model"), py::arg("path"));
}
