#include "csreft/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "csreft/errors.hpp"

namespace csreft {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

long long parse_int(const std::string& field, const std::string& value) {
    try {
        std::size_t used = 0;
        long long v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError(field + ": '" + value + "' is not an integer");
    }
}

std::uint64_t parse_u64(const std::string& field, const std::string& value) {
    try {
        std::size_t used = 0;
        unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError(field + ": '" + value + "' is not an unsigned integer");
    }
}

double parse_double(const std::string& field, const std::string& value) {
    try {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError(field + ": '" + value + "' is not a number");
    }
}

bool parse_bool(const std::string& field, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError(field + ": '" + value + "' is not a boolean");
}

GateMode parse_gate(const std::string& field, const std::string& value) {
    if (value == "soft") return GateMode::kSoft;
    if (value == "hard") return GateMode::kHard;
    throw ConfigError(field + ": '" + value + "' must be soft or hard");
}

std::vector<int> parse_int_list(const std::string& field, const std::string& value) {
    std::vector<int> out;
    if (value == "all") return out;
    std::istringstream ss(value);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        out.push_back(static_cast<int>(parse_int(field, trim(tok))));
    }
    if (out.empty()) throw ConfigError(field + ": empty list");
    return out;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream ss(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const std::size_t comment = line.find('#');
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            if (section != "backbone" && section != "intervention" && section != "router" &&
                section != "train" && section != "tasks" && section != "output") {
                throw ConfigError("unknown section '[" + section + "]'");
            }
            continue;
        }

        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const std::string field = section.empty() ? key : section + "." + key;
        if (section.empty()) throw ConfigError("key '" + key + "' outside any section");

        if (section == "backbone") {
            if (key == "vocab_size") cfg.backbone.vocab_size = static_cast<int>(parse_int(field, value));
            else if (key == "dim") cfg.backbone.d = static_cast<int>(parse_int(field, value));
            else if (key == "layers") cfg.backbone.n_layers = static_cast<int>(parse_int(field, value));
            else if (key == "heads") cfg.backbone.n_heads = static_cast<int>(parse_int(field, value));
            else if (key == "max_seq_len") cfg.backbone.max_seq_len = static_cast<int>(parse_int(field, value));
            else if (key == "seed") cfg.backbone.seed = parse_u64(field, value);
            else throw ConfigError("unknown key '" + field + "'");
        } else if (section == "intervention") {
            if (key == "rank") cfg.rank = static_cast<int>(parse_int(field, value));
            else if (key == "layers") cfg.hook_layers = parse_int_list(field, value);
            else if (key == "positions") cfg.hook_positions = parse_int_list(field, value);
            else throw ConfigError("unknown key '" + field + "'");
        } else if (section == "router") {
            if (key == "enabled") cfg.router_enabled = parse_bool(field, value);
            else if (key == "threshold") cfg.threshold = parse_double(field, value);
            else if (key == "input") {
                if (value == "first_token") cfg.route_input = RouteInput::kFirstToken;
                else if (value == "mean_pool") cfg.route_input = RouteInput::kMeanPool;
                else throw ConfigError(field + ": '" + value + "' must be first_token or mean_pool");
            } else if (key == "eval_gate") cfg.eval_gate = parse_gate(field, value);
            else throw ConfigError("unknown key '" + field + "'");
        } else if (section == "train") {
            if (key == "steps") cfg.train.steps = static_cast<int>(parse_int(field, value));
            else if (key == "batch_size") cfg.train.batch_size = static_cast<int>(parse_int(field, value));
            else if (key == "lr") cfg.train.lr = parse_double(field, value);
            else if (key == "lambda") cfg.train.lambda = parse_double(field, value);
            else if (key == "seed") cfg.train.seed = parse_u64(field, value);
            else if (key == "gate_mode") cfg.train.gate_mode_train = parse_gate(field, value);
            else if (key == "adam_beta1") cfg.train.adam_beta1 = parse_double(field, value);
            else if (key == "adam_beta2") cfg.train.adam_beta2 = parse_double(field, value);
            else if (key == "adam_eps") cfg.train.adam_eps = parse_double(field, value);
            else throw ConfigError("unknown key '" + field + "'");
        } else if (section == "tasks") {
            if (key == "kinds") {
                cfg.task_kinds.clear();
                std::istringstream ks(value);
                std::string tok;
                while (std::getline(ks, tok, ',')) cfg.task_kinds.push_back(task_kind_from_name(trim(tok)));
                if (cfg.task_kinds.empty()) throw ConfigError("tasks.kinds: empty list");
            } else if (key == "seq_len") cfg.seq_len = static_cast<int>(parse_int(field, value));
            else if (key == "vocab") cfg.vocab = static_cast<int>(parse_int(field, value));
            else if (key == "cue_tokens") cfg.cue_tokens = parse_bool(field, value);
            else if (key == "examples_per_task") cfg.examples_per_task = static_cast<int>(parse_int(field, value));
            else if (key == "holdout_fraction") cfg.holdout_fraction = parse_double(field, value);
            else throw ConfigError("unknown key '" + field + "'");
        } else if (section == "output") {
            if (key == "dir") cfg.out_dir = value;
            else throw ConfigError("unknown key '" + field + "'");
        }
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_run_config(ss.str());
}

void RunConfig::validate() const {
    if (backbone.vocab_size < 1 || backbone.d < 1 || backbone.n_layers < 1 || backbone.n_heads < 1 ||
        backbone.max_seq_len < 1) {
        throw ConfigError("backbone dims must all be >= 1");
    }
    if (backbone.d % backbone.n_heads != 0) {
        throw ConfigError("backbone.dim must be divisible by backbone.heads");
    }
    if (rank < 1 || rank > backbone.d) throw ConfigError("intervention.rank outside [1, backbone.dim]");
    for (int l : hook_layers) {
        if (l < 0 || l >= backbone.n_layers) throw ConfigError("intervention.layers entry outside model");
    }
    for (int p : hook_positions) {
        if (p < 0 || p >= seq_len) throw ConfigError("intervention.positions entry outside sequence");
    }
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("router.threshold outside [0,1]");
    train.validate();
    if (task_kinds.empty()) throw ConfigError("tasks.kinds must name at least one task");
    if (vocab < 2) throw ConfigError("tasks.vocab must be >= 2");
    if (vocab > backbone.vocab_size) throw ConfigError("tasks.vocab exceeds backbone.vocab_size");
    if (seq_len < 1 || seq_len > backbone.max_seq_len) {
        throw ConfigError("tasks.seq_len outside [1, backbone.max_seq_len]");
    }
    if (examples_per_task < 4) throw ConfigError("tasks.examples_per_task must be >= 4");
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
        throw ConfigError("tasks.holdout_fraction must lie in (0,1)");
    }
    if (out_dir.empty()) throw ConfigError("output.dir must not be empty");
}

BenchmarkConfig RunConfig::benchmark() const {
    BenchmarkConfig b;
    b.backbone = backbone;
    b.task_kinds = task_kinds;
    b.seq_len = seq_len;
    b.vocab = vocab;
    b.cue_tokens = cue_tokens;
    b.rank = rank;
    b.hook_layers = hook_layers;
    b.hook_positions = hook_positions;
    b.examples_per_task = examples_per_task;
    b.holdout_fraction = holdout_fraction;
    b.train = train;
    b.eval_gate = eval_gate;
    b.route_input = route_input;
    return b;
}

std::string render_run_config(const RunConfig& c) {
    std::ostringstream os;
    auto num = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    auto list = [](const std::vector<int>& v) {
        if (v.empty()) return std::string("all");
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
        return s;
    };
    os << "[backbone]\n";
    os << "vocab_size = " << c.backbone.vocab_size << "\n";
    os << "dim = " << c.backbone.d << "\n";
    os << "layers = " << c.backbone.n_layers << "\n";
    os << "heads = " << c.backbone.n_heads << "\n";
    os << "max_seq_len = " << c.backbone.max_seq_len << "\n";
    os << "seed = " << c.backbone.seed << "\n";
    os << "\n[intervention]\n";
    os << "rank = " << c.rank << "\n";
    os << "layers = " << list(c.hook_layers) << "\n";
    os << "positions = " << list(c.hook_positions) << "\n";
    os << "\n[router]\n";
    os << "enabled = " << (c.router_enabled ? "true" : "false") << "\n";
    os << "threshold = " << num(c.threshold) << "\n";
    os << "input = " << (c.route_input == RouteInput::kFirstToken ? "first_token" : "mean_pool")
       << "\n";
    os << "eval_gate = " << (c.eval_gate == GateMode::kSoft ? "soft" : "hard") << "\n";
    os << "\n[train]\n";
    os << "steps = " << c.train.steps << "\n";
    os << "batch_size = " << c.train.batch_size << "\n";
    os << "lr = " << num(c.train.lr) << "\n";
    os << "lambda = " << num(c.train.lambda) << "\n";
    os << "seed = " << c.train.seed << "\n";
    os << "gate_mode = " << (c.train.gate_mode_train == GateMode::kSoft ? "soft" : "hard") << "\n";
    os << "adam_beta1 = " << num(c.train.adam_beta1) << "\n";
    os << "adam_beta2 = " << num(c.train.adam_beta2) << "\n";
    os << "adam_eps = " << num(c.train.adam_eps) << "\n";
    os << "\n[tasks]\n";
    os << "kinds = ";
    for (std::size_t i = 0; i < c.task_kinds.size(); ++i) {
        os << (i ? "," : "") << task_kind_name(c.task_kinds[i]);
    }
    os << "\n";
    os << "seq_len = " << c.seq_len << "\n";
    os << "vocab = " << c.vocab << "\n";
    os << "cue_tokens = " << (c.cue_tokens ? "true" : "false") << "\n";
    os << "examples_per_task = " << c.examples_per_task << "\n";
    os << "holdout_fraction = " << num(c.holdout_fraction) << "\n";
    os << "\n[output]\n";
    os << "dir = " << c.out_dir << "\n";
    return os.str();
}

}  // namespace csreft
