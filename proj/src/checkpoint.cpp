#include "csreft/checkpoint.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "csreft/errors.hpp"

namespace csreft {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'R', 'F'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_u64(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    bool eof() const { return pos >= buf.size(); }

    void need(std::size_t n) {
        if (pos + n > buf.size()) {
            throw TruncatedFile("checkpoint ends " + std::to_string(pos + n - buf.size()) +
                                " bytes early");
        }
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }

    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

const std::string* Checkpoint::find_header(const std::string& key) const {
    for (const auto& [k, v] : header) {
        if (k == key) return &v;
    }
    return nullptr;
}

const Tensor* Checkpoint::find_tensor(const std::string& name) const {
    for (const auto& [k, v] : tensors) {
        if (k == name) return &v;
    }
    return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::string header_text;
    for (const auto& [k, v] : ckpt.header) header_text += k + " = " + v + "\n";

    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(header_text.size()));
    out += header_text;
    for (const auto& [name, tensor] : ckpt.tensors) {
        put_u64(out, name.size());
        out += name;
        put_u64(out, static_cast<std::uint64_t>(tensor.shape.size()));
        for (int d : tensor.shape) put_u64(out, static_cast<std::uint64_t>(d));
        for (double v : tensor.data) put_f64(out, v);
    }

    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open '" + tmp + "' for writing");
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) throw IoError("short write to '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    const std::string buf = ss.str();

    Reader r{buf};
    const std::string magic = r.bytes(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0) {
        throw BadMagic("'" + path + "' is not a checkpoint (magic mismatch)");
    }
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw VersionMismatch("checkpoint version " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion));
    }
    const std::uint32_t header_len = r.u32();
    const std::string header_text = r.bytes(header_len);

    Checkpoint ckpt;
    std::istringstream hs(header_text);
    std::string line;
    while (std::getline(hs, line)) {
        const std::size_t eq = line.find(" = ");
        if (eq == std::string::npos) continue;
        ckpt.header.emplace_back(line.substr(0, eq), line.substr(eq + 3));
    }

    while (!r.eof()) {
        const std::uint64_t name_len = r.u64();
        const std::string name = r.bytes(name_len);
        const std::uint64_t rank = r.u64();
        if (rank > 8) throw TruncatedFile("implausible tensor rank " + std::to_string(rank));
        std::vector<int> shape;
        std::uint64_t numel = 1;
        for (std::uint64_t i = 0; i < rank; ++i) {
            const std::uint64_t dim = r.u64();
            shape.push_back(static_cast<int>(dim));
            numel *= dim;
        }
        std::vector<double> data(numel);
        r.need(numel * 8);
        for (std::uint64_t i = 0; i < numel; ++i) data[i] = r.f64();
        ckpt.tensors.emplace_back(name, Tensor(std::move(shape), std::move(data)));
    }
    return ckpt;
}

namespace {

std::string sites_to_string(const std::vector<HookSite>& sites) {
    std::ostringstream os;
    for (std::size_t i = 0; i < sites.size(); ++i) {
        if (i) os << ";";
        os << sites[i].layer << ":";
        if (sites[i].all_positions()) {
            os << "all";
        } else {
            for (std::size_t p = 0; p < sites[i].positions.size(); ++p) {
                os << (p ? "," : "") << sites[i].positions[p];
            }
        }
    }
    return os.str();
}

std::vector<HookSite> sites_from_string(const std::string& text) {
    std::vector<HookSite> sites;
    std::istringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ';')) {
        const std::size_t colon = part.find(':');
        if (colon == std::string::npos) throw CheckpointError("bad sites header entry '" + part + "'");
        HookSite site;
        site.layer = std::stoi(part.substr(0, colon));
        const std::string pos = part.substr(colon + 1);
        if (pos != "all") {
            std::istringstream ps(pos);
            std::string tok;
            while (std::getline(ps, tok, ',')) site.positions.push_back(std::stoi(tok));
        }
        sites.push_back(std::move(site));
    }
    return sites;
}

}  // namespace

Checkpoint checkpoint_from_state(const TrainState& state, const FrozenModel& model,
                                 std::vector<std::pair<std::string, std::string>> extra_header) {
    Checkpoint ckpt;
    const int k = state.n_tasks();
    const int n_sites = static_cast<int>(state.sites.size());
    const int rank = state.edits.empty() || state.edits[0].empty() ? 0 : state.edits[0][0].rank();
    ckpt.header = {
        {"format", "csreft-checkpoint"},
        {"dim", std::to_string(model.config.d)},
        {"k", std::to_string(k)},
        {"rank", std::to_string(rank)},
        {"sites", sites_to_string(state.sites)},
        {"router", state.router ? "1" : "0"},
        {"route_input", state.route_input == RouteInput::kFirstToken ? "first_token" : "mean_pool"},
        {"threshold", state.router ? std::to_string(state.router->threshold) : "0.5"},
        {"step", std::to_string(state.step)},
        {"backbone_seed", std::to_string(model.config.seed)},
    };
    for (auto& kv : extra_header) ckpt.header.push_back(std::move(kv));
    (void)n_sites;
    for (std::size_t t = 0; t < state.edits.size(); ++t) {
        for (std::size_t s = 0; s < state.edits[t].size(); ++s) {
            const std::string tag = "edit." + std::to_string(t) + "." + std::to_string(s);
            ckpt.tensors.emplace_back(tag + ".R", state.edits[t][s].basis);
            ckpt.tensors.emplace_back(tag + ".W", state.edits[t][s].coord_map);
            ckpt.tensors.emplace_back(tag + ".b", state.edits[t][s].coord_bias);
        }
    }
    if (state.router) {
        ckpt.tensors.emplace_back("router.W1", state.router->w1);
        ckpt.tensors.emplace_back("router.b1", state.router->b1);
        ckpt.tensors.emplace_back("router.W2", state.router->w2);
        ckpt.tensors.emplace_back("router.b2", state.router->b2);
    }
    for (std::size_t i = 0; i < state.adam_m.size(); ++i) {
        ckpt.tensors.emplace_back("adam.m." + std::to_string(i), state.adam_m[i]);
        ckpt.tensors.emplace_back("adam.v." + std::to_string(i), state.adam_v[i]);
    }
    return ckpt;
}

TrainState state_from_checkpoint(const Checkpoint& ckpt, const FrozenModel& model) {
    auto header_or_throw = [&](const std::string& key) {
        const std::string* v = ckpt.find_header(key);
        if (!v) throw CheckpointError("checkpoint header missing '" + key + "'");
        return *v;
    };
    auto tensor_or_throw = [&](const std::string& name) {
        const Tensor* t = ckpt.find_tensor(name);
        if (!t) throw CheckpointError("checkpoint missing tensor '" + name + "'");
        return *t;
    };

    const int d = std::stoi(header_or_throw("dim"));
    if (d != model.config.d) {
        throw CheckpointError("checkpoint dim " + std::to_string(d) + " does not match model dim " +
                              std::to_string(model.config.d));
    }
    const int k = std::stoi(header_or_throw("k"));
    const bool with_router = header_or_throw("router") == "1";

    TrainState state;
    if (const std::string* ri = ckpt.find_header("route_input")) {
        state.route_input = *ri == "mean_pool" ? RouteInput::kMeanPool : RouteInput::kFirstToken;
    }
    state.sites = sites_from_string(header_or_throw("sites"));
    state.step = std::stoi(header_or_throw("step"));
    state.edits.resize(static_cast<std::size_t>(k));
    for (int t = 0; t < k; ++t) {
        for (std::size_t s = 0; s < state.sites.size(); ++s) {
            const std::string tag = "edit." + std::to_string(t) + "." + std::to_string(s);
            SubspaceEdit e;
            e.basis = tensor_or_throw(tag + ".R");
            e.coord_map = tensor_or_throw(tag + ".W");
            e.coord_bias = tensor_or_throw(tag + ".b");
            e.site = state.sites[s];
            state.edits[static_cast<std::size_t>(t)].push_back(std::move(e));
        }
    }
    if (with_router) {
        RouterNet r;
        r.w1 = tensor_or_throw("router.W1");
        r.b1 = tensor_or_throw("router.b1");
        r.w2 = tensor_or_throw("router.W2");
        r.b2 = tensor_or_throw("router.b2");
        r.threshold = std::stod(header_or_throw("threshold"));
        state.router = std::move(r);
    }
    std::size_t idx = 0;
    while (const Tensor* m = ckpt.find_tensor("adam.m." + std::to_string(idx))) {
        state.adam_m.push_back(*m);
        state.adam_v.push_back(tensor_or_throw("adam.v." + std::to_string(idx)));
        ++idx;
    }
    return state;
}

}  // namespace csreft
