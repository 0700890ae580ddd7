#include "csreft/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "csreft/errors.hpp"
#include "csreft/rng.hpp"

namespace csreft {

namespace {

void check_config(const BackboneConfig& c) {
    if (c.vocab_size < 1 || c.d < 1 || c.n_layers < 1 || c.n_heads < 1 || c.max_seq_len < 1) {
        throw ConfigError("backbone dims must all be >= 1");
    }
    if (c.d % c.n_heads != 0) {
        throw ConfigError("hidden dim " + std::to_string(c.d) + " not divisible by " +
                          std::to_string(c.n_heads) + " heads");
    }
}

Tensor gaussian(std::vector<int> shape, double scale, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = scale * rng.gaussian();
    return t;
}

// Positions of a site resolved against a sequence length, validated.
std::vector<int> resolve_positions(const HookSite& site, int n) {
    if (site.all_positions()) {
        std::vector<int> all(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
        return all;
    }
    for (std::size_t i = 0; i < site.positions.size(); ++i) {
        const int p = site.positions[i];
        if (p < 0 || p >= n) {
            throw HookError("hook position " + std::to_string(p) + " outside sequence of length " +
                            std::to_string(n));
        }
        if (i > 0 && p <= site.positions[i - 1]) {
            throw HookError("hook positions must be strictly increasing");
        }
    }
    return site.positions;
}

}  // namespace

std::int64_t FrozenModel::param_count() const {
    std::int64_t n = tok_embed.numel() + pos_embed.numel();
    for (const Block& b : blocks) {
        n += b.ln1_gamma.numel() + b.ln1_beta.numel();
        n += b.wq.numel() + b.wk.numel() + b.wv.numel() + b.wo.numel();
        n += b.ln2_gamma.numel() + b.ln2_beta.numel();
        n += b.w_mlp1.numel() + b.b_mlp1.numel() + b.w_mlp2.numel() + b.b_mlp2.numel();
    }
    n += lnf_gamma.numel() + lnf_beta.numel() + w_out.numel();
    return n;
}

std::uint64_t FrozenModel::checksum() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const Tensor& t) {
        for (double v : t.data) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            h ^= bits;
            h *= 1099511628211ull;
        }
    };
    mix(tok_embed);
    mix(pos_embed);
    for (const Block& b : blocks) {
        mix(b.ln1_gamma);
        mix(b.ln1_beta);
        mix(b.wq);
        mix(b.wk);
        mix(b.wv);
        mix(b.wo);
        mix(b.ln2_gamma);
        mix(b.ln2_beta);
        mix(b.w_mlp1);
        mix(b.b_mlp1);
        mix(b.w_mlp2);
        mix(b.b_mlp2);
    }
    mix(lnf_gamma);
    mix(lnf_beta);
    mix(w_out);
    return h;
}

FrozenModel build_frozen(const BackboneConfig& config) {
    check_config(config);
    Rng rng(config.seed);
    const int d = config.d;
    const int m = 4 * d;
    const double ws = 1.0 / std::sqrt(static_cast<double>(d));

    FrozenModel model;
    model.config = config;
    model.tok_embed = gaussian({config.vocab_size, d}, 1.0, rng);
    model.pos_embed = gaussian({config.max_seq_len, d}, 1.0, rng);
    model.blocks.resize(static_cast<std::size_t>(config.n_layers));
    for (auto& b : model.blocks) {
        b.ln1_gamma = Tensor::full({d}, 1.0);
        b.ln1_beta = Tensor::zeros({d});
        b.wq = gaussian({d, d}, ws, rng);
        b.wk = gaussian({d, d}, ws, rng);
        b.wv = gaussian({d, d}, ws, rng);
        b.wo = gaussian({d, d}, ws, rng);
        b.ln2_gamma = Tensor::full({d}, 1.0);
        b.ln2_beta = Tensor::zeros({d});
        b.w_mlp1 = gaussian({d, m}, ws, rng);
        b.b_mlp1 = Tensor::zeros({m});
        b.w_mlp2 = gaussian({m, d}, 1.0 / std::sqrt(static_cast<double>(m)), rng);
        b.b_mlp2 = Tensor::zeros({d});
    }
    model.lnf_gamma = Tensor::full({d}, 1.0);
    model.lnf_beta = Tensor::zeros({d});
    model.w_out = gaussian({d, config.vocab_size}, ws, rng);
    return model;
}

HookedForwardResult forward_with_hooks(
    Tape& tape, const FrozenModel& model, const std::vector<int>& tokens,
    const std::vector<std::pair<HookSite, EditFn>>& hooks,
    const std::vector<std::pair<int, ObserverFn>>& observers) {
    const BackboneConfig& cfg = model.config;
    const int n = static_cast<int>(tokens.size());
    if (n < 1 || n > cfg.max_seq_len) {
        throw ShapeError("sequence length " + std::to_string(n) + " outside [1," +
                         std::to_string(cfg.max_seq_len) + "]");
    }
    for (int t : tokens) {
        if (t < 0 || t >= cfg.vocab_size) {
            throw ShapeError("token id " + std::to_string(t) + " outside vocab");
        }
    }
    for (const auto& [site, fn] : hooks) {
        (void)fn;
        if (site.layer < 0 || site.layer >= cfg.n_layers) {
            throw HookError("hook layer " + std::to_string(site.layer) + " outside [0," +
                            std::to_string(cfg.n_layers) + ")");
        }
        resolve_positions(site, n);
    }

    const int d = cfg.d;
    const int heads = cfg.n_heads;
    const int dh = d / heads;

    NodeId tok_e = tape.constant(model.tok_embed);
    NodeId pos_e = tape.constant(model.pos_embed);
    NodeId h = tape.add(tape.embedding(tok_e, tokens), tape.slice(pos_e, 0, 0, n));

    HookedForwardResult result;

    for (int layer = 0; layer < cfg.n_layers; ++layer) {
        const auto& blk = model.blocks[static_cast<std::size_t>(layer)];

        // attention sublayer
        NodeId x1 = tape.add(tape.mul(tape.layernorm(h), tape.constant(blk.ln1_gamma)),
                             tape.constant(blk.ln1_beta));
        NodeId q = tape.matmul(x1, tape.constant(blk.wq));
        NodeId k = tape.matmul(x1, tape.constant(blk.wk));
        NodeId v = tape.matmul(x1, tape.constant(blk.wv));
        std::vector<NodeId> head_outputs;
        head_outputs.reserve(static_cast<std::size_t>(heads));
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        for (int hd = 0; hd < heads; ++hd) {
            NodeId qh = tape.slice(q, 1, hd * dh, dh);
            NodeId kh = tape.slice(k, 1, hd * dh, dh);
            NodeId vh = tape.slice(v, 1, hd * dh, dh);
            NodeId scores = tape.scalar_mul(tape.matmul(qh, kh, false, true), scale);
            NodeId attn = tape.softmax(scores);
            head_outputs.push_back(tape.matmul(attn, vh));
        }
        NodeId merged = heads == 1 ? head_outputs[0] : tape.concat(head_outputs, 1);
        h = tape.add(h, tape.matmul(merged, tape.constant(blk.wo)));

        // mlp sublayer
        NodeId x2 = tape.add(tape.mul(tape.layernorm(h), tape.constant(blk.ln2_gamma)),
                             tape.constant(blk.ln2_beta));
        NodeId act = tape.relu(tape.add(tape.matmul(x2, tape.constant(blk.w_mlp1)),
                                        tape.constant(blk.b_mlp1)));
        h = tape.add(h, tape.add(tape.matmul(act, tape.constant(blk.w_mlp2)),
                                 tape.constant(blk.b_mlp2)));

        for (const auto& [obs_layer, fn] : observers) {
            if (obs_layer == layer) fn(tape, h);
        }

        for (const auto& [site, fn] : hooks) {
            if (site.layer != layer) continue;
            std::vector<int> pos = resolve_positions(site, n);
            NodeId pre;
            if (static_cast<int>(pos.size()) == n) {
                pre = h;
            } else {
                // gather the hooked rows; positions are grouped into
                // consecutive runs to keep the node count small
                std::vector<NodeId> parts;
                std::size_t i = 0;
                while (i < pos.size()) {
                    std::size_t j = i + 1;
                    while (j < pos.size() && pos[j] == pos[j - 1] + 1) ++j;
                    parts.push_back(tape.slice(h, 0, pos[i], static_cast<int>(j - i)));
                    i = j;
                }
                pre = parts.size() == 1 ? parts[0] : tape.concat(parts, 0);
            }
            result.hidden_log.emplace_back(site, tape.value(pre));

            NodeId edited = fn(tape, pre);
            if (!(tape.value(edited).same_shape(tape.value(pre)))) {
                throw HookError("edit callback returned shape " + tape.value(edited).shape_str() +
                                ", expected " + tape.value(pre).shape_str());
            }

            if (static_cast<int>(pos.size()) == n) {
                h = edited;
            } else {
                // splice edited rows back at their positions
                std::vector<NodeId> rows;
                int consumed = 0;
                int cursor = 0;
                for (std::size_t pi = 0; pi <= pos.size(); ++pi) {
                    const int next = pi < pos.size() ? pos[pi] : n;
                    if (cursor < next) {
                        rows.push_back(tape.slice(h, 0, cursor, next - cursor));
                        cursor = next;
                    }
                    if (pi < pos.size()) {
                        rows.push_back(tape.slice(edited, 0, consumed, 1));
                        ++consumed;
                        cursor = next + 1;
                    }
                }
                h = rows.size() == 1 ? rows[0] : tape.concat(rows, 0);
            }
        }
    }

    NodeId xf = tape.add(tape.mul(tape.layernorm(h), tape.constant(model.lnf_gamma)),
                         tape.constant(model.lnf_beta));
    result.logits = tape.matmul(xf, tape.constant(model.w_out));
    return result;
}

Tensor plain_logits(const FrozenModel& model, const std::vector<int>& tokens) {
    Tape tape;
    return tape.value(forward_with_hooks(tape, model, tokens, {}).logits);
}

}  // namespace csreft
