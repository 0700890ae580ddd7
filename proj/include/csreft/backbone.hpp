#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "csreft/tape.hpp"
#include "csreft/tensor.hpp"

namespace csreft {

struct BackboneConfig {
    int vocab_size = 16;
    int d = 16;
    int n_layers = 2;
    int n_heads = 4;
    int max_seq_len = 8;
    std::uint64_t seed = 1;
};

// Residual-stream location: a layer's post-block output restricted to a set
// of token positions. An empty position list means every position.
struct HookSite {
    int layer = 0;
    std::vector<int> positions;

    bool all_positions() const { return positions.empty(); }
    bool operator==(const HookSite&) const = default;
};

// Frozen toy transformer: learned token + position embeddings, pre-norm
// blocks with bidirectional multi-head attention and a 4d ReLU MLP, final
// layernorm, linear readout. Parameters never change after build_frozen.
struct FrozenModel {
    BackboneConfig config;
    Tensor tok_embed;  // vocab x d
    Tensor pos_embed;  // max_seq_len x d

    struct Block {
        Tensor ln1_gamma, ln1_beta;
        Tensor wq, wk, wv, wo;        // d x d each
        Tensor ln2_gamma, ln2_beta;
        Tensor w_mlp1, b_mlp1;        // d x 4d, 4d
        Tensor w_mlp2, b_mlp2;        // 4d x d, d
    };
    std::vector<Block> blocks;

    Tensor lnf_gamma, lnf_beta;
    Tensor w_out;  // d x vocab

    std::int64_t param_count() const;
    // Order-stable checksum over every parameter byte; used by the freeze
    // invariant tests.
    std::uint64_t checksum() const;
};

FrozenModel build_frozen(const BackboneConfig& config);

// Edit callback: receives the (p x d) pre-edit hidden rows at a site and
// returns the replacement node of the same shape.
using EditFn = std::function<NodeId(Tape&, NodeId)>;

// Observer callback: sees the full (n x d) post-block hidden state of a
// layer before any edit at that layer is applied. Used for routing.
using ObserverFn = std::function<void(Tape&, NodeId)>;

struct HookedForwardResult {
    NodeId logits = -1;                                 // n x vocab
    std::vector<std::pair<HookSite, Tensor>> hidden_log;  // pre-edit rows per site
};

// Forward pass over one token sequence with optional residual-stream edits.
// Hooks fire in layer order; at one layer, observers fire before edits.
// Throws HookError when a callback returns a wrong-shaped node.
HookedForwardResult forward_with_hooks(
    Tape& tape, const FrozenModel& model, const std::vector<int>& tokens,
    const std::vector<std::pair<HookSite, EditFn>>& hooks,
    const std::vector<std::pair<int, ObserverFn>>& observers = {});

// Convenience: plain forward, values only.
Tensor plain_logits(const FrozenModel& model, const std::vector<int>& tokens);

}  // namespace csreft
